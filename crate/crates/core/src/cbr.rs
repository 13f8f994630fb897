//! Compressed beamforming report codec.
//!
//! Payload layout, bit-exact: for each parametrized column `i = 1..m`
//! (`m = min(n_s, n_t - 1)`), first the `n_t - i` phase indices at `b_phi`
//! bits each, then the `n_t - i` mixing indices at `b_psi` bits each.
//! Fields are packed most-significant-bit first and the final byte is
//! zero-padded. Files of concatenated frames carry a 4-byte little-endian
//! payload length before each frame.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::givens::angle_count;

pub const MAX_FIELD_BITS: u32 = 16;

/// Payload size for a report: total bits and the padded byte count.
pub fn payload_len(n_t: usize, n_s: usize, b_phi: u32, b_psi: u32) -> (usize, usize) {
    let n_tot = angle_count(n_t, n_s);
    let bits = n_tot * (b_phi + b_psi) as usize;
    (bits, bits.div_ceil(8))
}

fn check_widths(b_phi: u32, b_psi: u32) -> Result<()> {
    for (name, b) in [("b_phi", b_phi), ("b_psi", b_psi)] {
        if b == 0 || b > MAX_FIELD_BITS {
            return Err(Error::InvalidInput(format!(
                "{name} must be in 1..={MAX_FIELD_BITS}, got {b}"
            )));
        }
    }
    Ok(())
}

struct BitWriter {
    bytes: Vec<u8>,
    used: usize,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            used: 0,
        }
    }

    fn push(&mut self, value: u32, width: u32) {
        for k in (0..width).rev() {
            let bit = (value >> k) & 1;
            if self.used.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if bit == 1 {
                let byte = self.used / 8;
                self.bytes[byte] |= 1 << (7 - self.used % 8);
            }
            self.used += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn pull(&mut self, width: u32) -> u32 {
        let mut v = 0u32;
        for _ in 0..width {
            let byte = self.bytes[self.pos / 8];
            let bit = (byte >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | bit as u32;
            self.pos += 1;
        }
        v
    }
}

/// Packs quantized angle indices into a report payload.
pub fn encode(
    phi_indices: &[u32],
    psi_indices: &[u32],
    n_t: usize,
    n_s: usize,
    b_phi: u32,
    b_psi: u32,
) -> Result<Vec<u8>> {
    check_widths(b_phi, b_psi)?;
    let n_tot = angle_count(n_t, n_s);
    if phi_indices.len() != n_tot || psi_indices.len() != n_tot {
        return Err(Error::Encode(format!(
            "expected {n_tot} indices per family for {n_t}x{n_s}, got {} phases and {} mixings",
            phi_indices.len(),
            psi_indices.len()
        )));
    }
    for (name, width, idx) in [("phi", b_phi, phi_indices), ("psi", b_psi, psi_indices)] {
        let max = 1u32 << width;
        if let Some(&bad) = idx.iter().find(|&&v| v >= max) {
            return Err(Error::Encode(format!(
                "{name} index {bad} exceeds {width}-bit range"
            )));
        }
    }

    let mut w = BitWriter::new();
    let m = n_s.min(n_t - 1);
    let mut off = 0;
    for i in 1..=m {
        let group = n_t - i;
        for k in 0..group {
            w.push(phi_indices[off + k], b_phi);
        }
        for k in 0..group {
            w.push(psi_indices[off + k], b_psi);
        }
        off += group;
    }
    Ok(w.bytes)
}

/// Unpacks a report payload into `(phi_indices, psi_indices)`.
///
/// The payload may be longer than required; extra bytes are ignored. In
/// strict mode the pad bits of the last in-range byte must be zero.
pub fn decode(
    payload: &[u8],
    n_t: usize,
    n_s: usize,
    b_phi: u32,
    b_psi: u32,
    strict: bool,
) -> Result<(Vec<u32>, Vec<u32>)> {
    check_widths(b_phi, b_psi)?;
    let (bits, bytes) = payload_len(n_t, n_s, b_phi, b_psi);
    if payload.len() < bytes {
        return Err(Error::Truncated {
            need: bytes,
            got: payload.len(),
        });
    }
    if strict && bits % 8 != 0 {
        let pad = 8 - bits % 8;
        let last = payload[bytes - 1];
        if last & ((1u8 << pad) - 1) != 0 {
            return Err(Error::Padding);
        }
    }

    let n_tot = angle_count(n_t, n_s);
    let mut phi = Vec::with_capacity(n_tot);
    let mut psi = Vec::with_capacity(n_tot);
    let mut r = BitReader::new(payload);
    let m = n_s.min(n_t - 1);
    for i in 1..=m {
        let group = n_t - i;
        for _ in 0..group {
            phi.push(r.pull(b_phi));
        }
        for _ in 0..group {
            psi.push(r.pull(b_psi));
        }
    }
    Ok((phi, psi))
}

/// A decoded or to-be-sent report: shape, field widths, indices, payload.
#[derive(Clone, Debug, PartialEq)]
pub struct CbrFrame {
    pub n_t: usize,
    pub n_s: usize,
    pub b_phi: u32,
    pub b_psi: u32,
    pub phi_indices: Vec<u32>,
    pub psi_indices: Vec<u32>,
    pub payload: Vec<u8>,
}

impl CbrFrame {
    pub fn from_indices(
        n_t: usize,
        n_s: usize,
        b_phi: u32,
        b_psi: u32,
        phi_indices: Vec<u32>,
        psi_indices: Vec<u32>,
    ) -> Result<Self> {
        let payload = encode(&phi_indices, &psi_indices, n_t, n_s, b_phi, b_psi)?;
        Ok(Self {
            n_t,
            n_s,
            b_phi,
            b_psi,
            phi_indices,
            psi_indices,
            payload,
        })
    }

    pub fn from_payload(
        payload: Vec<u8>,
        n_t: usize,
        n_s: usize,
        b_phi: u32,
        b_psi: u32,
        strict: bool,
    ) -> Result<Self> {
        let (phi, psi) = decode(&payload, n_t, n_s, b_phi, b_psi, strict)?;
        Ok(Self {
            n_t,
            n_s,
            b_phi,
            b_psi,
            phi_indices: phi,
            psi_indices: psi,
            payload,
        })
    }
}

/// Writes frames as `[u32 LE payload length][payload bytes]` records.
pub fn write_frame_stream<'a, W: Write>(
    frames: impl IntoIterator<Item = &'a [u8]>,
    out: &mut W,
) -> Result<()> {
    for payload in frames {
        let len = u32::try_from(payload.len())
            .map_err(|_| Error::Encode("frame payload exceeds u32 length".into()))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(payload)?;
    }
    Ok(())
}

/// Reads every length-prefixed frame payload from a stream.
pub fn read_frame_stream<R: Read>(input: &mut R) -> Result<Vec<Vec<u8>>> {
    let mut frames = Vec::new();
    let mut header = [0u8; 4];
    loop {
        match input.read_exact(&mut header) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let len = u32::from_le_bytes(header) as usize;
        let mut payload = vec![0u8; len];
        input.read_exact(&mut payload).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated {
                    need: len,
                    got: frames.len(),
                }
            } else {
                e.into()
            }
        })?;
        frames.push(payload);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_all_zero_two_by_one() {
        let out = encode(&[0], &[0], 2, 1, 6, 3).unwrap();
        assert_eq!(out, vec![0x00, 0x00]);
        assert_eq!(payload_len(2, 1, 6, 3), (9, 2));
    }

    #[test]
    fn encode_max_indices_two_by_one() {
        let out = encode(&[63], &[7], 2, 1, 6, 3).unwrap();
        assert_eq!(out, vec![0xFF, 0x80]);
    }

    #[test]
    fn decode_inverse_of_encode_example() {
        let (phi, psi) = decode(&[0xFF, 0x80], 2, 1, 6, 3, true).unwrap();
        assert_eq!(phi, vec![63]);
        assert_eq!(psi, vec![7]);
    }

    #[test]
    fn payload_bits_follow_angle_count() {
        // (4, 2) has 5 angles per family.
        let (bits, _) = payload_len(4, 2, 6, 3);
        assert_eq!(bits, 5 * 9);
        for n_t in 1..=8usize {
            for n_s in 1..=n_t.min(4) {
                for b in 1..=9u32 {
                    let n_tot = n_s * n_t - n_s * (n_s + 1) / 2;
                    let (bits, bytes) = payload_len(n_t, n_s, b, b);
                    assert_eq!(bits, n_tot * 2 * b as usize);
                    assert_eq!(bytes, bits.div_ceil(8));
                    let phi = vec![0u32; n_tot];
                    let psi = vec![0u32; n_tot];
                    let payload = encode(&phi, &psi, n_t, n_s, b, b).unwrap();
                    assert_eq!(payload.len(), bytes);
                }
            }
        }
    }

    #[test]
    fn short_payload_is_truncation_error() {
        assert!(matches!(
            decode(&[0x00], 2, 1, 6, 3, true),
            Err(Error::Truncated { need: 2, got: 1 })
        ));
    }

    #[test]
    fn strict_mode_rejects_dirty_padding() {
        let mut payload = encode(&[63], &[7], 2, 1, 6, 3).unwrap();
        payload[1] |= 0x01;
        assert!(matches!(
            decode(&payload, 2, 1, 6, 3, true),
            Err(Error::Padding)
        ));
        let (phi, psi) = decode(&payload, 2, 1, 6, 3, false).unwrap();
        assert_eq!((phi[0], psi[0]), (63, 7));
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(matches!(encode(&[64], &[0], 2, 1, 6, 3), Err(Error::Encode(_))));
        assert!(matches!(encode(&[0], &[8], 2, 1, 6, 3), Err(Error::Encode(_))));
    }

    #[test]
    fn frame_stream_round_trip() {
        let frames = vec![vec![0xAB, 0xCD], vec![], vec![0x01; 7]];
        let mut buf = Vec::new();
        write_frame_stream(frames.iter().map(|f| f.as_slice()), &mut buf).unwrap();
        let back = read_frame_stream(&mut buf.as_slice()).unwrap();
        assert_eq!(back, frames);

        // A truncated record is an error, not silent loss.
        buf.truncate(buf.len() - 3);
        assert!(read_frame_stream(&mut buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_identity(
            shape_idx in 0usize..3,
            b_phi in 1u32..=9,
            b_psi in 1u32..=9,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let (n_t, n_s) = [(2, 1), (4, 2), (8, 2)][shape_idx];
            let n_tot = angle_count(n_t, n_s);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let phi: Vec<u32> = (0..n_tot).map(|_| rng.random_range(0..1u32 << b_phi)).collect();
            let psi: Vec<u32> = (0..n_tot).map(|_| rng.random_range(0..1u32 << b_psi)).collect();
            let payload = encode(&phi, &psi, n_t, n_s, b_phi, b_psi).unwrap();
            let (bits, bytes) = payload_len(n_t, n_s, b_phi, b_psi);
            prop_assert_eq!(payload.len(), bytes);
            prop_assert_eq!(bits, n_tot * (b_phi + b_psi) as usize);
            let (dphi, dpsi) = decode(&payload, n_t, n_s, b_phi, b_psi, true).unwrap();
            prop_assert_eq!(dphi, phi);
            prop_assert_eq!(dpsi, psi);
        }
    }
}

//! Flat key-value experiment configuration, with Table-style channel keys
//! in the top section and experiment-specific `[sections]` below.
//!
//! Every run echoes its fully resolved configuration into a manifest that
//! parses back into the same experiment, so results are reproducible from
//! the manifest alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use dpbeamsim_core::adversary::{AttackConfig, WeightsPolicy};
use dpbeamsim_core::channel::{ChannelConfig, SpeedProfile};
use dpbeamsim_core::dpq::PrivacyBudget;
use dpbeamsim_core::link::{GainChannelModel, GainConfig, LinkConfig, Scheme};
use dpbeamsim_core::validate::ValidateConfig;

use crate::HarnessError;

/// Fully resolved experiment configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub channel: ChannelConfig,
    pub n_sts: usize,
    pub b_phi: u32,
    pub b_psi: u32,
    pub eps_phi: f64,
    pub eps_psi: f64,
    pub delta: f64,
    pub mod_order: usize,
    pub snr_db: Vec<f64>,
    pub bits_per_point: u64,
    pub link_schemes: Vec<Scheme>,
    pub constellation_snr_db: f64,
    pub constellation_symbols: usize,
    pub gain_shapes: Vec<(usize, usize)>,
    pub gain_realizations: usize,
    pub gain_model: GainChannelModel,
    pub window: usize,
    pub eve_snr_db: f64,
    pub weights: WeightsPolicy,
    pub attack_schemes: Vec<Scheme>,
    pub fft_len: usize,
    pub hop: usize,
    pub trials: usize,
    pub budget_k_list: Vec<u64>,
    pub validate: ValidateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            n_sts: 1,
            b_phi: 6,
            b_psi: 3,
            eps_phi: 0.1,
            eps_psi: 0.1,
            delta: 1e-5,
            mod_order: 16,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            bits_per_point: 1_000_000,
            link_schemes: vec![Scheme::PerfectSvd, Scheme::Deterministic, Scheme::DpSq],
            constellation_snr_db: 15.0,
            constellation_symbols: 4096,
            gain_shapes: vec![(2, 1), (2, 2), (2, 3), (2, 4), (2, 8)],
            gain_realizations: 5000,
            gain_model: GainChannelModel::Rician,
            window: 256,
            eve_snr_db: 20.0,
            weights: WeightsPolicy::Coherent,
            attack_schemes: vec![Scheme::PerfectSvd, Scheme::Deterministic, Scheme::DpSq],
            fft_len: 256,
            hop: 64,
            trials: 100,
            budget_k_list: vec![1, 10, 100, 1000, 10_000],
            validate: ValidateConfig::default(),
        }
    }
}

fn bad(field: &str, reason: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: {reason}"))
}

struct RawConfig {
    entries: BTreeMap<(String, String), (String, usize)>,
    consumed: Vec<(String, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.split_once('#') {
                Some((left, _)) => left.trim(),
                None => raw.trim(),
            };
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| bad("section header", format!("line {}", lineno + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                bad(
                    "syntax",
                    format!("line {} is not `key = value`: {line:?}", lineno + 1),
                )
            })?;
            let key = key.trim().to_string();
            let prev = entries.insert(
                (section.clone(), key.clone()),
                (value.trim().to_string(), lineno + 1),
            );
            if prev.is_some() {
                return Err(bad(&key, format!("duplicated at line {}", lineno + 1)));
            }
        }
        Ok(Self {
            entries,
            consumed: Vec::new(),
        })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        let id = (section.to_string(), key.to_string());
        let value = self.entries.get(&id).map(|(v, _)| v.clone());
        if value.is_some() {
            self.consumed.push(id);
        }
        value
    }

    fn finish(mut self) -> Result<(), HarnessError> {
        for id in &self.consumed {
            self.entries.remove(id);
        }
        if let Some(((section, key), (_, line))) = self.entries.into_iter().next() {
            let place = if section.is_empty() {
                key
            } else {
                format!("[{section}] {key}")
            };
            return Err(bad(&place, format!("unknown key at line {line}")));
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(field, e))
}

fn parse_list_f64(field: &str, value: &str) -> Result<Vec<f64>, HarnessError> {
    value
        .split(',')
        .map(|v| parse_num::<f64>(field, v.trim()))
        .collect()
}

fn parse_bandwidth(value: &str) -> Result<f64, HarnessError> {
    match value {
        "CBW20" => Ok(20e6),
        "CBW40" => Ok(40e6),
        "CBW80" => Ok(80e6),
        "CBW160" => Ok(160e6),
        other => parse_num::<f64>("ChannelBandwidth", other),
    }
}

fn parse_speed_profile(value: &str) -> Result<SpeedProfile, HarnessError> {
    if !value.contains(':') {
        let v = parse_num::<f64>("SpeedProfile", value)?;
        return Ok(SpeedProfile::constant(v));
    }
    let segments = value
        .split(',')
        .map(|seg| {
            let (t, v) = seg
                .split_once(':')
                .ok_or_else(|| bad("SpeedProfile", format!("segment {seg:?}")))?;
            Ok((
                parse_num::<f64>("SpeedProfile", t.trim())?,
                parse_num::<f64>("SpeedProfile", v.trim())?,
            ))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    SpeedProfile::piecewise(segments).map_err(|e| bad("SpeedProfile", e))
}

fn parse_scheme(field: &str, value: &str) -> Result<Scheme, HarnessError> {
    match value {
        "perfect" | "none" => Ok(Scheme::PerfectSvd),
        "det" => Ok(Scheme::Deterministic),
        "dpsq" => Ok(Scheme::DpSq),
        other => Err(bad(field, format!("unknown scheme {other:?}"))),
    }
}

fn parse_schemes(field: &str, value: &str) -> Result<Vec<Scheme>, HarnessError> {
    value
        .split(',')
        .map(|v| parse_scheme(field, v.trim()))
        .collect()
}

fn parse_shapes(value: &str) -> Result<Vec<(usize, usize)>, HarnessError> {
    value
        .split(',')
        .map(|s| {
            let (t, r) = s
                .trim()
                .split_once('x')
                .ok_or_else(|| bad("Shapes", format!("expected NtxNr, got {s:?}")))?;
            Ok((
                parse_num::<usize>("Shapes", t)?,
                parse_num::<usize>("Shapes", r)?,
            ))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut raw = RawConfig::parse(text)?;
        let mut cfg = ExperimentConfig::default();

        macro_rules! set {
            ($section:expr, $key:expr, $slot:expr, $parser:expr) => {
                if let Some(v) = raw.take($section, $key) {
                    $slot = $parser($key, &v)?;
                }
            };
        }
        let num_usize = |f: &str, v: &str| parse_num::<usize>(f, v);
        let num_u32 = |f: &str, v: &str| parse_num::<u32>(f, v);
        let num_u64 = |f: &str, v: &str| parse_num::<u64>(f, v);
        let num_f64 = |f: &str, v: &str| parse_num::<f64>(f, v);

        set!("", "NumTx", cfg.channel.n_tx, num_usize);
        set!("", "NumRx", cfg.channel.n_rx, num_usize);
        set!("", "NumSTS", cfg.n_sts, num_usize);
        set!("", "NumPackets", cfg.channel.n_snapshots, num_usize);
        set!("", "NumPaths", cfg.channel.n_paths, num_usize);
        set!("", "MaxDelaySamples", cfg.channel.max_delay_samples, num_usize);
        set!("", "NumSubcarriers", cfg.channel.n_sc, num_usize);
        set!("", "CenterFreqHz", cfg.channel.f_c_hz, num_f64);
        set!("", "IntervalSec", cfg.channel.interval_s, num_f64);
        set!("", "KFactor_dB", cfg.channel.k_factor_db, num_f64);
        set!("", "VelocityAngleRad", cfg.channel.velocity_angle_rad, num_f64);
        set!("", "Seed", cfg.channel.seed, num_u64);
        if let Some(v) = raw.take("", "ChannelBandwidth") {
            cfg.channel.bandwidth_hz = parse_bandwidth(&v)?;
        }
        if let Some(v) = raw.take("", "SpeedProfile") {
            cfg.channel.speed_profile = parse_speed_profile(&v)?;
        }

        set!("privacy", "BitsPhi", cfg.b_phi, num_u32);
        set!("privacy", "BitsPsi", cfg.b_psi, num_u32);
        set!("privacy", "EpsPhi", cfg.eps_phi, num_f64);
        set!("privacy", "EpsPsi", cfg.eps_psi, num_f64);
        set!("privacy", "Delta", cfg.delta, num_f64);

        set!("link", "ModOrder", cfg.mod_order, num_usize);
        set!("link", "SnrDbList", cfg.snr_db, parse_list_f64);
        set!("link", "BitsPerPoint", cfg.bits_per_point, num_u64);
        set!("link", "Schemes", cfg.link_schemes, parse_schemes);
        set!("link", "ConstellationSnrDb", cfg.constellation_snr_db, num_f64);
        set!(
            "link",
            "ConstellationSymbols",
            cfg.constellation_symbols,
            num_usize
        );

        if let Some(v) = raw.take("gain", "Shapes") {
            cfg.gain_shapes = parse_shapes(&v)?;
        }
        set!("gain", "Realizations", cfg.gain_realizations, num_usize);
        if let Some(v) = raw.take("gain", "Model") {
            cfg.gain_model = match v.as_str() {
                "rician" => GainChannelModel::Rician,
                "rayleigh" => GainChannelModel::Rayleigh,
                other => return Err(bad("Model", format!("unknown channel model {other:?}"))),
            };
        }

        set!("adversary", "Window", cfg.window, num_usize);
        set!("adversary", "EveSnrDb", cfg.eve_snr_db, num_f64);
        set!("adversary", "Schemes", cfg.attack_schemes, parse_schemes);
        set!("adversary", "FftLen", cfg.fft_len, num_usize);
        set!("adversary", "Hop", cfg.hop, num_usize);
        if let Some(v) = raw.take("adversary", "Weights") {
            cfg.weights = match v.as_str() {
                "uniform" => WeightsPolicy::Uniform,
                "snr" => WeightsPolicy::SnrProportional,
                "coherent" => WeightsPolicy::Coherent,
                other => return Err(bad("Weights", format!("unknown policy {other:?}"))),
            };
        }

        set!("experiment", "Trials", cfg.trials, num_usize);
        if let Some(v) = raw.take("budget", "KList") {
            cfg.budget_k_list = v
                .split(',')
                .map(|k| parse_num::<u64>("KList", k.trim()))
                .collect::<Result<_, _>>()?;
        }

        set!("validate", "MseDraws", cfg.validate.mse_draws, num_usize);
        set!("validate", "RatioPairs", cfg.validate.ratio_pairs, num_usize);
        set!("validate", "RatioDraws", cfg.validate.ratio_draws, num_usize);
        set!(
            "validate",
            "DistortionChannels",
            cfg.validate.distortion_channels,
            num_usize
        );
        set!("validate", "LsTrials", cfg.validate.ls_trials, num_usize);

        raw.finish()?;
        cfg.validate_semantics()?;
        Ok(cfg)
    }

    fn validate_semantics(&self) -> Result<(), HarnessError> {
        self.channel
            .validate()
            .map_err(|e| bad("channel", e))?;
        if self.n_sts != 1 {
            return Err(bad("NumSTS", "experiments transmit a single stream"));
        }
        if self.trials == 0 {
            return Err(bad("Trials", "must be at least 1"));
        }
        PrivacyBudget::new(self.eps_phi, self.eps_psi, self.delta)
            .map_err(|e| bad("privacy", e))?;
        if self.b_phi == 0 || self.b_psi == 0 {
            return Err(bad("BitsPhi/BitsPsi", "must be at least 1"));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.channel.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.channel.seed = seed;
        self.validate.seed = seed;
    }

    pub fn budget(&self) -> PrivacyBudget {
        PrivacyBudget::new(self.eps_phi, self.eps_psi, self.delta).expect("validated")
    }

    pub fn link_config(&self) -> LinkConfig {
        LinkConfig {
            mod_order: self.mod_order,
            snr_db: self.snr_db.clone(),
            schemes: self.link_schemes.clone(),
            b_phi: self.b_phi,
            b_psi: self.b_psi,
            eps_phi: self.eps_phi,
            eps_psi: self.eps_psi,
            n_bits: self.bits_per_point,
            seed: self.channel.seed,
        }
    }

    pub fn gain_config(&self, n_tx: usize, n_rx: usize) -> GainConfig {
        GainConfig {
            n_tx,
            n_rx,
            n_realizations: self.gain_realizations,
            b_phi: self.b_phi,
            b_psi: self.b_psi,
            eps_phi: self.eps_phi,
            eps_psi: self.eps_psi,
            model: self.gain_model,
            sounding_snr_db: None,
            seed: self.channel.seed,
        }
    }

    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            chan: self.channel.clone(),
            b_phi: self.b_phi,
            b_psi: self.b_psi,
            eps_phi: self.eps_phi,
            eps_psi: self.eps_psi,
            window: self.window,
            eavesdropper_snr_db: self.eve_snr_db,
            weights: self.weights,
            schemes: self.attack_schemes.clone(),
        }
    }

    /// Renders the full resolved configuration as config-file text; parsing
    /// it back yields an identical experiment.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let bw = [
            (20e6, "CBW20"),
            (40e6, "CBW40"),
            (80e6, "CBW80"),
            (160e6, "CBW160"),
        ]
        .iter()
        .find(|(hz, _)| *hz == self.channel.bandwidth_hz)
        .map(|(_, name)| name.to_string())
        .unwrap_or_else(|| format!("{}", self.channel.bandwidth_hz));
        let profile = self
            .channel
            .speed_profile
            .segments()
            .iter()
            .map(|(t, v)| format!("{t}:{v}"))
            .collect::<Vec<_>>()
            .join(",");
        let schemes = |list: &[Scheme]| {
            list.iter()
                .map(|s| s.label())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(out, "NumTx = {}", self.channel.n_tx);
        let _ = writeln!(out, "NumRx = {}", self.channel.n_rx);
        let _ = writeln!(out, "NumSTS = {}", self.n_sts);
        let _ = writeln!(out, "ChannelBandwidth = {bw}");
        let _ = writeln!(out, "NumSubcarriers = {}", self.channel.n_sc);
        let _ = writeln!(out, "NumPackets = {}", self.channel.n_snapshots);
        let _ = writeln!(out, "NumPaths = {}", self.channel.n_paths);
        let _ = writeln!(out, "MaxDelaySamples = {}", self.channel.max_delay_samples);
        let _ = writeln!(out, "CenterFreqHz = {}", self.channel.f_c_hz);
        let _ = writeln!(out, "IntervalSec = {}", self.channel.interval_s);
        let _ = writeln!(out, "KFactor_dB = {}", self.channel.k_factor_db);
        let _ = writeln!(out, "VelocityAngleRad = {}", self.channel.velocity_angle_rad);
        let _ = writeln!(out, "SpeedProfile = {profile}");
        let _ = writeln!(out, "Seed = {}", self.channel.seed);
        let _ = writeln!(out, "\n[privacy]");
        let _ = writeln!(out, "BitsPhi = {}", self.b_phi);
        let _ = writeln!(out, "BitsPsi = {}", self.b_psi);
        let _ = writeln!(out, "EpsPhi = {}", self.eps_phi);
        let _ = writeln!(out, "EpsPsi = {}", self.eps_psi);
        let _ = writeln!(out, "Delta = {}", self.delta);
        let _ = writeln!(out, "\n[link]");
        let _ = writeln!(out, "ModOrder = {}", self.mod_order);
        let _ = writeln!(
            out,
            "SnrDbList = {}",
            self.snr_db
                .iter()
                .map(|s| format!("{s}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(out, "BitsPerPoint = {}", self.bits_per_point);
        let _ = writeln!(out, "Schemes = {}", schemes(&self.link_schemes));
        let _ = writeln!(out, "ConstellationSnrDb = {}", self.constellation_snr_db);
        let _ = writeln!(out, "ConstellationSymbols = {}", self.constellation_symbols);
        let _ = writeln!(out, "\n[gain]");
        let _ = writeln!(
            out,
            "Shapes = {}",
            self.gain_shapes
                .iter()
                .map(|(t, r)| format!("{t}x{r}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(out, "Realizations = {}", self.gain_realizations);
        let _ = writeln!(
            out,
            "Model = {}",
            match self.gain_model {
                GainChannelModel::Rician => "rician",
                GainChannelModel::Rayleigh => "rayleigh",
            }
        );
        let _ = writeln!(out, "\n[adversary]");
        let _ = writeln!(out, "Window = {}", self.window);
        let _ = writeln!(out, "EveSnrDb = {}", self.eve_snr_db);
        let _ = writeln!(
            out,
            "Weights = {}",
            match self.weights {
                WeightsPolicy::Uniform => "uniform",
                WeightsPolicy::SnrProportional => "snr",
                WeightsPolicy::Coherent => "coherent",
            }
        );
        let _ = writeln!(out, "Schemes = {}", schemes(&self.attack_schemes));
        let _ = writeln!(out, "FftLen = {}", self.fft_len);
        let _ = writeln!(out, "Hop = {}", self.hop);
        let _ = writeln!(out, "\n[experiment]");
        let _ = writeln!(out, "Trials = {}", self.trials);
        let _ = writeln!(out, "\n[budget]");
        let _ = writeln!(
            out,
            "KList = {}",
            self.budget_k_list
                .iter()
                .map(|k| format!("{k}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(out, "\n[validate]");
        let _ = writeln!(out, "MseDraws = {}", self.validate.mse_draws);
        let _ = writeln!(out, "RatioPairs = {}", self.validate.ratio_pairs);
        let _ = writeln!(out, "RatioDraws = {}", self.validate.ratio_draws);
        let _ = writeln!(out, "DistortionChannels = {}", self.validate.distortion_channels);
        let _ = writeln!(out, "LsTrials = {}", self.validate.ls_trials);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_render_and_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.render();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(back.render(), text);
        assert_eq!(back.channel.n_tx, 2);
        assert_eq!(back.channel.bandwidth_hz, 20e6);
    }

    #[test]
    fn table_style_keys_parse() {
        let text = "NumTx = 4\nChannelBandwidth = CBW40\nSpeedProfile = 0:0, 2:1.5\n\n[privacy]\nBitsPhi = 4\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.channel.n_tx, 4);
        assert_eq!(cfg.channel.bandwidth_hz, 40e6);
        assert_eq!(cfg.b_phi, 4);
        assert_eq!(cfg.channel.speed_profile.speed_at(3.0), 1.5);
    }

    #[test]
    fn unknown_and_malformed_keys_are_field_errors() {
        let err = ExperimentConfig::parse("NumTxx = 4\n").unwrap_err();
        assert!(err.to_string().contains("NumTxx"));
        let err = ExperimentConfig::parse("NumTx: 4\n").unwrap_err();
        assert!(err.to_string().contains("key = value"));
        let err = ExperimentConfig::parse("NumTx = four\n").unwrap_err();
        assert!(err.to_string().contains("NumTx"));
        let err = ExperimentConfig::parse("[privacy]\nEpsPhi = -1\n").unwrap_err();
        assert!(err.to_string().contains("privacy"));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = ExperimentConfig::parse("# comment\n\nNumRx = 2 # trailing\n").unwrap();
        assert_eq!(cfg.channel.n_rx, 2);
    }
}

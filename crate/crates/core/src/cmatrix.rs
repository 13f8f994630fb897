//! Small dense complex linear algebra: SVD, projectors, and subspace distances.
//!
//! Matrices here are tiny (at most 8x8), so the SVD is computed with a cyclic
//! Hermitian Jacobi eigensolver on `H^H H` followed by left-vector recovery.
//! Robustness and determinism matter more than asymptotic speed.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Orthonormality tolerance used when validating semi-unitary inputs.
pub const ORTHO_TOL: f64 = 1e-8;
/// Relative Frobenius tolerance for `U S V^H` reconstruction of the input.
pub const RECON_TOL: f64 = 1e-9;

const JACOBI_MAX_SWEEPS: usize = 100;
const PHASE_TOL: f64 = 1e-12;

/// Dense row-major complex matrix with positive dimensions and finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        let m = Self { rows, cols, data };
        if !m.is_finite() {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    /// Builds a matrix from real entries, row by row.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        let data = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for c in 0..rhs.cols {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..self.cols {
                    acc += self[(r, k)] * rhs[(k, c)];
                }
                out[(r, c)] = acc;
            }
        }
        Ok(out)
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, j)]).collect()
    }

    /// Returns the submatrix made of columns `0..k`.
    pub fn leading_cols(&self, k: usize) -> Self {
        assert!(k >= 1 && k <= self.cols);
        Self::from_fn(self.rows, k, |r, c| self[(r, c)])
    }

    /// Deviation of `M^H M` from the identity, as a Frobenius norm.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.hermitian().mul(self).expect("shape");
        let mut acc = 0.0;
        for r in 0..g.rows {
            for c in 0..g.cols {
                let expect = if r == c { 1.0 } else { 0.0 };
                acc += (g[(r, c)] - C64::new(expect, 0.0)).norm_sqr();
            }
        }
        acc.sqrt()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Compact SVD `H = U diag(sigma) V^H` with `r = min(rows, cols)` columns.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl SvdResult {
    /// Reconstructs `U diag(sigma) V^H`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let r = self.sigma.len();
        ComplexMatrix::from_fn(self.u.rows(), self.v.rows(), |i, j| {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..r {
                acc += self.u[(i, k)] * self.sigma[k] * self.v[(j, k)].conj();
            }
            acc
        })
    }
}

/// Compact SVD of a small complex matrix.
///
/// Deterministic for a fixed input: the cyclic Jacobi sweep order is fixed and
/// the phase convention makes the last nonzero entry of each right-singular
/// vector nonnegative real, so calling this twice on the same bytes yields
/// bit-identical output.
pub fn svd(h: &ComplexMatrix) -> Result<SvdResult> {
    if !h.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    let n_r = h.rows();
    let n_t = h.cols();
    let r = n_r.min(n_t);

    // Hermitian eigenproblem on the Gram matrix.
    let mut m = h.hermitian().mul(h)?;
    for p in 0..n_t {
        for q in (p + 1)..n_t {
            let avg = (m[(p, q)] + m[(q, p)].conj()) * 0.5;
            m[(p, q)] = avg;
            m[(q, p)] = avg.conj();
        }
        m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
    }
    let (eigvals, vecs) = hermitian_jacobi(&m);

    // Order by eigenvalue, largest first. Stable sort keeps ties deterministic.
    let mut order: Vec<usize> = (0..n_t).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).expect("finite"));

    let mut v = ComplexMatrix::from_fn(n_t, r, |i, j| vecs[(i, order[j])]);

    // Phase convention: last nonzero entry of each right-singular vector is
    // made nonnegative real. U inherits the rotation through u = H v / sigma.
    for j in 0..r {
        let mut pivot = None;
        for i in (0..n_t).rev() {
            if v[(i, j)].norm() > PHASE_TOL {
                pivot = Some(i);
                break;
            }
        }
        if let Some(i) = pivot {
            let rot = C64::from_polar(1.0, -v[(i, j)].arg());
            for row in 0..n_t {
                v[(row, j)] *= rot;
            }
        }
    }

    let scale = h.frob_norm();
    let tiny = scale * 1e-14;
    let mut sigma = vec![0.0; r];
    let mut u = ComplexMatrix::zeros(n_r, r);
    let mut deferred = Vec::new();
    for j in 0..r {
        let mut w = vec![C64::new(0.0, 0.0); n_r];
        for i in 0..n_r {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n_t {
                acc += h[(i, k)] * v[(k, j)];
            }
            w[i] = acc;
        }
        // sigma = ||H v|| rather than sqrt(eigenvalue): the dyad then equals
        // H v v^H up to rounding, which keeps the reconstruction error at
        // machine level even for tiny singular values.
        let s: f64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        sigma[j] = s;
        if s > tiny {
            for i in 0..n_r {
                u[(i, j)] = w[i] / s;
            }
        } else {
            sigma[j] = 0.0;
            deferred.push(j);
        }
    }
    if !deferred.is_empty() {
        complete_basis(&mut u, &deferred);
    }

    Ok(SvdResult { u, sigma, v })
}

/// Fills the listed columns of `u` with an orthonormal completion, chosen
/// deterministically from the standard basis.
fn complete_basis(u: &mut ComplexMatrix, missing: &[usize]) {
    let n = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|c| !missing.contains(c)).collect();
    let mut next = missing.iter();
    let mut target = match next.next() {
        Some(&t) => t,
        None => return,
    };
    for cand in 0..n {
        let mut vec: Vec<C64> = (0..n)
            .map(|i| C64::new(if i == cand { 1.0 } else { 0.0 }, 0.0))
            .collect();
        for &c in &filled {
            let dot: C64 = (0..n).map(|i| u[(i, c)].conj() * vec[i]).sum();
            for i in 0..n {
                let sub = dot * u[(i, c)];
                vec[i] -= sub;
            }
        }
        let norm: f64 = vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.5 {
            for i in 0..n {
                u[(i, target)] = vec[i] / norm;
            }
            filled.push(target);
            target = match next.next() {
                Some(&t) => t,
                None => return,
            };
        }
    }
    unreachable!("standard basis always completes an orthonormal set");
}

/// Cyclic Jacobi eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues (unsorted) and the accumulated unitary whose columns
/// are the eigenvectors.
fn hermitian_jacobi(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = m.rows();
    let mut a = m.clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frob_norm();
    if scale == 0.0 || n == 1 {
        let eig = (0..n).map(|i| a[(i, i)].re).collect();
        return (eig, v);
    }
    let thresh = scale * 1e-15;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut max_off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                max_off = max_off.max(a[(p, q)].norm());
            }
        }
        if max_off <= thresh {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = a[(p, q)];
                let absb = b.norm();
                if absb <= thresh {
                    continue;
                }
                let beta = b.arg();
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (app - aqq) / (2.0 * absb);
                let hyp = (theta * theta + 1.0).sqrt();
                let t = if theta >= 0.0 {
                    -1.0 / (theta + hyp)
                } else {
                    1.0 / (hyp - theta)
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let em = C64::from_polar(1.0, -beta);
                let ep = C64::from_polar(1.0, beta);

                // Columns: M <- M R, with R = [[c, s], [-s e^{-jb}, c e^{-jb}]]
                // in the (p, q) plane.
                for i in 0..n {
                    let mip = a[(i, p)];
                    let miq = a[(i, q)];
                    a[(i, p)] = mip * c - miq * (s * em);
                    a[(i, q)] = mip * s + miq * (c * em);
                }
                // Rows: M <- R^H M.
                for i in 0..n {
                    let mpi = a[(p, i)];
                    let mqi = a[(q, i)];
                    a[(p, i)] = mpi * c - mqi * (s * ep);
                    a[(q, i)] = mpi * s + mqi * (c * ep);
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * c - viq * (s * em);
                    v[(i, q)] = vip * s + viq * (c * em);
                }
            }
        }
    }

    let eig = (0..n).map(|i| a[(i, i)].re).collect();
    (eig, v)
}

/// Squared chordal distance `0.5 ||V1 V1^H - V2 V2^H||_F^2` between the
/// column spans of two semi-unitary matrices of equal shape.
///
/// Symmetric, invariant under right-multiplication by a unitary, and bounded
/// by the number of columns.
pub fn chordal_distance_sq(v1: &ComplexMatrix, v2: &ComplexMatrix) -> Result<f64> {
    chordal_distance_sq_with_tol(v1, v2, ORTHO_TOL)
}

pub fn chordal_distance_sq_with_tol(
    v1: &ComplexMatrix,
    v2: &ComplexMatrix,
    ortho_tol: f64,
) -> Result<f64> {
    if v1.rows() != v2.rows() || v1.cols() != v2.cols() {
        return Err(Error::ShapeMismatch(format!(
            "subspace bases differ: {}x{} vs {}x{}",
            v1.rows(),
            v1.cols(),
            v2.rows(),
            v2.cols()
        )));
    }
    for (name, v) in [("first", v1), ("second", v2)] {
        let defect = v.orthonormality_defect();
        if defect > ortho_tol {
            return Err(Error::InvalidInput(format!(
                "{name} argument columns are not orthonormal (defect {defect:.3e})"
            )));
        }
    }
    let n = v1.rows();
    let mut acc = 0.0;
    for r in 0..n {
        for c in 0..n {
            let mut p1 = C64::new(0.0, 0.0);
            let mut p2 = C64::new(0.0, 0.0);
            for k in 0..v1.cols() {
                p1 += v1[(r, k)] * v1[(c, k)].conj();
                p2 += v2[(r, k)] * v2[(c, k)].conj();
            }
            acc += (p1 - p2).norm_sqr();
        }
    }
    Ok(0.5 * acc)
}

/// Draws an `n_t x n_s` matrix with orthonormal columns from seeded Gaussian
/// entries (Gram-Schmidt, run twice for numerical orthogonality).
pub fn random_unitary_columns<R: Rng>(n_t: usize, n_s: usize, rng: &mut R) -> ComplexMatrix {
    assert!(n_s >= 1 && n_s <= n_t, "need 1 <= n_s <= n_t");
    let mut m = ComplexMatrix::from_fn(n_t, n_s, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    for _ in 0..2 {
        for j in 0..n_s {
            for k in 0..j {
                let dot: C64 = (0..n_t).map(|i| m[(i, k)].conj() * m[(i, j)]).sum();
                for i in 0..n_t {
                    let sub = dot * m[(i, k)];
                    m[(i, j)] -= sub;
                }
            }
            let norm: f64 = (0..n_t).map(|i| m[(i, j)].norm_sqr()).sum::<f64>().sqrt();
            assert!(norm > 1e-12, "degenerate random draw");
            for i in 0..n_t {
                m[(i, j)] /= norm;
            }
        }
    }
    m
}

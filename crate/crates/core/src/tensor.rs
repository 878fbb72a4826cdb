//! Small symmetric matrices in a fixed frame.
//!
//! Everything here works on 2×2 and 3×3 blocks. Matrix functions go through
//! the symmetric eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

/// Relative eigenvalue floor for positive definiteness.
pub const SPD_RTOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMat {
    /// Row-major entries; symmetrized on construction after a tolerance check.
    pub fn new(dim: usize, entries: &[f64]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(FlowError::Domain(format!("SymMat dim must be 2 or 3, got {dim}")));
        }
        if entries.len() != dim * dim {
            return Err(FlowError::Domain(format!("expected {} entries, got {}", dim * dim, entries.len())));
        }
        let scale = entries.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut e = entries.to_vec();
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (e[i * dim + j], e[j * dim + i]);
                if (a - b).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    return Err(FlowError::Domain(format!("entries ({i},{j}) not symmetric")));
                }
                let m = 0.5 * (a + b);
                e[i * dim + j] = m;
                e[j * dim + i] = m;
            }
        }
        Ok(SymMat { dim, entries: e })
    }

    pub fn diag(d: &[f64]) -> Self {
        let dim = d.len();
        assert!(dim == 2 || dim == 3, "SymMat dim must be 2 or 3");
        let mut entries = vec![0.0; dim * dim];
        for (i, x) in d.iter().enumerate() {
            entries[i * dim + i] = *x;
        }
        SymMat { dim, entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim])
    }

    pub fn zeros(dim: usize) -> Self {
        Self::diag(&vec![0.0; dim])
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let dim = m.nrows();
        assert!(dim == m.ncols() && (dim == 2 || dim == 3));
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[i * dim + j] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
        SymMat { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.dim).all(|i| (0..self.dim).all(|j| i == j || self.get(i, j).abs() <= tol * scale))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn scale(&self, c: f64) -> Self {
        SymMat { dim: self.dim, entries: self.entries.iter().map(|x| c * x).collect() }
    }

    pub fn add(&self, other: &SymMat) -> Self {
        assert_eq!(self.dim, other.dim);
        SymMat { dim: self.dim, entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &SymMat) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Congruence P^T M P.
    pub fn congruence(&self, p: &DMatrix<f64>) -> Self {
        Self::from_matrix(&(p.transpose() * self.to_matrix() * p))
    }

    pub fn det(&self) -> f64 {
        self.to_matrix().determinant()
    }

    /// Entrywise Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Eigenvalues and orthonormal eigenvectors (columns).
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let e = SymmetricEigen::new(self.to_matrix());
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    }

    /// Fails unless the smallest eigenvalue exceeds SPD_RTOL times the largest.
    pub fn check_spd(&self) -> Result<()> {
        let (ev, _) = self.eigen();
        spd_floor(&ev)
    }

    fn map_eigen(&self, f: impl Fn(f64) -> f64) -> Self {
        let (ev, q) = self.eigen();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(ev.len(), ev.into_iter().map(f)));
        Self::from_matrix(&(&q * d * q.transpose()))
    }

    /// Matrix exponential of a symmetric matrix.
    pub fn exp(&self) -> Self {
        self.map_eigen(f64::exp)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.check_spd_or_nonsingular()?;
        let inv = self.to_matrix().try_inverse().ok_or_else(|| FlowError::Domain("singular matrix".into()))?;
        Ok(Self::from_matrix(&inv))
    }

    fn check_spd_or_nonsingular(&self) -> Result<()> {
        if self.det() == 0.0 {
            return Err(FlowError::Domain("singular matrix".into()));
        }
        Ok(())
    }
}

fn spd_floor(ev: &[f64]) -> Result<()> {
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min > SPD_RTOL * max) {
        return Err(FlowError::Conditioning { min, max });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracelessDecomp {
    /// H = tr_h K.
    pub trace: f64,
    /// K⁰ = K − (H/n) h.
    pub traceless: SymMat,
}

fn require_spd(h: &SymMat) -> Result<()> {
    h.check_spd().map_err(|e| match e {
        FlowError::Conditioning { min, max } => {
            FlowError::Domain(format!("metric not positive definite (eigenvalues {min:e}..{max:e})"))
        }
        other => other,
    })
}

/// Mean curvature and traceless part of K with respect to h.
pub fn traceless_split(k: &SymMat, h: &SymMat) -> Result<TracelessDecomp> {
    if k.dim() != h.dim() {
        return Err(FlowError::Domain("dimension mismatch".into()));
    }
    require_spd(h)?;
    let hinv = h.inverse()?;
    let n = h.dim();
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..n {
            trace += hinv.get(i, j) * k.get(i, j);
        }
    }
    let traceless = k.sub(&h.scale(trace / n as f64));
    Ok(TracelessDecomp { trace, traceless })
}

/// |T|²_h = h^{ik} h^{jl} T_ij T_kl.
pub fn hnorm_sq(t: &SymMat, h: &SymMat) -> Result<f64> {
    if t.dim() != h.dim() {
        return Err(FlowError::Domain("dimension mismatch".into()));
    }
    require_spd(h)?;
    let hinv = h.inverse()?.to_matrix();
    let m = &hinv * t.to_matrix();
    Ok((&m * &m).trace().max(0.0))
}

/// Square root and logarithm of an SPD matrix.
pub fn spd_sqrt_log(m: &SymMat) -> Result<(SymMat, SymMat)> {
    let (ev, _) = m.eigen();
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(min > 1e-14) {
        return Err(FlowError::Conditioning { min, max });
    }
    spd_floor(&ev)?;
    Ok((m.map_eigen(f64::sqrt), m.map_eigen(f64::ln)))
}

/// Inverse square root of an SPD matrix.
pub fn spd_inv_sqrt(m: &SymMat) -> Result<SymMat> {
    m.check_spd()?;
    Ok(m.map_eigen(|x| 1.0 / x.sqrt()))
}

/// ‖log M̂‖_F with M = P^{-1/2} Q P^{-1/2} normalized to unit determinant.
pub fn shape_distance(p: &SymMat, q: &SymMat) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(FlowError::Domain("dimension mismatch".into()));
    }
    require_spd(p)?;
    require_spd(q)?;
    let pis = spd_inv_sqrt(p)?.to_matrix();
    let m = SymMat::from_matrix(&(&pis * q.to_matrix() * &pis));
    let (ev, _) = m.eigen();
    let logs: Vec<f64> = ev.iter().map(|x| x.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    Ok(logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>().sqrt())
}

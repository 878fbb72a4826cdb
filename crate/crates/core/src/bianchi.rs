//! Spatially homogeneous vacuum flows in Hubble-time CMC gauge.
//!
//! Evolution runs in τ = ln t with adaptive Dormand–Prince 5(4). Diagonal
//! Milnor data uses a six-variable kernel; anything else goes through the
//! full 3×3 kernel built on the orthonormal-frame connection.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::algebra::{milnor_ricci_diag, spacetime_curvature_sq, Frame, LieAlgebra};
use crate::error::{FlowError, Result};
use crate::models::{from_m3, model_state, to_m3, FlowState, ModelId, SymmetrySplit};
use crate::ode::Dp5;
use crate::tensor::SymMat;

/// Homogeneous initial data on a Lie algebra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BianchiSpec {
    pub algebra: LieAlgebra,
    pub h0: SymMat,
    pub k0: SymMat,
    pub t0: f64,
    #[serde(default)]
    pub split: Option<SymmetrySplit>,
}

impl BianchiSpec {
    pub fn new(algebra: LieAlgebra, h0: SymMat, k0: SymMat, t0: f64) -> Result<Self> {
        let spec = BianchiSpec { algebra, h0, k0, t0, split: None };
        spec.validate()?;
        Ok(spec)
    }

    /// Diagonal data on the Milnor algebra with structure triple lambda.
    pub fn milnor(lambda: [f64; 3], h: [f64; 3], k: [f64; 3], t0: f64) -> Result<Self> {
        Self::new(LieAlgebra::milnor(lambda), SymMat::diag(&h), SymMat::diag(&k), t0)
    }

    /// Model data at Hubble time t0.
    pub fn from_model(m: &ModelId, t0: f64) -> Result<Self> {
        let st = model_state(m, t0)?;
        let spec = BianchiSpec { algebra: m.algebra()?, h0: st.h, k0: st.k, t0, split: st.split };
        spec.validate()?;
        Ok(spec)
    }

    /// Diagonal Milnor data with scale factors a and K chosen to satisfy the
    /// Hamiltonian constraint: mixed K = −1/t0 + s·shear with s ≥ 0 solved.
    pub fn constraint_solved(lambda: [f64; 3], a: [f64; 3], shear: [f64; 3], t0: f64) -> Result<Self> {
        let mean = shear.iter().sum::<f64>() / 3.0;
        let sh = shear.map(|x| x - mean);
        let norm2: f64 = sh.iter().map(|x| x * x).sum();
        let h = a.map(|x| x * x);
        let r = scalar_curvature(&LieAlgebra::milnor(lambda), &SymMat::diag(&h))?;
        let need = r + 6.0 / (t0 * t0);
        if need < 0.0 {
            return Err(FlowError::Domain(format!(
                "no real shear solves the Hamiltonian constraint (R = {r}, t0 = {t0})"
            )));
        }
        if norm2 == 0.0 && need > 1e-14 / (t0 * t0) {
            return Err(FlowError::Domain("zero shear direction but nonzero shear required".into()));
        }
        let s = if norm2 > 0.0 { (need / norm2).sqrt() } else { 0.0 };
        let k = [0, 1, 2].map(|i| h[i] * (-1.0 / t0 + s * sh[i]));
        Self::milnor(lambda, h, k, t0)
    }

    pub fn with_split(mut self, fiber: Vec<usize>) -> Self {
        self.split = Some(SymmetrySplit { fiber });
        self
    }

    fn validate(&self) -> Result<()> {
        if self.h0.dim() != 3 || self.k0.dim() != 3 {
            return Err(FlowError::Domain("Bianchi data must be 3x3".into()));
        }
        if !(self.t0 > 0.0) {
            return Err(FlowError::Domain("t0 must be positive".into()));
        }
        self.h0.check_spd()?;
        let st = self.initial_state()?;
        let r = constraint_residuals(&st, &self.algebra)?;
        let t2 = self.t0 * self.t0;
        if (r.hamiltonian * t2).abs() > 1e-10 {
            return Err(FlowError::Domain(format!("Hamiltonian residual {:e} in initial data", r.hamiltonian * t2)));
        }
        if (r.gauge * self.t0).abs() > 1e-10 {
            return Err(FlowError::Gauge(format!("H(t0) differs from -3/t0 by {:e}", r.gauge)));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<FlowState> {
        let mut st =
            FlowState { t: self.t0, h: self.h0.clone(), k: self.k0.clone(), lapse: 1.0, split: self.split.clone() };
        st.lapse = cmc_lapse(self.t0, st.k0_sq()?, 3);
        Ok(st)
    }

    fn diagonal_kernel_ok(&self) -> bool {
        self.algebra.lambda.is_some() && self.h0.is_diagonal(0.0) && self.k0.is_diagonal(0.0)
    }
}

/// Algebraic CMC lapse of a homogeneous slice.
pub fn cmc_lapse(t: f64, k0sq: f64, n: usize) -> f64 {
    let n = n as f64;
    n / (n + t * t * k0sq)
}

/// Ricci of a diagonal left-invariant metric on a Milnor algebra.
pub fn ricci_left_invariant(lambda: [f64; 3], h: &SymMat) -> Result<SymMat> {
    if !h.is_diagonal(1e-14) {
        return Err(FlowError::Domain("metric must be diagonal in the Milnor frame".into()));
    }
    h.check_spd()?;
    let d = h.diagonal();
    Ok(SymMat::diag(&milnor_ricci_diag(&lambda, &[d[0], d[1], d[2]])))
}

/// Ricci tensor of any left-invariant metric in the algebra basis.
pub fn ricci_tensor(alg: &LieAlgebra, h: &SymMat) -> Result<SymMat> {
    h.check_spd()?;
    Ok(from_m3(&crate::algebra::ricci(alg, &to_m3(h))?))
}

pub fn scalar_curvature(alg: &LieAlgebra, h: &SymMat) -> Result<f64> {
    let ric = ricci_tensor(alg, h)?;
    let hinv = h.inverse()?;
    Ok((0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| hinv.get(i, j) * ric.get(i, j)).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// R − |K⁰|² + (1 − 1/n)H².
    pub hamiltonian: f64,
    /// |div K − dH|_h.
    pub momentum: f64,
    /// H + n/t.
    pub gauge: f64,
}

impl Residuals {
    /// Dimensionless versions: hamiltonian·t², momentum·t, gauge·t.
    pub fn scaled(&self, t: f64) -> [f64; 3] {
        [self.hamiltonian * t * t, self.momentum * t, self.gauge * t]
    }
}

pub fn constraint_residuals(state: &FlowState, alg: &LieAlgebra) -> Result<Residuals> {
    let h = state.h3();
    let k = state.k3();
    let frame = Frame::new(alg, &h)?;
    let ke = frame.to_frame(&k);
    let hm = ke.trace();
    let k2: f64 = ke.iter().map(|x| x * x).sum();
    let n = 3.0;
    let k0 = k2 - hm * hm / n;
    let r = frame.ricci_frame().trace();
    let div = frame.divergence(&ke);
    Ok(Residuals {
        hamiltonian: r - k0 + (1.0 - 1.0 / n) * hm * hm,
        momentum: div.iter().map(|x| x * x).sum::<f64>().sqrt(),
        gauge: hm + n / state.t,
    })
}

/// |Rm|_T from Gauss, Codazzi and the vacuum time-time block.
pub fn spacetime_curvature_norm(state: &FlowState, alg: &LieAlgebra) -> Result<f64> {
    Ok(spacetime_curvature_sq(alg, &state.h3(), &state.k3())?.sqrt())
}

/// (dh/dτ, dK/dτ) of the Hubble-gauge flow at a state.
pub fn flow_derivative(state: &FlowState, alg: &LieAlgebra) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    let h = state.h3();
    let k = state.k3();
    let ric = crate::algebra::ricci(alg, &h)?;
    Ok(full_rhs(state.t, &h, &k, &ric))
}

fn full_rhs(t: f64, h: &Matrix3<f64>, k: &Matrix3<f64>, ric: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let hinv = h.try_inverse().unwrap_or_else(Matrix3::zeros);
    let mixed = hinv * k;
    let hm = mixed.trace();
    let k2 = (mixed * mixed).trace();
    let l = cmc_lapse(t, k2 - hm * hm / 3.0, 3);
    let dh = k * (-2.0 * l * t);
    let dk = (k * hm - k * hinv * k * 2.0 + ric) * (l * t);
    (dh, dk)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Auto,
    Diagonal,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    /// Relative local error tolerance of the integrator.
    pub rtol: f64,
    /// Bound on the scaled constraint residuals.
    pub tol: f64,
    pub samples_per_decade: usize,
    pub extra_times: Vec<f64>,
    pub kernel: Kernel,
    /// Record the sup of t²|Rm|_T over accepted steps between samples.
    pub track_envelope: bool,
    /// Fixed number of steps without error control (order studies).
    pub fixed_steps: Option<usize>,
    pub max_steps: usize,
    pub max_halvings: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            rtol: 1e-10,
            tol: 1e-6,
            samples_per_decade: 200,
            extra_times: Vec::new(),
            kernel: Kernel::Auto,
            track_envelope: false,
            fixed_steps: None,
            max_steps: 20_000_000,
            max_halvings: 10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajStats {
    pub accepted: usize,
    pub rejected: usize,
    pub halvings: usize,
    /// Largest scaled residuals seen on accepted steps.
    pub max_hamiltonian: f64,
    pub max_momentum: f64,
    pub max_gauge: f64,
    /// Largest off-diagonal entry relative to the diagonal (full kernel only).
    pub max_offdiag: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub algebra: LieAlgebra,
    pub samples: Vec<FlowState>,
    /// sup of t²|Rm|_T over accepted steps in (t_{i-1}, t_i]; empty unless tracked.
    pub envelope: Vec<f64>,
    /// Cumulative ∫ n(−H)^{n−1}|K⁰|²L vol dt at each sample, integrated with
    /// the flow; empty for trajectories not produced by `evolve`.
    #[serde(default)]
    pub dissipation: Vec<f64>,
    /// Cumulative [∫ t|K⁰|L dτ, ∫ t|K⁰|²L dτ] at each sample, the path-length
    /// integrals behind the shape-drift bounds; empty unless produced by `evolve`.
    #[serde(default)]
    pub path_length: Vec<[f64; 2]>,
    pub stats: TrajStats,
}

impl Trajectory {
    /// Exact model states on the same time grid `evolve` would use.
    pub fn from_model(m: &ModelId, t0: f64, t1: f64, samples_per_decade: usize) -> Result<Self> {
        if !(t1 > t0) {
            return Err(FlowError::Domain(format!("end time {t1} must exceed t0 = {t0}")));
        }
        let cfg = EvolveConfig { samples_per_decade, ..Default::default() };
        let mut ts = vec![t0];
        ts.extend(sample_times(t0, t1, &cfg));
        let samples = ts.iter().map(|&t| model_state(m, t)).collect::<Result<Vec<_>>>()?;
        let envelope = ts
            .iter()
            .map(|&t| crate::models::model_curvature_norm(m, t).map(|c| t * t * c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            algebra: m.algebra()?,
            samples,
            envelope,
            dissipation: Vec::new(),
            path_length: Vec::new(),
            stats: TrajStats::default(),
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    /// State at an arbitrary time inside the span: cubic Hermite in τ using
    /// the flow derivative at the bracketing samples.
    pub fn state_at(&self, t: f64) -> Result<FlowState> {
        let (t0, t1) = self.span();
        let slack = 1e-12 * t1;
        if t < t0 - slack || t > t1 + slack {
            return Err(FlowError::Span { lo: t, hi: t, t0, t1 });
        }
        let idx = self.samples.partition_point(|s| s.t < t);
        if idx < self.samples.len() && (self.samples[idx].t - t).abs() <= 1e-14 * t {
            return Ok(self.samples[idx].clone());
        }
        let i = idx.clamp(1, self.samples.len() - 1) - 1;
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let (ta, tb) = (a.t.ln(), b.t.ln());
        let dt = tb - ta;
        let x = (t.ln() - ta) / dt;
        let (dha, dka) = flow_derivative(a, &self.algebra)?;
        let (dhb, dkb) = flow_derivative(b, &self.algebra)?;
        let h00 = 2.0 * x.powi(3) - 3.0 * x * x + 1.0;
        let h10 = x.powi(3) - 2.0 * x * x + x;
        let h01 = -2.0 * x.powi(3) + 3.0 * x * x;
        let h11 = x.powi(3) - x * x;
        let herm = |pa: Matrix3<f64>, da: Matrix3<f64>, pb: Matrix3<f64>, db: Matrix3<f64>| {
            pa * h00 + da * (h10 * dt) + pb * h01 + db * (h11 * dt)
        };
        // h = S exp(Y) S with S = h_a^{1/2}; mixed t·h⁻¹K. Both are exact for power laws.
        let ea = SymmetricEigen::new(a.h3());
        let sq = ea.eigenvectors * Matrix3::from_diagonal(&ea.eigenvalues.map(f64::sqrt)) * ea.eigenvectors.transpose();
        let isq = ea.eigenvectors
            * Matrix3::from_diagonal(&ea.eigenvalues.map(|v| 1.0 / v.sqrt()))
            * ea.eigenvectors.transpose();
        let ya_dot = isq * dha * isq;
        let eb = SymmetricEigen::new(isq * b.h3() * isq);
        let u = eb.eigenvectors;
        let mu = eb.eigenvalues;
        let yb = u * Matrix3::from_diagonal(&mu.map(f64::ln)) * u.transpose();
        let xb_dot = u.transpose() * (isq * dhb * isq) * u;
        let gamma = Matrix3::from_fn(|i, j| {
            let (p, q) = (mu[i], mu[j]);
            if (p - q).abs() <= 1e-9 * p.max(q) {
                2.0 / (p + q)
            } else {
                (p.ln() - q.ln()) / (p - q)
            }
        });
        let yb_dot = u * xb_dot.component_mul(&gamma) * u.transpose();
        let y = herm(Matrix3::zeros(), ya_dot, yb, yb_dot);
        let ey = SymmetricEigen::new((y + y.transpose()) * 0.5);
        let h = sq
            * (ey.eigenvectors * Matrix3::from_diagonal(&ey.eigenvalues.map(f64::exp)) * ey.eigenvectors.transpose())
            * sq;
        let mixed = |s: &FlowState, dh: &Matrix3<f64>, dk: &Matrix3<f64>| -> Result<(Matrix3<f64>, Matrix3<f64>)> {
            let hi = s.h3().try_inverse().ok_or_else(|| FlowError::Numeric("singular metric".into()))?;
            let m = hi * s.k3() * s.t;
            Ok((m, m - hi * dh * m + hi * dk * s.t))
        };
        let (ma, mda) = mixed(a, &dha, &dka)?;
        let (mb, mdb) = mixed(b, &dhb, &dkb)?;
        let m = herm(ma, mda, mb, mdb);
        let k = h * m / t;
        let (h, k) = ((h + h.transpose()) * 0.5, (k + k.transpose()) * 0.5);
        let mut st = FlowState { t, h: from_m3(&h), k: from_m3(&k), lapse: 1.0, split: a.split.clone() };
        st.lapse = cmc_lapse(t, st.k0_sq()?, 3);
        Ok(st)
    }
}

fn sample_times(t0: f64, t1: f64, cfg: &EvolveConfig) -> Vec<f64> {
    let mut out = Vec::new();
    if cfg.fixed_steps.is_none() && cfg.samples_per_decade > 0 {
        let spd = cfg.samples_per_decade as f64;
        let k0 = (t0.log10() * spd).floor() as i64;
        let k1 = (t1.log10() * spd).ceil() as i64;
        for k in k0..=k1 {
            let t = 10f64.powf(k as f64 / spd);
            if t > t0 * (1.0 + 1e-12) && t < t1 * (1.0 - 1e-12) {
                out.push(t);
            }
        }
        for &t in &cfg.extra_times {
            if t > t0 * (1.0 + 1e-12) && t < t1 * (1.0 - 1e-12) {
                out.push(t);
            }
        }
    }
    out.push(t1);
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    out
}

const FULL_IDX: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

fn pack_full(h: &Matrix3<f64>, k: &Matrix3<f64>, y: &mut [f64]) {
    for (n, &(i, j)) in FULL_IDX.iter().enumerate() {
        y[n] = h[(i, j)];
        y[6 + n] = k[(i, j)];
    }
}

fn unpack_full(y: &[f64]) -> (Matrix3<f64>, Matrix3<f64>) {
    let mut h = Matrix3::zeros();
    let mut k = Matrix3::zeros();
    for (n, &(i, j)) in FULL_IDX.iter().enumerate() {
        h[(i, j)] = y[n];
        h[(j, i)] = y[n];
        k[(i, j)] = y[6 + n];
        k[(j, i)] = y[6 + n];
    }
    (h, k)
}

enum Sys {
    Diag([f64; 3]),
    Full(Box<LieAlgebra>),
}

impl Sys {
    fn len(&self) -> usize {
        match self {
            Sys::Diag(_) => 6,
            Sys::Full(_) => 12,
        }
    }

    fn rhs(&self, tau: f64, y: &[f64], dy: &mut [f64]) {
        let t = tau.exp();
        match self {
            Sys::Diag(l) => {
                let h = [y[0], y[1], y[2]];
                let kap = [y[3] / y[0], y[4] / y[1], y[5] / y[2]];
                let hm = kap[0] + kap[1] + kap[2];
                let k2 = kap[0] * kap[0] + kap[1] * kap[1] + kap[2] * kap[2];
                let lapse = cmc_lapse(t, k2 - hm * hm / 3.0, 3);
                let ric = milnor_ricci_diag(l, &h);
                for i in 0..3 {
                    let k = y[3 + i];
                    dy[i] = -2.0 * lapse * t * k;
                    dy[3 + i] = lapse * t * (hm * k - 2.0 * k * kap[i] + ric[i]);
                }
            }
            Sys::Full(alg) => {
                let (h, k) = unpack_full(y);
                let ric = match crate::algebra::ricci(alg, &h) {
                    Ok(r) => r,
                    Err(_) => {
                        dy.iter_mut().for_each(|v| *v = f64::NAN);
                        return;
                    }
                };
                let (dh, dk) = full_rhs(t, &h, &k, &ric);
                pack_full(&dh, &dk, dy);
            }
        }
    }

    /// τ-rates of the carried integrals: Fischer–Moncrief dissipation
    /// t·n(−H)^{n−1}|K⁰|²L vol, then t|K⁰|L and t|K⁰|²L.
    fn integrands(&self, tau: f64, y: &[f64]) -> [f64; 3] {
        let t = tau.exp();
        let (hm, k2, vol) = match self {
            Sys::Diag(_) => {
                let kap = [y[3] / y[0], y[4] / y[1], y[5] / y[2]];
                let hm = kap[0] + kap[1] + kap[2];
                (hm, kap.iter().map(|x| x * x).sum::<f64>(), (y[0] * y[1] * y[2]).abs().sqrt())
            }
            Sys::Full(_) => {
                let (h, k) = unpack_full(y);
                let Some(hi) = h.try_inverse() else {
                    return [f64::NAN; 3];
                };
                let m = hi * k;
                (m.trace(), (m * m).trace(), h.determinant().abs().sqrt())
            }
        };
        let k0 = k2 - hm * hm / 3.0;
        let lapse = cmc_lapse(t, k0, 3);
        [t * 3.0 * hm * hm * k0 * lapse * vol, t * k0.max(0.0).sqrt() * lapse, t * k0 * lapse]
    }

    fn state(&self, t: f64, y: &[f64], split: &Option<SymmetrySplit>) -> FlowState {
        let (h, k) = match self {
            Sys::Diag(_) => (SymMat::diag(&y[0..3]), SymMat::diag(&y[3..6])),
            Sys::Full(_) => {
                let (h, k) = unpack_full(y);
                (from_m3(&h), from_m3(&k))
            }
        };
        let mut st = FlowState { t, h, k, lapse: 1.0, split: split.clone() };
        st.lapse = st.k0_sq().map(|k0| cmc_lapse(t, k0, 3)).unwrap_or(f64::NAN);
        st
    }

    fn floors(&self, t: f64, y: &[f64], out: &mut [f64]) {
        match self {
            Sys::Diag(_) => {
                for i in 0..3 {
                    out[i] = 0.0;
                    out[3 + i] = 1e-3 * y[i].abs() / t;
                }
            }
            Sys::Full(_) => {
                for (n, &(i, j)) in FULL_IDX.iter().enumerate() {
                    let s = (y[i].abs() * y[j].abs()).sqrt();
                    out[n] = if i == j { 0.0 } else { 1e-3 * s };
                    out[6 + n] = 1e-3 * s / t;
                }
            }
        }
    }
}

/// Integrate the Hubble-gauge flow from spec.t0 to t1.
pub fn evolve(spec: &BianchiSpec, t1: f64, cfg: &EvolveConfig) -> Result<Trajectory> {
    if !(t1 > spec.t0) {
        return Err(FlowError::Domain(format!("end time {t1} must exceed t0 = {}", spec.t0)));
    }
    if !(cfg.rtol > 0.0 && cfg.tol > 0.0) || cfg.samples_per_decade == 0 || cfg.fixed_steps == Some(0) {
        return Err(FlowError::Domain("rtol, tol, samples_per_decade and fixed_steps must be positive".into()));
    }
    let use_diag = match cfg.kernel {
        Kernel::Auto | Kernel::Diagonal => spec.diagonal_kernel_ok(),
        Kernel::Full => false,
    };
    if cfg.kernel == Kernel::Diagonal && !use_diag {
        return Err(FlowError::Unsupported("diagonal kernel needs diagonal data on a Milnor algebra".into()));
    }
    let sys = if use_diag {
        Sys::Diag(spec.algebra.lambda.expect("checked"))
    } else {
        Sys::Full(Box::new(spec.algebra.clone()))
    };
    let n = sys.len();
    // trailing slots carry the integrated dissipation and path lengths
    let mut y = vec![0.0; n + 3];
    if use_diag {
        let (hd, kd) = (spec.h0.diagonal(), spec.k0.diagonal());
        y[..3].copy_from_slice(&hd);
        y[3..6].copy_from_slice(&kd);
    } else {
        pack_full(&to_m3(&spec.h0), &to_m3(&spec.k0), &mut y);
    }

    let alg = &spec.algebra;
    let envelope_value = |st: &FlowState| -> f64 {
        spacetime_curvature_sq(alg, &st.h3(), &st.k3()).map(|v| st.t * st.t * v.sqrt()).unwrap_or(f64::NAN)
    };

    let first = sys.state(spec.t0, &y, &spec.split);
    let mut traj = Trajectory {
        algebra: spec.algebra.clone(),
        samples: vec![first.clone()],
        envelope: Vec::new(),
        dissipation: vec![0.0],
        path_length: vec![[0.0; 2]],
        stats: TrajStats::default(),
    };
    if cfg.track_envelope {
        traj.envelope.push(envelope_value(&first));
    }
    let mut env_max = f64::NEG_INFINITY;

    let targets = sample_times(spec.t0, t1, cfg);
    let mut work = Dp5::new(n + 3);
    let mut floor = vec![0.0; n];
    let mut tau = spec.t0.ln();
    let tau_end = t1.ln();
    let fixed_h = cfg.fixed_steps.map(|m| (tau_end - tau) / m as f64);
    let mut hstep = fixed_h.unwrap_or(1e-3);
    let mut halvings = 0usize;
    let mut f = |x: f64, yy: &[f64], dd: &mut [f64]| {
        sys.rhs(x, &yy[..n], &mut dd[..n]);
        dd[n..].copy_from_slice(&sys.integrands(x, &yy[..n]));
    };
    let mut ti = 0usize;
    let mut last_good = first;
    let mut steps = 0usize;

    while ti < targets.len() {
        let tau_target = targets[ti].ln();
        let remaining = tau_target - tau;
        let (h_try, lands) = if hstep >= remaining * (1.0 - 1e-12) { (remaining, true) } else { (hstep, false) };
        steps += 1;
        if steps > cfg.max_steps {
            return Err(FlowError::Evolution {
                t: tau.exp(),
                reason: "step budget exhausted".into(),
                last: Box::new(last_good),
            });
        }
        work.step(&mut f, tau, &y, h_try);
        let accept_err = if fixed_h.is_some() {
            0.0
        } else {
            sys.floors(tau.exp(), &y, &mut floor);
            work.error_norm(&y[..n], cfg.rtol, &floor)
        };
        if !accept_err.is_finite() || accept_err > 1.0 {
            traj.stats.rejected += 1;
            let fac = if accept_err.is_finite() { (0.9 * accept_err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
            hstep = h_try * fac;
            if hstep < 1e-14 * tau.abs().max(1.0) {
                return Err(FlowError::Evolution {
                    t: tau.exp(),
                    reason: "step size underflow".into(),
                    last: Box::new(last_good),
                });
            }
            continue;
        }
        let new_tau = if lands { tau_target } else { tau + h_try };
        let t_new = if lands { targets[ti] } else { new_tau.exp() };
        let st = sys.state(t_new, &work.y_new[..n], &spec.split);
        // constraint monitor
        let res = constraint_residuals(&st, alg).map(|r| r.scaled(t_new));
        let bad = match &res {
            Ok(r) => r.iter().any(|v| !(v.abs() <= cfg.tol)),
            Err(_) => true,
        };
        let offdiag = if use_diag {
            0.0
        } else {
            let (h, k) = unpack_full(&work.y_new[..n]);
            let rel = |m: &Matrix3<f64>| {
                let d = (0..3).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
                [m[(0, 1)], m[(0, 2)], m[(1, 2)]].iter().fold(0.0f64, |a, v| a.max(v.abs())) / d
            };
            rel(&h).max(rel(&k))
        };
        if bad {
            halvings += 1;
            traj.stats.halvings += 1;
            if halvings > cfg.max_halvings || fixed_h.is_some() {
                let why = match res {
                    Ok(r) => format!("scaled residuals {r:?} exceed tol {:e}", cfg.tol),
                    Err(e) => e.to_string(),
                };
                return Err(FlowError::Evolution { t: t_new, reason: why, last: Box::new(last_good) });
            }
            hstep = h_try * 0.5;
            continue;
        }
        halvings = 0;
        let r = res.expect("checked");
        traj.stats.accepted += 1;
        traj.stats.max_hamiltonian = traj.stats.max_hamiltonian.max(r[0].abs());
        traj.stats.max_momentum = traj.stats.max_momentum.max(r[1].abs());
        traj.stats.max_gauge = traj.stats.max_gauge.max(r[2].abs());
        traj.stats.max_offdiag = traj.stats.max_offdiag.max(offdiag);
        if cfg.track_envelope {
            env_max = env_max.max(envelope_value(&st));
        }
        tau = new_tau;
        y.copy_from_slice(&work.y_new);
        if let Some(fh) = fixed_h {
            hstep = fh;
        } else {
            let fac = if accept_err > 0.0 { (0.9 * accept_err.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
            // keep the natural step when we only shortened it to land on a sample
            hstep = if lands { hstep.max(h_try * fac) } else { h_try * fac };
        }
        if lands {
            if cfg.track_envelope {
                traj.envelope.push(env_max);
                env_max = f64::NEG_INFINITY;
            }
            traj.samples.push(st.clone());
            traj.dissipation.push(y[n]);
            traj.path_length.push([y[n + 1], y[n + 2]]);
            ti += 1;
        }
        last_good = st;
    }
    Ok(traj)
}

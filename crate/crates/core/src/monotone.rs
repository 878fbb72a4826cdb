//! Monotone and conserved functionals along homogeneous and Gowdy runs.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::algebra::LieAlgebra;
use crate::bianchi::{flow_derivative, scalar_curvature, Trajectory};
use crate::error::{FlowError, Result};
use crate::gowdy::{circle_integral, GowdyState, GowdyTrajectory};
use crate::models::{from_m3, FlowState};
use crate::numeric::{cumulative_trapezoid, derivative_series, gauss_legendre, linear_fit};
use crate::tensor::{hnorm_sq, shape_distance, traceless_split, SymMat};

pub use crate::gowdy::{twisted_energy, TwistFields};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Nonincreasing,
    Nondecreasing,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneSeries {
    pub name: String,
    pub samples: Vec<(f64, f64)>,
    pub direction: Direction,
    /// Relative identity residual per sample; empty when no identity applies.
    pub residuals: Vec<f64>,
    /// Set when the series is constant and the state matches the rigid model.
    pub rigid: bool,
}

impl MonotoneSeries {
    pub fn new(name: &str, samples: Vec<(f64, f64)>, direction: Direction) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(FlowError::Domain(format!("series {name}: times not strictly increasing")));
        }
        Ok(MonotoneSeries { name: name.into(), samples, direction, residuals: Vec::new(), rigid: false })
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// (max − min) / max |value|.
    pub fn relative_variation(&self) -> f64 {
        let v = self.values();
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale > 0.0 {
            (hi - lo) / scale
        } else {
            0.0
        }
    }

    /// Slope of ln|value| against ln t.
    pub fn loglog_slope(&self) -> Result<f64> {
        let xs: Vec<f64> = self.samples.iter().map(|s| s.0.ln()).collect();
        let ys: Vec<f64> = self.samples.iter().map(|s| s.1.abs().ln()).collect();
        Ok(linear_fit(&xs, &ys)?.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    /// Largest step against the expected direction, relative to the local value.
    pub worst_violation: f64,
    /// Index of the step i → i+1 realizing it, when the check fails.
    pub index: Option<usize>,
    pub total_variation: f64,
    pub max_residual: f64,
}

/// Direction check with relative per-step tolerance.
pub fn monotone_check(series: &MonotoneSeries, tol: f64) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut at = None;
    for (i, w) in series.samples.windows(2).enumerate() {
        let scale = w[0].1.abs().max(w[1].1.abs()).max(f64::MIN_POSITIVE);
        let d = (w[1].1 - w[0].1) / scale;
        let v = match series.direction {
            Direction::Nonincreasing => d,
            Direction::Nondecreasing => -d,
            Direction::Constant => d.abs(),
        };
        if v > worst {
            worst = v;
            at = Some(i);
        }
    }
    if series.samples.len() < 2 {
        worst = 0.0;
    }
    let tv = series.relative_variation();
    let pass = worst <= tol && (series.direction != Direction::Constant || tv <= tol);
    Verdict {
        pass,
        worst_violation: worst,
        index: if pass { None } else { at },
        total_variation: tv,
        max_residual: series.max_residual(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub scenario: String,
    pub tol: f64,
    pub entries: Vec<ReportEntry>,
    pub pass: bool,
}

impl FunctionalReport {
    pub fn new(scenario: &str, tol: f64) -> Self {
        FunctionalReport { scenario: scenario.into(), tol, entries: Vec::new(), pass: true }
    }

    pub fn add(&mut self, series: &MonotoneSeries) -> &Verdict {
        let verdict = monotone_check(series, self.tol);
        self.pass &= verdict.pass;
        self.entries.push(ReportEntry { name: series.name.clone(), verdict });
        &self.entries.last().expect("just pushed").verdict
    }
}

fn log_derivative(times: &[f64], values: &[f64]) -> Vec<f64> {
    let taus: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    derivative_series(&taus, values)
}

/// (−H)ⁿ·vol per comoving cell, with the residual of
/// d/dt[(−H)ⁿ vol] = −n(−H)^{n−1}|K⁰|²L vol relative to the value.
pub fn fm_volume_states(states: &[FlowState]) -> Result<MonotoneSeries> {
    let mut samples = Vec::with_capacity(states.len());
    let mut rhs = Vec::with_capacity(states.len());
    let mut k0max = 0.0f64;
    for s in states {
        let n = s.dim() as f64;
        let d = traceless_split(&s.k, &s.h)?;
        let k0 = hnorm_sq(&d.traceless, &s.h)?;
        let vol = s.volume();
        let mh = -d.trace;
        samples.push((s.t, mh.powf(n) * vol));
        // d/dτ of the value predicted by the identity
        rhs.push(-s.t * n * mh.powf(n - 1.0) * k0 * s.lapse * vol);
        k0max = k0max.max(s.t * k0.sqrt());
    }
    let mut series = MonotoneSeries::new("fm_volume", samples, Direction::Nonincreasing)?;
    let (ts, vs) = (series.times(), series.values());
    let fd = log_derivative(&ts, &vs);
    series.residuals = fd.iter().zip(&rhs).zip(&vs).map(|((a, b), v)| (a - b).abs() / v.abs()).collect();
    series.rigid = series.relative_variation() <= 1e-10 && k0max <= 1e-8;
    Ok(series)
}

/// On evolved runs the identity is checked in integrated form per sample
/// interval against the dissipation carried by the integrator.
pub fn fm_volume(traj: &Trajectory) -> Result<MonotoneSeries> {
    let mut series = fm_volume_states(&traj.samples)?;
    let d = &traj.dissipation;
    if d.len() == traj.samples.len() {
        let v = series.values();
        series.residuals = (0..v.len())
            .map(|i| if i == 0 { 0.0 } else { ((v[i] - v[i - 1]) + (d[i] - d[i - 1])).abs() / v[i].abs() })
            .collect();
    }
    Ok(series)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvolEstimate {
    /// t^{−n}·vol at the final sample; an upper bound for the limit.
    pub value: f64,
    /// Fitted slope of ln(t^{−n} vol) against ln t.
    pub exponent: f64,
    pub window: (f64, f64),
}

/// Upper bound and decay rate of the normalized volume over the last decade.
pub fn dvol_infty_estimate(traj: &Trajectory) -> Result<DvolEstimate> {
    let (t0, t1) = traj.span();
    if (t1 / t0).log10() < 0.5 {
        return Err(FlowError::InsufficientData(format!("span [{t0}, {t1}] shorter than half a decade")));
    }
    let lo = (t1 / 10.0).max(t0);
    let pts: Vec<&FlowState> = traj.samples.iter().filter(|s| s.t >= lo * (1.0 - 1e-12)).collect();
    let xs: Vec<f64> = pts.iter().map(|s| s.t.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|s| (s.volume() * s.t.powi(-(s.dim() as i32))).ln()).collect();
    let (slope, _) = linear_fit(&xs, &ys)?;
    let last = traj.samples.last().expect("nonempty");
    Ok(DvolEstimate { value: last.volume() * last.t.powi(-(last.dim() as i32)), exponent: slope, window: (lo, t1) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleIntegrals {
    pub times: Vec<f64>,
    /// Cumulative ∫ t²|K⁰|²L, ∫(1 − L), ∫ t²|R + n(n−1)/t²|L in dt/t.
    pub plain: [Vec<f64>; 3],
    /// Same with the weight t^{−n} vol.
    pub weighted: [Vec<f64>; 3],
    /// Weighted integral over each full decade (t_lo of the decade, values).
    pub decade_tails: Vec<(f64, [f64; 3])>,
    pub nonnegative: bool,
    /// The weight decays to zero, so the weighted statements carry no information.
    pub vacuous: bool,
}

pub fn scale_invariant_integrals(traj: &Trajectory) -> Result<ScaleIntegrals> {
    let alg = &traj.algebra;
    let times = traj.times();
    let mut dens: [Vec<f64>; 3] = Default::default();
    let mut wdens: [Vec<f64>; 3] = Default::default();
    let mut nonneg = true;
    for s in &traj.samples {
        let n = s.dim() as f64;
        let d = traceless_split(&s.k, &s.h)?;
        let k0 = hnorm_sq(&d.traceless, &s.h)?;
        let r = scalar_curvature(alg, &s.h)?;
        let t = s.t;
        let vals = [t * t * k0 * s.lapse, 1.0 - s.lapse, t * t * (r + n * (n - 1.0) / (t * t)).abs() * s.lapse];
        nonneg &= vals[1] >= -1e-14;
        let w = s.volume() * t.powf(-n);
        for i in 0..3 {
            dens[i].push(vals[i]);
            wdens[i].push(vals[i] * w);
        }
    }
    let taus: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let plain = [0, 1, 2].map(|i| cumulative_trapezoid(&taus, &dens[i]));
    let weighted = [0, 1, 2].map(|i| cumulative_trapezoid(&taus, &wdens[i]));
    let mut tails = Vec::new();
    let (t0, t1) = traj.span();
    let mut lo = t0;
    while lo * 10.0 <= t1 * (1.0 + 1e-12) {
        let hi = lo * 10.0;
        let ia = times.partition_point(|&t| t < lo * (1.0 - 1e-12));
        let ib = times.partition_point(|&t| t <= hi * (1.0 + 1e-12)) - 1;
        tails.push((lo, [0, 1, 2].map(|i| weighted[i][ib] - weighted[i][ia])));
        lo = hi;
    }
    let vacuous = match dvol_infty_estimate(traj) {
        Ok(e) => e.exponent < -0.5,
        Err(_) => false,
    };
    Ok(ScaleIntegrals { times, plain, weighted, decade_tails: tails, nonnegative: nonneg, vacuous })
}

/// L¹ norms over u ∈ [Λ⁻¹, Λ] of 1 − L_s, |K⁰_s|²L_s and |R_s + n(n−1)/u²|L_s.
pub fn rescaled_l1_report(traj: &Trajectory, s: f64, lam: f64) -> Result<[f64; 3]> {
    if !(lam > 1.0) || !(s > 0.0) {
        return Err(FlowError::Domain("need s > 0 and Λ > 1".into()));
    }
    let (t0, t1) = traj.span();
    if s / lam < t0 * (1.0 - 1e-12) || s * lam > t1 * (1.0 + 1e-12) {
        return Err(FlowError::Span { lo: s / lam, hi: s * lam, t0, t1 });
    }
    let alg = &traj.algebra;
    let mut out = [0.0; 3];
    for (which, slot) in out.iter_mut().enumerate() {
        *slot = gauss_legendre(
            |lu| {
                let u = lu.exp();
                let st = traj.state_at((s * u).clamp(t0, t1))?;
                let n = st.dim() as f64;
                let l = st.lapse;
                let v = match which {
                    0 => 1.0 - l,
                    1 => s * s * st.k0_sq()? * l,
                    _ => (s * s * scalar_curvature(alg, &st.h)? + n * (n - 1.0) / (u * u)).abs() * l,
                };
                Ok(v * u)
            },
            -lam.ln(),
            lam.ln(),
            64,
        )?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeDrift {
    pub distance: f64,
    /// 2∫|K⁰|L along the path.
    pub bound_l1: f64,
    /// 2(Λ−1)^{1/2}(∫|K⁰_s|²L_s du)^{1/2}.
    pub bound_cs: f64,
    pub holds: bool,
}

pub const SHAPE_SLACK: f64 = 1e-9;

fn sample_index(traj: &Trajectory, t: f64) -> Option<usize> {
    let i = traj.samples.partition_point(|st| st.t < t * (1.0 - 1e-12));
    (i < traj.samples.len() && (traj.samples[i].t - t).abs() <= 1e-12 * t).then_some(i)
}

/// Shape distance between the rescaled metrics at u = 1 and u = Λ against its path-length bounds.
pub fn shape_drift_check(traj: &Trajectory, s: f64, lam: f64) -> Result<ShapeDrift> {
    let (t0, t1) = traj.span();
    if !(lam > 1.0) || s < t0 * (1.0 - 1e-12) || s * lam > t1 * (1.0 + 1e-12) {
        return Err(FlowError::Span { lo: s, hi: s * lam, t0, t1 });
    }
    if let (Some(i), Some(j)) = (sample_index(traj, s), sample_index(traj, s * lam)) {
        if traj.path_length.len() == traj.samples.len() {
            // exact endpoints and integrals carried by the integrator
            let distance = shape_distance(&traj.samples[i].h, &traj.samples[j].h)?;
            let (la, lb) = (traj.path_length[i], traj.path_length[j]);
            let l1 = 2.0 * (lb[0] - la[0]);
            let bound_cs = 2.0 * (lam - 1.0).sqrt() * (s * (lb[1] - la[1])).max(0.0).sqrt();
            let holds = distance <= l1.min(bound_cs) + SHAPE_SLACK;
            return Ok(ShapeDrift { distance, bound_l1: l1, bound_cs, holds });
        }
    }
    let a = traj.state_at(s.max(t0))?;
    let b = traj.state_at((s * lam).min(t1))?;
    let distance = shape_distance(&a.h, &b.h)?;
    let (ta, tb) = (s.max(t0).ln(), (s * lam).min(t1).ln());
    let panels = ((tb - ta) / 0.01).ceil().max(8.0) as usize;
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    gauss_legendre(
        |tau| {
            let st = traj.state_at(tau.exp().clamp(t0, t1))?;
            let k0 = st.k0_sq()?;
            let t = st.t;
            l1 += 0.0;
            Ok(t * k0.sqrt() * st.lapse)
        },
        ta,
        tb,
        panels,
    )
    .map(|v| l1 = 2.0 * v)?;
    gauss_legendre(
        |tau| {
            let st = traj.state_at(tau.exp().clamp(t0, t1))?;
            Ok(s * st.t * st.k0_sq()? * st.lapse)
        },
        ta,
        tb,
        panels,
    )
    .map(|v| l2 = v)?;
    let bound_cs = 2.0 * (lam - 1.0).sqrt() * l2.max(0.0).sqrt();
    let holds = distance <= l1.min(bound_cs) + SHAPE_SLACK;
    Ok(ShapeDrift { distance, bound_l1: l1, bound_cs, holds })
}

/// Per-point shape drift of the spatial metric over a Gowdy run; returns the
/// point with the smallest margin bound − distance.
pub fn gowdy_shape_drift(traj: &GowdyTrajectory) -> Result<ShapeDrift> {
    let states = &traj.states;
    if states.len() < 3 {
        return Err(FlowError::InsufficientData("need at least three stored slices".into()));
    }
    let n = states[0].n_theta();
    let xs: Vec<f64> = states.iter().map(|s| s.r.ln()).collect();
    // integrand R·½|traceless(h⁻¹h_R)|_F in ln R, one vector per slice
    let mut dens = vec![vec![0.0; n]; states.len()];
    for (k, st) in states.iter().enumerate() {
        for i in 0..n {
            let (h, hr) = st.spatial_metric(i);
            let hs = SymMat::from_matrix(&h);
            let kr = SymMat::from_matrix(&(hr * 0.5));
            let d = traceless_split(&kr, &hs)?;
            dens[k][i] = st.r * hnorm_sq(&d.traceless, &hs)?.sqrt();
        }
    }
    let (first, last) = (&states[0], &states[states.len() - 1]);
    let mut worst: Option<ShapeDrift> = None;
    for i in 0..n {
        let col: Vec<f64> = dens.iter().map(|d| d[i]).collect();
        let len = 2.0 * simpson(&xs, &col);
        let (ha, _) = first.spatial_metric(i);
        let (hb, _) = last.spatial_metric(i);
        let dist = shape_distance(&SymMat::from_matrix(&ha), &SymMat::from_matrix(&hb))?;
        let cand =
            ShapeDrift { distance: dist, bound_l1: len, bound_cs: f64::INFINITY, holds: dist <= len + SHAPE_SLACK };
        let margin = len - dist;
        if worst.as_ref().is_none_or(|w| margin < w.bound_l1 - w.distance) {
            worst = Some(cand);
        }
    }
    Ok(worst.expect("n > 0"))
}

/// Composite Simpson on a possibly nonuniform grid (pairs of intervals, trapezoid for a leftover).
fn simpson(xs: &[f64], ys: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut i = 0;
    while i + 2 < xs.len() {
        let (h0, h1) = (xs[i + 1] - xs[i], xs[i + 2] - xs[i + 1]);
        let hs = h0 + h1;
        s += hs / 6.0 * (ys[i] * (2.0 - h1 / h0) + ys[i + 1] * hs * hs / (h0 * h1) + ys[i + 2] * (2.0 - h0 / h1));
        i += 2;
    }
    if i + 1 < xs.len() {
        s += 0.5 * (ys[i] + ys[i + 1]) * (xs[i + 1] - xs[i]);
    }
    s
}

fn inv2(g: &Matrix2<f64>) -> Matrix2<f64> {
    g.try_inverse().unwrap_or_else(Matrix2::zeros)
}

/// Σ_θ of Tr((G⁻¹G_R)²) and Tr((G⁻¹G_θ)²) as periodic integrals.
fn gowdy_traces(st: &GowdyState) -> (f64, f64) {
    let gth = st.g_theta();
    let n = st.n_theta();
    let mut tr_r = vec![0.0; n];
    let mut tr_t = vec![0.0; n];
    for i in 0..n {
        let gi = inv2(&st.g_matrix(i));
        let xr = gi * st.g_r(i);
        let xt = gi * gth[i];
        tr_r[i] = (xr * xr).trace();
        tr_t[i] = (xt * xt).trace();
    }
    (circle_integral(&tr_r), circle_integral(&tr_t))
}

/// ℰ in conformal areal gauge (a ≡ 1): ∫[Tr((G⁻¹G_θ)²) + Tr((G⁻¹G_R)²)]dθ.
pub fn gowdy_energy(st: &GowdyState) -> f64 {
    let (r, t) = gowdy_traces(st);
    r + t
}

/// (ln det G)_R, checked to be spatially constant.
pub fn dlndet_dr(st: &GowdyState) -> Result<f64> {
    let vals: Vec<f64> = (0..st.n_theta()).map(|i| (inv2(&st.g_matrix(i)) * st.g_r(i)).trace()).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let dev = vals.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    if dev > 1e-8 * mean.abs().max(1e-300) {
        return Err(FlowError::Gauge(format!("det G not spatially constant (spread {dev:e})")));
    }
    Ok(mean)
}

/// Ê = 2ℰ/((ln det G)_R √det G).
pub fn gowdy_energy_hat(st: &GowdyState) -> Result<f64> {
    let d = dlndet_dr(st)?;
    if d.abs() < 1e-14 {
        return Err(FlowError::Domain("(ln det G)_R vanishes: Ê undefined".into()));
    }
    let sq = st.g_matrix(0).determinant().sqrt();
    Ok(2.0 * gowdy_energy(st) / (d * sq))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyIdentity {
    /// Relative residual of dÊ/dR = −(1/R)∫Tr((G⁻¹G_R)²) per interior slice.
    pub stated: Vec<f64>,
    /// Same with the coefficient 2/R.
    pub corrected: Vec<f64>,
}

impl EnergyIdentity {
    pub fn max_stated(&self) -> f64 {
        self.stated.iter().fold(0.0f64, |m, v| m.max(*v))
    }
    pub fn max_corrected(&self) -> f64 {
        self.corrected.iter().fold(0.0f64, |m, v| m.max(*v))
    }
}

/// Ê along the run (nonincreasing) with the dissipation identity residuals.
pub fn gowdy_energy_series(traj: &GowdyTrajectory) -> Result<(MonotoneSeries, EnergyIdentity)> {
    let mut samples = Vec::new();
    let mut diss = Vec::new();
    for st in &traj.states {
        samples.push((st.r, gowdy_energy_hat(st)?));
        // ∫ L⁻¹ Tr((G⁻¹G_R)²) dvol with L⁻¹ dvol = dθ
        diss.push(gowdy_traces(st).0);
    }
    let mut series = MonotoneSeries::new("gowdy_energy_hat", samples, Direction::Nonincreasing)?;
    let (rs, vs) = (series.times(), series.values());
    let d = derivative_series(&rs, &vs);
    let m = rs.len();
    let mut id = EnergyIdentity { stated: Vec::new(), corrected: Vec::new() };
    let mut res = vec![0.0; m];
    for i in 2..m.saturating_sub(2) {
        let stated = -diss[i] / rs[i];
        let corrected = 2.0 * stated;
        let rs_ = (d[i] - stated).abs() / stated.abs().max(1e-300);
        id.stated.push(rs_);
        id.corrected.push((d[i] - corrected).abs() / corrected.abs().max(1e-300));
        res[i] = rs_;
    }
    series.residuals = res;
    Ok((series, id))
}

/// M(R) = (∂_R ln det G)∫L⁻¹dvol with the residual of
/// dM/dR = −½(∂_R ln det G)²∫L⁻¹dvol (F = 0).
pub fn equivolume_momentum(traj: &GowdyTrajectory) -> Result<MonotoneSeries> {
    let mut samples = Vec::new();
    let mut rhs = Vec::new();
    for st in &traj.states {
        let d = dlndet_dr(st)?;
        let lapse = st.lapse();
        let dens: Vec<f64> = (0..st.n_theta())
            .map(|i| {
                let (h, _) = st.spatial_metric(i);
                h[(0, 0)].sqrt() / lapse[i]
            })
            .collect();
        let vol = circle_integral(&dens);
        samples.push((st.r, d * vol));
        rhs.push(-0.5 * d * d * vol);
    }
    let mut series = MonotoneSeries::new("equivolume_momentum", samples, Direction::Nonincreasing)?;
    let (rs, vs) = (series.times(), series.values());
    let d = derivative_series(&rs, &vs);
    series.residuals = d.iter().zip(&rhs).map(|(a, b)| (a - b).abs() / b.abs().max(1e-300)).collect();
    Ok(series)
}

/// Base/fiber decomposition of one homogeneous state for the reduced volume.
struct Reduced {
    t: f64,
    hat_h: f64,
    vol: f64,
    hat_l: f64,
    k0hat_sq: f64,
    s0_sq: f64,
    dlndet_hat: f64,
    r_hat: f64,
    dhat_h_dt: f64,
    dlndet_g: f64,
    f0_max: f64,
}

fn block(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn split_algebra(alg: &LieAlgebra, fiber: &[usize]) -> Result<LieAlgebra> {
    let mut c = alg.c;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let touches = fiber.contains(&i) || fiber.contains(&j);
                if touches && alg.c[i][j][k].abs() > 1e-14 {
                    return Err(FlowError::Domain(format!(
                        "declared split invalid: fiber direction does not commute ([X{i}, X{j}] has X{k} component)"
                    )));
                }
                if fiber.contains(&k) {
                    if alg.c[i][j][k].abs() > 1e-14 {
                        return Err(FlowError::Unsupported("fiber bundle with curvature (F_ij ≠ 0)".into()));
                    }
                    c[i][j][k] = 0.0;
                }
            }
        }
    }
    Ok(LieAlgebra { c, lambda: None })
}

fn tr_prod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a * b).trace()
}

fn reduce(st: &FlowState, alg: &LieAlgebra, base_alg: &LieAlgebra, fiber: &[usize]) -> Result<Reduced> {
    let dim = st.dim();
    let base: Vec<usize> = (0..dim).filter(|i| !fiber.contains(i)).collect();
    let (nn, nf) = (base.len() as f64, fiber.len() as f64);
    let h = st.h.to_matrix();
    let k = st.k.to_matrix();
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let kscale = k.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let hbf = block(&h, &base, fiber);
    let kbf = block(&k, &base, fiber);
    if hbf.iter().any(|v| v.abs() > 1e-12 * scale) || kbf.iter().any(|v| v.abs() > 1e-12 * kscale) {
        return Err(FlowError::Unsupported("base and fiber not orthogonal".into()));
    }
    let (g, gf) = (block(&h, &base, &base), block(&h, fiber, fiber));
    let (kb, kf) = (block(&k, &base, &base), block(&k, fiber, fiber));
    let gi = g.clone().try_inverse().ok_or_else(|| FlowError::Numeric("singular base metric".into()))?;
    let gfi = gf.clone().try_inverse().ok_or_else(|| FlowError::Numeric("singular fiber metric".into()))?;
    let det_g = gf.determinant();
    let c = det_g.powf(1.0 / (nn - 1.0));
    let trb = tr_prod(&gi, &kb);
    let trf = tr_prod(&gfi, &kf);
    let p = trb + nn / (nn - 1.0) * trf;
    let hat_h = p / c.sqrt();
    let vol = c.powf(nn / 2.0) * g.determinant().sqrt();
    let l = st.lapse;
    let hat_l = c.sqrt() * l;
    let mb = &gi * &kb;
    let k0b = (&mb * &mb).trace() - trb * trb / nn;
    let k0hat_sq = k0b / c;
    let mf = &gfi * &kf;
    // G⁻¹G_t = −2L G⁻¹K_f; traceless part squared
    let s0_sq = 4.0 * l * l * ((&mf * &mf).trace() - trf * trf / nf);
    let dlndet_g = -2.0 * l * trf;
    let dlndet_hat = dlndet_g * (nf + nn - 1.0) / (nn - 1.0);
    // scalar curvature of ĝ = c·g via the base algebra with the fiber made flat
    let mut hp = DMatrix::<f64>::identity(dim, dim);
    for (a, &i) in base.iter().enumerate() {
        for (b, &j) in base.iter().enumerate() {
            hp[(i, j)] = g[(a, b)];
        }
    }
    let r_hat = scalar_curvature(base_alg, &SymMat::from_matrix(&hp))? / c;
    // dĤ/dt by the chain rule along the flow
    let (dh, dk) = flow_derivative(st, alg)?;
    let to_d = |m: &nalgebra::Matrix3<f64>| DMatrix::from_fn(3, 3, |i, j| m[(i, j)] / st.t);
    let (hd, kd) = (to_d(&dh), to_d(&dk));
    let (gd, gfd) = (block(&hd, &base, &base), block(&hd, fiber, fiber));
    let (kbd, kfd) = (block(&kd, &base, &base), block(&kd, fiber, fiber));
    let pdot = tr_prod(&gi, &kbd) - (&gi * &gd * &gi * &kb).trace()
        + nn / (nn - 1.0) * (tr_prod(&gfi, &kfd) - (&gfi * &gfd * &gfi * &kf).trace());
    let cdot_c = tr_prod(&gfi, &gfd) / (nn - 1.0);
    let dhat_h_dt = (pdot - 0.5 * cdot_c * p) / c.sqrt();
    // F^I_{0i} = ∂_t(G⁻¹h_fb) = −2L G⁻¹K_fb when h_fb = 0
    let f0 = &gfi * block(&k, fiber, &base) * (-2.0 * l);
    let f0_max = f0.iter().fold(0.0f64, |m, v| m.max(v.abs())) * st.t;
    Ok(Reduced { t: st.t, hat_h, vol, hat_l, k0hat_sq, s0_sq, dlndet_hat, r_hat, dhat_h_dt, dlndet_g, f0_max })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticCheck {
    /// max |K̂⁰|/|Ĥ|.
    pub k0_rel: f64,
    /// max t·|∂_t ln det G|.
    pub dlndet: f64,
    /// max t·|F^I_{0i}|.
    pub f0: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedVolumeReport {
    pub n: usize,
    pub fiber_dim: usize,
    /// (−Ĥ)ⁿ vol with the dissipation identity residual per sample.
    pub series: MonotoneSeries,
    /// max relative residual of the energy identity.
    pub energy_residual: f64,
    /// max relative residual of the dissipation identity.
    pub dissipation_residual: f64,
    /// max of (L̂ − nĤ⁻²dĤ/dt)/L̂; nonpositive when the lapse bound holds.
    pub lapse_bound_excess: f64,
    pub exponent: f64,
    pub rigid: bool,
    pub static_check: Option<StaticCheck>,
}

/// Reduced volume of a homogeneous run along its declared fiber.
pub fn reduced_volume(traj: &Trajectory) -> Result<ReducedVolumeReport> {
    let split = traj.samples[0]
        .split
        .clone()
        .ok_or_else(|| FlowError::Domain("no symmetry split declared on the trajectory".into()))?;
    reduced_volume_with(traj, &split.fiber)
}

pub fn reduced_volume_with(traj: &Trajectory, fiber: &[usize]) -> Result<ReducedVolumeReport> {
    let dim = traj.samples[0].dim();
    let mut fib = fiber.to_vec();
    fib.sort_unstable();
    fib.dedup();
    if fib.is_empty() || fib.iter().any(|&i| i >= dim) {
        return Err(FlowError::Domain(format!("declared split {fiber:?} invalid")));
    }
    let n = dim - fib.len();
    if n < 2 {
        return Err(FlowError::Unsupported(format!("reduced volume needs a base of dimension ≥ 2, got {n}")));
    }
    let base_alg = split_algebra(&traj.algebra, &fib)?;
    let reds = traj.samples.iter().map(|s| reduce(s, &traj.algebra, &base_alg, &fib)).collect::<Result<Vec<_>>>()?;
    let nf = n as f64;
    let nfib = fib.len() as f64;
    let coef = (nf - 1.0) / (4.0 * nfib * (nf + nfib - 1.0));
    let mut samples = Vec::new();
    let mut pred = Vec::new();
    let mut energy_res = 0.0f64;
    let mut excess = f64::NEG_INFINITY;
    for r in &reds {
        let mh = -r.hat_h;
        let v = mh.powf(nf) * r.vol;
        samples.push((r.t, v));
        let bracket = r.hat_l * r.k0hat_sq + 0.25 / r.hat_l * r.s0_sq + coef / r.hat_l * r.dlndet_hat.powi(2);
        pred.push(-nf * mh.powf(nf - 1.0) * bracket * r.vol);
        let il2 = 1.0 / (r.hat_l * r.hat_l);
        let energy = nf / (nf - 1.0)
            * mh.powf(nf - 2.0)
            * (-r.r_hat + r.k0hat_sq + 0.25 * il2 * r.s0_sq + coef * il2 * r.dlndet_hat.powi(2))
            * r.vol;
        energy_res = energy_res.max((energy - v).abs() / v.abs());
        let bound = nf / (r.hat_h * r.hat_h) * r.dhat_h_dt;
        excess = excess.max((r.hat_l - bound) / r.hat_l);
    }
    let mut series = MonotoneSeries::new("reduced_volume", samples, Direction::Nonincreasing)?;
    let (ts, vs) = (series.times(), series.values());
    let d = log_derivative(&ts, &vs);
    // d/dτ = t d/dt
    series.residuals = (0..ts.len()).map(|i| (d[i] - ts[i] * pred[i]).abs() / vs[i].abs()).collect();
    let dissipation_residual = series.max_residual();
    let exponent = series.loglog_slope()?;
    let constant = series.relative_variation() <= 1e-10;
    let static_check = if constant {
        let k0_rel = reds.iter().fold(0.0f64, |m, r| m.max(r.k0hat_sq.max(0.0).sqrt() / r.hat_h.abs()));
        let dlndet = reds.iter().fold(0.0f64, |m, r| m.max(r.t * r.dlndet_g.abs()));
        let f0 = reds.iter().fold(0.0f64, |m, r| m.max(r.f0_max));
        Some(StaticCheck { k0_rel, dlndet, f0, pass: k0_rel < 1e-8 && dlndet < 1e-8 && f0 < 1e-10 })
    } else {
        None
    };
    let rigid = static_check.as_ref().is_some_and(|s| s.pass);
    series.rigid = rigid;
    Ok(ReducedVolumeReport {
        n,
        fiber_dim: fib.len(),
        series,
        energy_residual: energy_res,
        dissipation_residual,
        lapse_bound_excess: excess,
        exponent,
        rigid,
        static_check,
    })
}

/// Convenience: SymMat view of a nalgebra block, used by callers building custom splits.
pub fn sym_block(s: &SymMat, idx: &[usize]) -> SymMat {
    from_m3(&nalgebra::Matrix3::from_fn(
        |i, j| {
            if i < idx.len() && j < idx.len() {
                s.get(idx[i], idx[j])
            } else {
                0.0
            }
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelId;
    use approx::assert_relative_eq;

    fn series(vals: &[f64], dir: Direction) -> MonotoneSeries {
        MonotoneSeries::new("s", vals.iter().enumerate().map(|(i, &v)| (i as f64 + 1.0, v)).collect(), dir).unwrap()
    }

    #[test]
    fn check_examples() {
        assert!(monotone_check(&series(&[3.0, 2.0, 1.0], Direction::Nonincreasing), 1e-10).pass);
        let tol = 1e-6;
        let v = monotone_check(&series(&[1.0, 1.0 - 1e-3, 1.0 - 1e-3 + 2.0 * tol, 0.9], Direction::Nonincreasing), tol);
        assert!(!v.pass);
        assert_eq!(v.index, Some(1));
        assert!(monotone_check(&series(&[2.0, 2.0, 2.0], Direction::Constant), 1e-12).pass);
        assert!(!monotone_check(&series(&[2.0, 2.1, 2.0], Direction::Constant), 1e-3).pass);
    }

    #[test]
    fn nonincreasing_times_rejected() {
        assert!(MonotoneSeries::new("x", vec![(1.0, 1.0), (1.0, 2.0)], Direction::Constant).is_err());
    }

    #[test]
    fn fm_volume_kasner_law() {
        let m = ModelId::Kasner { p: [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0] };
        let tr = Trajectory::from_model(&m, 1.0, 100.0, 200).unwrap();
        let s = fm_volume(&tr).unwrap();
        for (t, v) in &s.samples {
            // (−H)³ vol = 27 t⁻³ (t/3) = 9 t⁻²... per cell with u = t/3: u^{-2}
            assert_relative_eq!(*v, (t / 3.0).powi(-2), max_relative = 1e-12);
        }
        assert!(s.max_residual() < 1e-6, "{}", s.max_residual());
        assert!(!s.rigid);
    }

    #[test]
    fn fm_volume_milne_rigid() {
        let tr = Trajectory::from_model(&ModelId::Milne, 1.0, 100.0, 50).unwrap();
        let s = fm_volume(&tr).unwrap();
        assert!(s.rigid);
        assert!(monotone_check(&s, 1e-10).pass);
    }

    #[test]
    fn dvol_exponents() {
        let tr = Trajectory::from_model(&ModelId::Milne, 1.0, 100.0, 50).unwrap();
        assert!(dvol_infty_estimate(&tr).unwrap().exponent.abs() < 1e-10);
        let k = ModelId::Kasner { p: [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0] };
        let tr = Trajectory::from_model(&k, 1.0, 100.0, 50).unwrap();
        assert_relative_eq!(dvol_infty_estimate(&tr).unwrap().exponent, -2.0, epsilon = 1e-10);
        let short = Trajectory::from_model(&k, 1.0, 2.0, 50).unwrap();
        assert!(matches!(dvol_infty_estimate(&short), Err(FlowError::InsufficientData(_))));
    }

    #[test]
    fn scale_integrals_examples() {
        let tr = Trajectory::from_model(&ModelId::Milne, 1.0, 1000.0, 50).unwrap();
        let si = scale_invariant_integrals(&tr).unwrap();
        assert!(si.plain.iter().all(|c| c.iter().all(|v| v.abs() < 1e-12)));
        let k = ModelId::Kasner { p: [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0] };
        let tr = Trajectory::from_model(&k, 1.0, 1000.0, 50).unwrap();
        let si = scale_invariant_integrals(&tr).unwrap();
        // t²|K⁰|²L = 6 · 1/3 = 2 per unit ln t
        assert_relative_eq!(*si.plain[0].last().unwrap(), 2.0 * 1000f64.ln(), max_relative = 1e-10);
        assert!(si.vacuous && si.nonnegative);
    }

    #[test]
    fn rescaled_l1_examples() {
        let tr = Trajectory::from_model(&ModelId::Milne, 1.0, 1000.0, 50).unwrap();
        let r = rescaled_l1_report(&tr, 10.0, 2.0).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-10), "{r:?}");
        let k = ModelId::Kasner { p: [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0] };
        let tr = Trajectory::from_model(&k, 1.0, 1000.0, 200).unwrap();
        let a = rescaled_l1_report(&tr, 10.0, 2.0).unwrap();
        let b = rescaled_l1_report(&tr, 100.0, 2.0).unwrap();
        for i in 0..3 {
            assert_relative_eq!(a[i], b[i], max_relative = 1e-8);
        }
        assert_relative_eq!(a[0], (2.0 / 3.0) * 1.5, max_relative = 1e-9);
        assert!(rescaled_l1_report(&tr, 900.0, 2.0).is_err());
    }

    #[test]
    fn kasner_shape_drift_is_geodesic() {
        let p = [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0];
        let tr = Trajectory::from_model(&ModelId::Kasner { p }, 1.0, 100.0, 200).unwrap();
        let d = shape_drift_check(&tr, 3.0, 2.0).unwrap();
        let expect = 2.0 * p.iter().map(|x| (x - 1.0 / 3.0).powi(2)).sum::<f64>().sqrt() * 2f64.ln();
        assert_relative_eq!(d.distance, expect, max_relative = 1e-10);
        assert!(d.holds, "{d:?}");
        assert_relative_eq!(d.bound_l1, d.distance, max_relative = 1e-9);
    }

    #[test]
    fn gowdy_homogeneous_energy() {
        let b: f64 = 0.3;
        let st = GowdyState::homogeneous(0.0, b, 2.0, 16).unwrap();
        let e = gowdy_energy(&st);
        let expect = 2.0 * std::f64::consts::PI * (4.0 * b * b + (2.0 - 2.0 * b).powi(2)) / 4.0;
        assert_relative_eq!(e, expect, max_relative = 1e-13);
        assert_relative_eq!(gowdy_energy_hat(&st).unwrap(), e, max_relative = 1e-13);
    }

    #[test]
    fn reduced_volume_kasner() {
        let p = [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0];
        let tr = Trajectory::from_model(&ModelId::Kasner { p }, 1.0, 100.0, 200).unwrap();
        let rep = reduced_volume(&tr).unwrap();
        assert_relative_eq!(rep.exponent, -(1.0 + p[2]), epsilon = 1e-10);
        assert!(rep.energy_residual < 1e-12);
        assert!(rep.dissipation_residual < 1e-7, "{}", rep.dissipation_residual);
        assert!(rep.lapse_bound_excess < 0.0);
        assert!(!rep.rigid);
    }

    #[test]
    fn reduced_volume_bianchi_iii_rigid() {
        let tr = Trajectory::from_model(&ModelId::BianchiIIIFlat, 1.0, 100.0, 50).unwrap();
        let rep = reduced_volume(&tr).unwrap();
        assert!(rep.series.relative_variation() < 1e-12);
        assert_relative_eq!(rep.series.samples[0].1, 4.0, max_relative = 1e-12);
        assert!(rep.rigid);
        assert!(rep.energy_residual < 1e-12);
        assert!(rep.lapse_bound_excess.abs() < 1e-12);
    }

    #[test]
    fn reduced_volume_milne_split_rejected() {
        let tr = Trajectory::from_model(&ModelId::Milne, 1.0, 10.0, 50).unwrap();
        assert!(reduced_volume(&tr).is_err());
        assert!(reduced_volume_with(&tr, &[2]).is_err());
    }
}

//! Closed-form model flows in Hubble-time CMC gauge.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::algebra::{spacetime_curvature_sq, LieAlgebra};
use crate::error::{FlowError, Result};
use crate::tensor::{traceless_split, SymMat};

/// Fiber directions of a homogeneous state (indices into the frame).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrySplit {
    pub fiber: Vec<usize>,
}

impl SymmetrySplit {
    pub fn base(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|i| !self.fiber.contains(i)).collect()
    }
}

/// One CMC slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub h: SymMat,
    pub k: SymMat,
    pub lapse: f64,
    pub split: Option<SymmetrySplit>,
}

impl FlowState {
    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn mean_curvature(&self) -> Result<f64> {
        Ok(traceless_split(&self.k, &self.h)?.trace)
    }

    pub fn k0_sq(&self) -> Result<f64> {
        let d = traceless_split(&self.k, &self.h)?;
        crate::tensor::hnorm_sq(&d.traceless, &self.h)
    }

    /// √det h per comoving cell.
    pub fn volume(&self) -> f64 {
        self.h.det().sqrt()
    }

    pub fn h3(&self) -> Matrix3<f64> {
        to_m3(&self.h)
    }

    pub fn k3(&self) -> Matrix3<f64> {
        to_m3(&self.k)
    }

    /// Hubble gauge, lapse bound and positivity.
    pub fn check_invariants(&self) -> Result<()> {
        self.h.check_spd()?;
        let hm = self.mean_curvature()?;
        let n = self.dim() as f64;
        if ((hm + n / self.t) * self.t / n).abs() > 1e-9 {
            return Err(FlowError::Gauge(format!("tr K = {hm} but -n/t = {}", -n / self.t)));
        }
        if !(self.lapse > 0.0 && self.lapse <= 1.0 + 1e-12) {
            return Err(FlowError::Domain(format!("lapse {} outside (0, 1]", self.lapse)));
        }
        Ok(())
    }
}

pub(crate) fn to_m3(s: &SymMat) -> Matrix3<f64> {
    assert_eq!(s.dim(), 3);
    Matrix3::from_row_slice(s.entries())
}

pub(crate) fn from_m3(m: &Matrix3<f64>) -> SymMat {
    let mut e = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            e[3 * i + j] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    SymMat::new(3, &e).expect("symmetrized 3x3")
}

/// Fourier profile σ(θ) = a0 + Σ cos_n cos(nθ) + sin_n sin(nθ), n from 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SigmaProfile {
    pub a0: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl SigmaProfile {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut s = self.a0;
        for (n, c) in self.cos.iter().enumerate() {
            s += c * ((n + 1) as f64 * theta).cos();
        }
        for (n, c) in self.sin.iter().enumerate() {
            s += c * ((n + 1) as f64 * theta).sin();
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelId {
    Milne,
    Kasner { p: [f64; 3] },
    TaubFlat,
    TaubNil { p: [f64; 3], b: f64 },
    #[serde(rename = "bianchi-iii-flat")]
    BianchiIIIFlat,
    PseudoStaticTwisted { c: f64, k: f64, sigma: SigmaProfile },
}

impl ModelId {
    pub fn name(&self) -> &'static str {
        match self {
            ModelId::Milne => "milne",
            ModelId::Kasner { .. } => "kasner",
            ModelId::TaubFlat => "taub-flat",
            ModelId::TaubNil { .. } => "taub-nil",
            ModelId::BianchiIIIFlat => "bianchi-iii-flat",
            ModelId::PseudoStaticTwisted { .. } => "pseudo-static-twisted",
        }
    }

    pub fn algebra(&self) -> Result<LieAlgebra> {
        match self {
            ModelId::Milne => Ok(LieAlgebra::bianchi_v()),
            ModelId::Kasner { .. } | ModelId::TaubFlat => Ok(LieAlgebra::abelian()),
            ModelId::TaubNil { p, b } => Ok(LieAlgebra::milnor([4.0 * p[0] * b, 0.0, 0.0])),
            ModelId::BianchiIIIFlat => Ok(LieAlgebra::bianchi_iii()),
            ModelId::PseudoStaticTwisted { .. } => {
                Err(FlowError::Unsupported("pseudo-static model is not homogeneous".into()))
            }
        }
    }

    /// True for the models whose spacetime is flat.
    pub fn is_flat(&self) -> bool {
        match self {
            ModelId::Milne | ModelId::TaubFlat | ModelId::BianchiIIIFlat => true,
            ModelId::Kasner { p } => {
                let mut q = *p;
                q.sort_by(|a, b| a.partial_cmp(b).unwrap());
                q[0].abs() < 1e-14 && q[1].abs() < 1e-14
            }
            _ => false,
        }
    }

    /// Natural symmetry split used by reduced-volume checks.
    pub fn default_split(&self) -> Option<SymmetrySplit> {
        match self {
            ModelId::Kasner { .. } | ModelId::TaubFlat => Some(SymmetrySplit { fiber: vec![2] }),
            ModelId::BianchiIIIFlat => Some(SymmetrySplit { fiber: vec![2] }),
            _ => None,
        }
    }
}

/// Both Kasner constraint residuals.
pub fn validate_kasner_exponents(p: [f64; 3]) -> (bool, f64, f64) {
    let r1 = p.iter().sum::<f64>() - 1.0;
    let r2 = p.iter().map(|x| x * x).sum::<f64>() - 1.0;
    (r1.abs() < 1e-12 && r2.abs() < 1e-12, r1, r2)
}

/// The pair completing p1 to a Kasner triple, larger root first.
pub fn kasner_family(p1: f64) -> Result<(f64, f64)> {
    if !(-1.0 / 3.0 - 1e-15..=1.0 + 1e-15).contains(&p1) {
        return Err(FlowError::Domain(format!("p1 = {p1} outside [-1/3, 1]: no real Kasner completion")));
    }
    let disc = ((1.0 - p1) * (1.0 + 3.0 * p1)).max(0.0).sqrt();
    Ok((0.5 * (1.0 - p1 + disc), 0.5 * (1.0 - p1 - disc)))
}

fn check_kasner(p: &[f64; 3]) -> Result<()> {
    let (ok, r1, r2) = validate_kasner_exponents(*p);
    if !ok {
        return Err(FlowError::Domain(format!("invalid Kasner exponents {p:?} (residuals {r1:e}, {r2:e})")));
    }
    Ok(())
}

fn kasner_state(p: &[f64; 3], t: f64) -> FlowState {
    let u = t / 3.0;
    let h = [0, 1, 2].map(|i| u.powf(2.0 * p[i]));
    let k = [0, 1, 2].map(|i| -p[i] * u.powf(2.0 * p[i] - 1.0));
    FlowState { t, h: SymMat::diag(&h), k: SymMat::diag(&k), lapse: 1.0 / 3.0, split: None }
}

/// Taub-nil in its proper-time parameter u.
pub struct TaubNil {
    pub p: [f64; 3],
    pub b: f64,
}

impl TaubNil {
    fn w(&self, u: f64) -> f64 {
        self.b * self.b * u.powf(4.0 * self.p[0])
    }

    /// Hubble time t(u) = −3/H.
    pub fn hubble_time(&self, u: f64) -> f64 {
        let w = self.w(u);
        let p1 = self.p[0];
        3.0 * u * (1.0 + w).powf(1.5) / (1.0 + (1.0 + 2.0 * p1) * w)
    }

    /// d ln t / d ln u.
    pub fn dlnt_dlnu(&self, u: f64) -> f64 {
        let w = self.w(u);
        let p1 = self.p[0];
        1.0 + 6.0 * p1 * w / (1.0 + w) - 4.0 * p1 * (1.0 + 2.0 * p1) * w / (1.0 + (1.0 + 2.0 * p1) * w)
    }

    /// Metric and second fundamental form at u; lapse is A (proper-time lapse).
    pub fn state_u(&self, u: f64) -> (SymMat, SymMat, f64) {
        let w = self.w(u);
        let a2 = 1.0 + w;
        let a = a2.sqrt();
        let p = &self.p;
        let h = [u.powf(2.0 * p[0]) / a2, u.powf(2.0 * p[1]) * a2, u.powf(2.0 * p[2]) * a2];
        let wl = 4.0 * p[0] * w / (u * a2);
        let dl = [2.0 * p[0] / u - wl, 2.0 * p[1] / u + wl, 2.0 * p[2] / u + wl];
        let k = [0, 1, 2].map(|i| -0.5 / a * h[i] * dl[i]);
        (SymMat::diag(&h), SymMat::diag(&k), a)
    }

    /// Solve t(u) = t by safeguarded Newton in ln u.
    pub fn invert(&self, t: f64) -> Result<f64> {
        let target = t.ln();
        let f = |v: f64| self.hubble_time(v.exp()).ln() - target;
        let mut lo = (t / 3.0).ln() - 1.0;
        let mut hi = (t / 3.0).ln() + 1.0;
        let mut expand = 0;
        while f(lo) > 0.0 {
            lo -= 2.0;
            expand += 1;
            if expand > 200 {
                return Err(FlowError::Numeric("could not bracket Taub-nil time".into()));
            }
        }
        while f(hi) < 0.0 {
            hi += 2.0;
            expand += 1;
            if expand > 200 {
                return Err(FlowError::Numeric("could not bracket Taub-nil time".into()));
            }
        }
        let mut v = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fv = f(v);
            if fv.abs() < 1e-15 {
                return Ok(v.exp());
            }
            if fv > 0.0 {
                hi = v;
            } else {
                lo = v;
            }
            let d = self.dlnt_dlnu(v.exp());
            let mut next = v - fv / d;
            if !(next > lo && next < hi) || d <= 0.0 {
                next = 0.5 * (lo + hi);
            }
            if (next - v).abs() < 1e-15 * v.abs().max(1.0) {
                return Ok(next.exp());
            }
            v = next;
        }
        Err(FlowError::Numeric(format!("Taub-nil time inversion did not converge at t = {t}")))
    }
}

/// Model state at Hubble time t.
pub fn model_state(m: &ModelId, t: f64) -> Result<FlowState> {
    if !(t > 0.0) {
        return Err(FlowError::Domain(format!("Hubble time must be positive, got {t}")));
    }
    let mut st = match m {
        ModelId::Milne => FlowState {
            t,
            h: SymMat::identity(3).scale(t * t),
            k: SymMat::identity(3).scale(-t),
            lapse: 1.0,
            split: None,
        },
        ModelId::Kasner { p } => {
            check_kasner(p)?;
            kasner_state(p, t)
        }
        ModelId::TaubFlat => kasner_state(&[1.0, 0.0, 0.0], t),
        ModelId::BianchiIIIFlat => {
            let u = 2.0 * t / 3.0;
            FlowState {
                t,
                h: SymMat::diag(&[u * u, u * u, 1.0]),
                k: SymMat::diag(&[-u, -u, 0.0]),
                lapse: 2.0 / 3.0,
                split: None,
            }
        }
        ModelId::TaubNil { p, b } => {
            check_kasner(p)?;
            let tn = TaubNil { p: *p, b: *b };
            let u = tn.invert(t)?;
            let (h, k, a) = tn.state_u(u);
            let lapse = a * u / (t * tn.dlnt_dlnu(u));
            FlowState { t, h, k, lapse, split: None }
        }
        ModelId::PseudoStaticTwisted { .. } => {
            return Err(FlowError::Unsupported(
                "pseudo-static model has no homogeneous Hubble-gauge state; use gowdy::verify_pseudo_static".into(),
            ))
        }
    };
    st.split = m.default_split();
    Ok(st)
}

/// |Rm|_T of the model at Hubble time t.
pub fn model_curvature_norm(m: &ModelId, t: f64) -> Result<f64> {
    match m {
        ModelId::Milne | ModelId::TaubFlat | ModelId::BianchiIIIFlat => Ok(0.0),
        ModelId::Kasner { p } => {
            check_kasner(p)?;
            let u = t / 3.0;
            let mut s = 0.0;
            for i in 0..3 {
                s += (p[i] - p[i] * p[i]).powi(2);
                for j in (i + 1)..3 {
                    s += p[i] * p[i] * p[j] * p[j];
                }
            }
            Ok(2.0 * s.sqrt() / (u * u))
        }
        ModelId::TaubNil { .. } => {
            let st = model_state(m, t)?;
            Ok(spacetime_curvature_sq(&m.algebra()?, &st.h3(), &st.k3())?.sqrt())
        }
        ModelId::PseudoStaticTwisted { .. } => Err(FlowError::Unsupported(
            "curvature norm of the pseudo-static model is not defined in Hubble gauge".into(),
        )),
    }
}

/// Re-parametrize a homogeneous flow given in some time u so that t = −n/H.
///
/// `flow(u)` returns the geometry with its lapse relative to u. The output
/// lapse is rescaled by du/dt, with dt/du from a Richardson-extrapolated
/// central difference in ln u.
pub fn hubble_reparametrize<F>(flow: F, us: &[f64]) -> Result<Vec<FlowState>>
where
    F: Fn(f64) -> Result<FlowState>,
{
    let hubble = |u: f64| -> Result<f64> {
        let st = flow(u)?;
        let hm = st.mean_curvature()?;
        if !(hm < 0.0) {
            return Err(FlowError::Gauge(format!("mean curvature {hm} not negative at u = {u}")));
        }
        Ok(-(st.dim() as f64) / hm)
    };
    let mut out = Vec::with_capacity(us.len());
    let mut prev_t = f64::NEG_INFINITY;
    for &u in us {
        let st = flow(u)?;
        let t = hubble(u)?;
        if t <= prev_t {
            return Err(FlowError::Gauge(format!("H not strictly increasing near u = {u}")));
        }
        prev_t = t;
        let d = |e: f64| -> Result<f64> {
            let (tp, tm) = (hubble(u * e.exp())?, hubble(u * (-e).exp())?);
            Ok((tp.ln() - tm.ln()) / (2.0 * e))
        };
        let e = 1e-3;
        let (d1, d2) = (d(e)?, d(0.5 * e)?);
        let dlnt = (4.0 * d2 - d1) / 3.0;
        if !(dlnt > 0.0) {
            return Err(FlowError::Gauge(format!("Hubble time not increasing at u = {u}")));
        }
        let dt_du = dlnt * t / u;
        out.push(FlowState { t, lapse: st.lapse / dt_du, ..st });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kasner_validation() {
        assert!(validate_kasner_exponents([1.0, 0.0, 0.0]).0);
        assert!(validate_kasner_exponents([2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0]).0);
        let (ok, _, r2) = validate_kasner_exponents([0.5, 0.5, 0.0]);
        assert!(!ok);
        assert_relative_eq!(r2, -0.5);
    }

    #[test]
    fn serde_tag_matches_name() {
        for m in [ModelId::Milne, ModelId::TaubFlat, ModelId::BianchiIIIFlat] {
            let v = serde_json::to_value(&m).unwrap();
            assert_eq!(v["kind"], m.name());
        }
    }

    #[test]
    fn kasner_family_examples() {
        assert_eq!(kasner_family(1.0).unwrap(), (0.0, 0.0));
        let (a, b) = kasner_family(-1.0 / 3.0).unwrap();
        assert_relative_eq!(a, 2.0 / 3.0, epsilon = 1e-7);
        assert_relative_eq!(b, 2.0 / 3.0, epsilon = 1e-7);
        let (a, b) = kasner_family(0.5).unwrap();
        assert_relative_eq!(a, (1.0 + 5f64.sqrt()) / 4.0, epsilon = 1e-14);
        assert_relative_eq!(b, (1.0 - 5f64.sqrt()) / 4.0, epsilon = 1e-14);
        assert!(validate_kasner_exponents([0.5, a, b]).0);
        assert!(kasner_family(1.2).is_err());
    }

    #[test]
    fn milne_state() {
        let s = model_state(&ModelId::Milne, 5.0).unwrap();
        assert_eq!(s.lapse, 1.0);
        assert_relative_eq!(s.mean_curvature().unwrap(), -0.6, epsilon = 1e-14);
        assert!(s.k0_sq().unwrap() < 1e-28);
        s.check_invariants().unwrap();
    }

    #[test]
    fn kasner_hubble_state() {
        let p = [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0];
        let t = 7.0;
        let s = model_state(&ModelId::Kasner { p }, t).unwrap();
        assert_relative_eq!(s.lapse, 1.0 / 3.0);
        for i in 0..3 {
            assert_relative_eq!(s.h.get(i, i), (t / 3.0).powf(2.0 * p[i]), epsilon = 1e-14);
            assert_relative_eq!(s.k.get(i, i), -(3.0 * p[i] / t) * (t / 3.0).powf(2.0 * p[i]), epsilon = 1e-14);
        }
        s.check_invariants().unwrap();
    }

    #[test]
    fn taub_nil_b0_is_kasner() {
        let p = [-0.25, kasner_family(-0.25).unwrap().0, kasner_family(-0.25).unwrap().1];
        for t in [1.0, 30.0, 1e4] {
            let a = model_state(&ModelId::TaubNil { p, b: 0.0 }, t).unwrap();
            let b = model_state(&ModelId::Kasner { p }, t).unwrap();
            for i in 0..3 {
                assert_relative_eq!(a.h.get(i, i), b.h.get(i, i), max_relative = 1e-13);
                assert_relative_eq!(a.k.get(i, i), b.k.get(i, i), max_relative = 1e-13);
            }
            assert_relative_eq!(a.lapse, b.lapse, max_relative = 1e-13);
        }
    }

    #[test]
    fn taub_nil_hubble_gauge() {
        let (a, b) = kasner_family(0.5).unwrap();
        let m = ModelId::TaubNil { p: [0.5, a, b], b: 1.0 };
        for t in [0.5, 3.0, 100.0, 1e4] {
            let s = model_state(&m, t).unwrap();
            s.check_invariants().unwrap();
        }
    }

    #[test]
    fn reparametrize_kasner() {
        let p = [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0];
        let flow = |u: f64| {
            Ok(FlowState {
                t: u,
                h: SymMat::diag(&p.map(|q| u.powf(2.0 * q))),
                k: SymMat::diag(&p.map(|q| -q * u.powf(2.0 * q - 1.0))),
                lapse: 1.0,
                split: None,
            })
        };
        let out = hubble_reparametrize(flow, &[1.0, 2.0, 5.0]).unwrap();
        for (s, u) in out.iter().zip([1.0, 2.0, 5.0]) {
            assert_relative_eq!(s.t, 3.0 * u, max_relative = 1e-14);
            assert_relative_eq!(s.lapse, 1.0 / 3.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn reparametrize_taub_nil_matches_closed_lapse() {
        let (a, b) = kasner_family(0.5).unwrap();
        let tn = TaubNil { p: [0.5, a, b], b: 1.0 };
        let flow = |u: f64| {
            let (h, k, lapse) = tn.state_u(u);
            Ok(FlowState { t: u, h, k, lapse, split: None })
        };
        let us: Vec<f64> = (0..20).map(|i| 10f64.powf(-1.0 + 0.2 * i as f64)).collect();
        let out = hubble_reparametrize(flow, &us).unwrap();
        let m = ModelId::TaubNil { p: tn.p, b: 1.0 };
        for s in &out {
            assert!(s.lapse > 0.0 && s.lapse <= 1.0);
            let exact = model_state(&m, s.t).unwrap();
            assert_relative_eq!(s.lapse, exact.lapse, max_relative = 1e-8);
        }
    }

    #[test]
    fn non_monotone_rejected() {
        let flow = |u: f64| {
            Ok(FlowState {
                t: u,
                h: SymMat::identity(3),
                k: SymMat::identity(3).scale(-1.0 / (1.0 + (u - 2.0).powi(2))),
                lapse: 1.0,
                split: None,
            })
        };
        assert!(matches!(hubble_reparametrize(flow, &[1.0, 2.0, 3.0]), Err(FlowError::Gauge(_))));
    }

    #[test]
    fn flat_models_zero_curvature() {
        for m in [ModelId::Milne, ModelId::TaubFlat, ModelId::BianchiIIIFlat] {
            assert_eq!(model_curvature_norm(&m, 4.0).unwrap(), 0.0);
            let s = model_state(&m, 4.0).unwrap();
            assert!(spacetime_curvature_sq(&m.algebra().unwrap(), &s.h3(), &s.k3()).unwrap() < 1e-24);
        }
    }

    #[test]
    fn kasner_curvature_closed_form_vs_frame() {
        let p = [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0];
        let m = ModelId::Kasner { p };
        for t in [3.0, 40.0] {
            let s = model_state(&m, t).unwrap();
            let frame = spacetime_curvature_sq(&LieAlgebra::abelian(), &s.h3(), &s.k3()).unwrap().sqrt();
            assert_relative_eq!(frame, model_curvature_norm(&m, t).unwrap(), max_relative = 1e-12);
        }
    }
}

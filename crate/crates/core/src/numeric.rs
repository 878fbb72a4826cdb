//! Small quadrature, differentiation and fitting helpers.

use crate::error::{FlowError, Result};

const GL5_X: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Composite 5-point Gauss–Legendre on [a, b].
pub fn gauss_legendre<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, panels: usize) -> Result<f64> {
    let w = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * w;
        for k in 0..5 {
            s += GL5_W[k] * f(mid + 0.5 * w * GL5_X[k])?;
        }
    }
    Ok(s * 0.5 * w)
}

/// Derivative at x0 of the interpolating polynomial through (xs, ys).
pub fn lagrange_derivative(xs: &[f64], ys: &[f64], x0: f64) -> f64 {
    let n = xs.len();
    let mut d = 0.0;
    for j in 0..n {
        // d/dx of the j-th basis polynomial at x0
        let mut denom = 1.0;
        for m in 0..n {
            if m != j {
                denom *= xs[j] - xs[m];
            }
        }
        let mut num = 0.0;
        for k in 0..n {
            if k == j {
                continue;
            }
            let mut prod = 1.0;
            for m in 0..n {
                if m != j && m != k {
                    prod *= x0 - xs[m];
                }
            }
            num += prod;
        }
        d += ys[j] * num / denom;
    }
    d
}

/// Five-point derivative dy/dx at every interior sample (index 2..n-2); ends use one-sided stencils.
pub fn derivative_series(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    (0..n)
        .map(|i| {
            if n < 5 {
                let (a, b) = if i + 1 < n { (i, i + 1) } else { (i - 1, i) };
                return (ys[b] - ys[a]) / (xs[b] - xs[a]);
            }
            let lo = i.saturating_sub(2).min(n - 5);
            lagrange_derivative(&xs[lo..lo + 5], &ys[lo..lo + 5], xs[i])
        })
        .collect()
}

/// Least-squares line: (slope, intercept).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 2 {
        return Err(FlowError::InsufficientData("need at least two points for a fit".into()));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FlowError::InsufficientData("degenerate abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Cumulative trapezoid rule.
pub fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        out[i] = out[i - 1] + 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_exact_for_polynomials() {
        let v = gauss_legendre(|x| Ok(x.powi(9) + 1.0), 0.0, 2.0, 1).unwrap();
        assert!((v - (1024.0 / 10.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn lagrange_derivative_quartic() {
        let xs = [0.0, 0.3, 0.5, 1.1, 1.4];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.powi(4) - x).collect();
        let d = lagrange_derivative(&xs, &ys, 0.5);
        assert!((d - (4.0 * 0.125 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn fit_line() {
        let (m, b) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((m - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }
}

//! Brute-force coordinate curvature by finite differences.
//!
//! Fourth-order central stencils for metric derivatives, nested once for
//! the derivatives of the Christoffel symbols. Used as an oracle and for
//! vacuum residuals of metrics given in closed form.

use nalgebra::DMatrix;

fn d1<F: Fn(&[f64]) -> DMatrix<f64>>(g: &F, x: &[f64], mu: usize, step: f64) -> DMatrix<f64> {
    let at = |s: f64| {
        let mut y = x.to_vec();
        y[mu] += s * step;
        g(&y)
    };
    (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) / (12.0 * step)
}

/// Γ^a_bc at x, stored as gamma[a][b][c]; one difference step per coordinate.
pub fn christoffel<F: Fn(&[f64]) -> DMatrix<f64>>(g: &F, x: &[f64], steps: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let n = x.len();
    let gi = g(x).try_inverse().expect("nondegenerate metric");
    let dg: Vec<DMatrix<f64>> = (0..n).map(|mu| d1(g, x, mu, steps[mu])).collect();
    let mut gam = vec![vec![vec![0.0; n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut s = 0.0;
                for d in 0..n {
                    s += gi[(a, d)] * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]);
                }
                gam[a][b][c] = 0.5 * s;
            }
        }
    }
    gam
}

/// Riemann R^a_bcd = ∂_c Γ^a_db − ∂_d Γ^a_cb + Γ^a_ce Γ^e_db − Γ^a_de Γ^e_cb.
pub fn riemann<F: Fn(&[f64]) -> DMatrix<f64>>(g: &F, x: &[f64], steps: &[f64]) -> Vec<Vec<Vec<Vec<f64>>>> {
    let n = x.len();
    let gam = christoffel(g, x, steps);
    let dgam: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
        .map(|mu| {
            let step = steps[mu];
            let at = |s: f64| {
                let mut y = x.to_vec();
                y[mu] += s * step;
                christoffel(g, &y, steps)
            };
            let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
            let mut out = vec![vec![vec![0.0; n]; n]; n];
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        out[a][b][c] = (m2[a][b][c] - p2[a][b][c] + 8.0 * (p1[a][b][c] - m1[a][b][c])) / (12.0 * step);
                    }
                }
            }
            out
        })
        .collect();
    let mut r = vec![vec![vec![vec![0.0; n]; n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut s = dgam[c][a][d][b] - dgam[d][a][c][b];
                    for e in 0..n {
                        s += gam[a][c][e] * gam[e][d][b] - gam[a][d][e] * gam[e][c][b];
                    }
                    r[a][b][c][d] = s;
                }
            }
        }
    }
    r
}

/// Ricci R_bd = R^a_bad.
pub fn ricci<F: Fn(&[f64]) -> DMatrix<f64>>(g: &F, x: &[f64], steps: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let r = riemann(g, x, steps);
    DMatrix::from_fn(n, n, |b, d| (0..n).map(|a| r[a][b][a][d]).sum())
}

/// Full contraction R_abcd R^abcd (signature independent).
pub fn kretschmann<F: Fn(&[f64]) -> DMatrix<f64>>(g: &F, x: &[f64], steps: &[f64]) -> f64 {
    let n = x.len();
    let r = riemann(g, x, steps);
    let gm = g(x);
    let gi = gm.clone().try_inverse().expect("nondegenerate metric");
    // lower the first index, raise the rest
    let mut low = vec![vec![vec![vec![0.0; n]; n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    low[a][b][c][d] = (0..n).map(|e| gm[(a, e)] * r[e][b][c][d]).sum();
                }
            }
        }
    }
    let mut up = low.clone();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut s = 0.0;
                    for p in 0..n {
                        for q in 0..n {
                            for rr in 0..n {
                                for t in 0..n {
                                    s += gi[(a, p)] * gi[(b, q)] * gi[(c, rr)] * gi[(d, t)] * low[p][q][rr][t];
                                }
                            }
                        }
                    }
                    up[a][b][c][d] = s;
                }
            }
        }
    }
    let mut k = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    k += low[a][b][c][d] * up[a][b][c][d];
                }
            }
        }
    }
    k
}

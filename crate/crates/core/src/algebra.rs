//! Left-invariant geometry on 3D Lie groups.
//!
//! Structure constants are stored as `c[i][j][k]` with
//! `[X_i, X_j] = sum_k c[i][j][k] X_k`. Curvature is computed in an
//! orthonormal frame obtained from the Cholesky factor of the metric.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

pub type Tensor3 = [[[f64; 3]; 3]; 3];
pub type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieAlgebra {
    pub c: Tensor3,
    /// Set when the algebra was built from a Milnor triple.
    pub lambda: Option<[f64; 3]>,
}

impl LieAlgebra {
    pub fn from_structure(c: Tensor3) -> Result<Self> {
        let scale = c.iter().flatten().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    if (c[i][j][k] + c[j][i][k]).abs() > 1e-12 * scale {
                        return Err(FlowError::Domain("structure constants not antisymmetric".into()));
                    }
                }
            }
        }
        let alg = LieAlgebra { c, lambda: None };
        if alg.jacobi_defect() > 1e-10 * scale * scale {
            return Err(FlowError::Domain("structure constants violate the Jacobi identity".into()));
        }
        Ok(alg)
    }

    /// [e2,e3] = λ1 e1, [e3,e1] = λ2 e2, [e1,e2] = λ3 e3.
    pub fn milnor(lambda: [f64; 3]) -> Self {
        let mut c = [[[0.0; 3]; 3]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            c[j][k][i] = lambda[i];
            c[k][j][i] = -lambda[i];
        }
        LieAlgebra { c, lambda: Some(lambda) }
    }

    pub fn abelian() -> Self {
        Self::milnor([0.0; 3])
    }

    /// Bianchi V: [X1,X2] = X2, [X1,X3] = X3. Unit-curvature hyperbolic space for h = I.
    pub fn bianchi_v() -> Self {
        let mut c = [[[0.0; 3]; 3]; 3];
        c[0][1][1] = 1.0;
        c[1][0][1] = -1.0;
        c[0][2][2] = 1.0;
        c[2][0][2] = -1.0;
        LieAlgebra { c, lambda: None }
    }

    /// Bianchi III with X3 central: hyperbolic plane times a line.
    pub fn bianchi_iii() -> Self {
        let mut c = [[[0.0; 3]; 3]; 3];
        c[0][1][1] = 1.0;
        c[1][0][1] = -1.0;
        LieAlgebra { c, lambda: None }
    }

    pub fn is_unimodular(&self) -> bool {
        (0..3).all(|i| (0..3).map(|j| self.c[i][j][j]).sum::<f64>().abs() < 1e-12)
    }

    fn jacobi_defect(&self) -> f64 {
        let c = &self.c;
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for m in 0..3 {
                        let mut s = 0.0;
                        for l in 0..3 {
                            s += c[i][j][l] * c[l][k][m] + c[j][k][l] * c[l][i][m] + c[k][i][l] * c[l][j][m];
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }
}

/// Orthonormal-frame data for a left-invariant metric.
pub struct Frame {
    /// Lower Cholesky factor, h = C Cᵀ.
    pub chol: Matrix3<f64>,
    /// Frame change e_a = sum_i E_ia X_i, E = C^{-T}.
    pub e: Matrix3<f64>,
    /// Levi-Civita symbols Γ_abc = <∇_{e_a} e_b, e_c>.
    pub gamma: Tensor3,
    /// Structure constants c_ab^c in the orthonormal frame.
    pub ce: Tensor3,
}

impl Frame {
    pub fn new(alg: &LieAlgebra, h: &Matrix3<f64>) -> Result<Self> {
        let chol = h.cholesky().ok_or_else(|| FlowError::Domain("metric not positive definite".into()))?.l();
        let e = chol.try_inverse().ok_or_else(|| FlowError::Domain("singular metric".into()))?.transpose();
        let c = &alg.c;
        // c_e[a][b][d] = sum E_ia E_jb c[i][j][k] C_kd
        let mut tmp = [[[0.0; 3]; 3]; 3];
        for a in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let mut s = 0.0;
                    for i in 0..3 {
                        s += e[(i, a)] * c[i][j][k];
                    }
                    tmp[a][j][k] = s;
                }
            }
        }
        let mut ce = [[[0.0; 3]; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                for d in 0..3 {
                    let mut s = 0.0;
                    for j in 0..3 {
                        let ejb = e[(j, b)];
                        if ejb == 0.0 {
                            continue;
                        }
                        for k in 0..3 {
                            s += ejb * tmp[a][j][k] * chol[(k, d)];
                        }
                    }
                    ce[a][b][d] = s;
                }
            }
        }
        let mut gamma = [[[0.0; 3]; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                for d in 0..3 {
                    gamma[a][b][d] = 0.5 * (ce[a][b][d] - ce[b][d][a] + ce[d][a][b]);
                }
            }
        }
        Ok(Frame { chol, e, gamma, ce })
    }

    /// Components of a (0,2) tensor in the orthonormal frame.
    pub fn to_frame(&self, t: &Matrix3<f64>) -> Matrix3<f64> {
        self.e.transpose() * t * self.e
    }

    /// Back from the orthonormal frame to the algebra basis.
    pub fn from_frame(&self, t: &Matrix3<f64>) -> Matrix3<f64> {
        self.chol * t * self.chol.transpose()
    }

    /// R_abcd = <R(e_a,e_b)e_c, e_d>.
    pub fn riemann(&self) -> Tensor4 {
        let g = &self.gamma;
        let c = &self.ce;
        let mut r = [[[[0.0; 3]; 3]; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                for cc in 0..3 {
                    for d in 0..3 {
                        let mut s = 0.0;
                        for f in 0..3 {
                            s += g[b][cc][f] * g[a][f][d] - g[a][cc][f] * g[b][f][d] - c[a][b][f] * g[f][cc][d];
                        }
                        r[a][b][cc][d] = s;
                    }
                }
            }
        }
        r
    }

    pub fn ricci_frame(&self) -> Matrix3<f64> {
        let r = self.riemann();
        let mut ric: Matrix3<f64> = Matrix3::zeros();
        for b in 0..3 {
            for c in 0..3 {
                let mut s = 0.0;
                for a in 0..3 {
                    s += r[a][b][c][a];
                }
                ric[(b, c)] = s;
            }
        }
        0.5 * (ric + ric.transpose())
    }

    /// (∇_a K)_bc for frame components of a left-invariant symmetric tensor.
    pub fn nabla(&self, k: &Matrix3<f64>) -> Tensor3 {
        let g = &self.gamma;
        let mut out = [[[0.0; 3]; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let mut s = 0.0;
                    for f in 0..3 {
                        s += g[a][b][f] * k[(f, c)] + g[a][c][f] * k[(b, f)];
                    }
                    out[a][b][c] = -s;
                }
            }
        }
        out
    }

    /// Divergence (div K)_b = sum_a (∇_a K)_ab in the frame.
    pub fn divergence(&self, k: &Matrix3<f64>) -> [f64; 3] {
        let nk = self.nabla(k);
        let mut d = [0.0; 3];
        for b in 0..3 {
            d[b] = (0..3).map(|a| nk[a][a][b]).sum();
        }
        d
    }
}

/// Ricci tensor of a left-invariant metric in the algebra basis.
pub fn ricci(alg: &LieAlgebra, h: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let f = Frame::new(alg, h)?;
    Ok(f.from_frame(&f.ricci_frame()))
}

/// Milnor's closed form for diagonal metrics, returned in the algebra basis.
pub fn milnor_ricci_diag(lambda: &[f64; 3], hdiag: &[f64; 3]) -> [f64; 3] {
    let a = [hdiag[0].sqrt(), hdiag[1].sqrt(), hdiag[2].sqrt()];
    let lt = [lambda[0] * a[0] / (a[1] * a[2]), lambda[1] * a[1] / (a[2] * a[0]), lambda[2] * a[2] / (a[0] * a[1])];
    let mut out = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        out[i] = 0.5 * (lt[i] * lt[i] - (lt[j] - lt[k]).powi(2)) * hdiag[i];
    }
    out
}

/// Squared spacetime curvature norm in the frame of the unit normal, from
/// Gauss, Codazzi and the vacuum time-time block.
pub fn spacetime_curvature_sq(alg: &LieAlgebra, h: &Matrix3<f64>, k: &Matrix3<f64>) -> Result<f64> {
    let f = Frame::new(alg, h)?;
    let ke = f.to_frame(k);
    let rh = f.riemann();
    let mut ric: Matrix3<f64> = Matrix3::zeros();
    let mut total = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    let r = rh[a][b][c][d] + ke[(b, c)] * ke[(a, d)] - ke[(a, c)] * ke[(b, d)];
                    total += r * r;
                }
                ric[(b, c)] += rh[a][b][c][a];
            }
        }
    }
    let nk = f.nabla(&ke);
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                let cod = nk[a][b][c] - nk[b][a][c];
                total += 4.0 * cod * cod;
            }
        }
    }
    let hm = ke.trace();
    let ric = 0.5 * (ric + ric.transpose());
    let e: Matrix3<f64> = ric + ke * hm - ke * ke;
    total += 4.0 * e.iter().map(|x| x * x).sum::<f64>();
    Ok(total)
}

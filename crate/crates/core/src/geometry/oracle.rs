//! Brute-force tensor calculus on the full 2D metric `h (dx² + dθ²)`.
//!
//! Nothing here uses the reduced formulas: the metric, the twist form and
//! the complex structure are assembled as 2×2 component arrays on an
//! `(x, θ)` product grid and every quantity comes from index contraction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{hessian_frames, laplacian, grad_sq, scalar_curvature, trace_twist, MetricProfile, Normalization, TwistProfile};
use crate::error::{Error, Result};
use crate::numerics::{diff1_with, DiffOrder, Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Keep every `stride`-th node of the profile grid in `x`.
    pub stride: usize,
    pub n_theta: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { stride: 5, n_theta: 16 }
    }
}

/// Maximum deviation of each reduced formula from the oracle, relative to
/// `max(1, sup |oracle value|)` over the resolved core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub n_x: usize,
    pub n_theta: usize,
    pub scalar_curvature: f64,
    pub laplacian: f64,
    pub grad_sq: f64,
    pub trace_twist: f64,
    pub hessian_h11: f64,
    pub hessian_h22: f64,
    pub hessian_mixed: f64,
    pub hessian_pure: f64,
    /// `sup |∇ᵢ Tr β - 2 g^{jp} ∇_p β_ij|` relative to the larger of the
    /// two terms' coordinate parts; absolute when the twist vanishes.
    pub bianchi: f64,
}

impl OracleReport {
    pub fn max_deviation(&self) -> f64 {
        [
            self.scalar_curvature,
            self.laplacian,
            self.grad_sq,
            self.trace_twist,
            self.hessian_h11,
            self.hessian_h22,
            self.hessian_mixed,
            self.hessian_pure,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

type Sym = [[f64; 2]; 2];

/// Scalar or component data on the product grid, `θ` fastest.
struct Plane {
    nx: usize,
    nt: usize,
    grid: Grid,
}

impl Plane {
    fn idx(&self, i: usize, k: usize) -> usize {
        i * self.nt + k
    }

    fn d_x(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for k in 0..self.nt {
            let line: Vec<f64> = (0..self.nx).map(|i| f[self.idx(i, k)]).collect();
            let d = diff1_with(&Field::new(self.grid, line).expect("finite"), DiffOrder::Sixth);
            for i in 0..self.nx {
                out[self.idx(i, k)] = d[i];
            }
        }
        out
    }

    /// Fourth-order periodic differences in `θ`.
    fn d_theta(&self, f: &[f64]) -> Vec<f64> {
        let dt = 2.0 * PI / self.nt as f64;
        let mut out = vec![0.0; f.len()];
        for i in 0..self.nx {
            for k in 0..self.nt {
                let at = |o: isize| f[self.idx(i, (k as isize + o).rem_euclid(self.nt as isize) as usize)];
                out[self.idx(i, k)] = (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * dt);
            }
        }
        out
    }

    fn d(&self, dir: usize, f: &[f64]) -> Vec<f64> {
        if dir == 0 {
            self.d_x(f)
        } else {
            self.d_theta(f)
        }
    }
}

fn inverse(g: &Sym) -> Sym {
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]]
}

fn component(v: &[Sym], a: usize, b: usize) -> Vec<f64> {
    v.iter().map(|m| m[a][b]).collect()
}

pub fn tensor_oracle_2d(
    m: &MetricProfile,
    t: &TwistProfile,
    f: &Field,
    opts: OracleOptions,
) -> Result<OracleReport> {
    if m.grid() != t.a().grid() || m.grid() != f.grid() {
        return Err(Error::GridMismatch);
    }
    if opts.n_theta < 5 {
        return Err(Error::InvalidArgument("n_theta must be at least 5".into()));
    }
    let coarse = m.grid().coarsen(opts.stride)?;
    let nx = coarse.n_nodes();
    let nt = opts.n_theta;
    let plane = Plane { nx, nt, grid: coarse };
    let np = nx * nt;
    let sample = |v: &Field, i: usize| v[i * opts.stride];

    // metric, twist 2-form, complex structure J∂x = ∂θ
    let mut g = vec![[[0.0; 2]; 2]; np];
    let mut alpha = vec![[[0.0; 2]; 2]; np];
    let mut fun = vec![0.0; np];
    for i in 0..nx {
        for k in 0..nt {
            let p = plane.idx(i, k);
            let h = sample(m.h(), i);
            g[p] = [[h, 0.0], [0.0, h]];
            let a = sample(t.a(), i);
            alpha[p] = [[0.0, a], [-a, 0.0]];
            fun[p] = sample(f, i);
        }
    }
    let jmat: Sym = [[0.0, -1.0], [1.0, 0.0]]; // J^a_b, column b is J∂_b
    let ginv: Vec<Sym> = g.iter().map(inverse).collect();

    // ∂_c g_ab
    let mut dg = vec![[[[0.0; 2]; 2]; 2]; np];
    for a in 0..2 {
        for b in 0..2 {
            let comp = component(&g, a, b);
            for c in 0..2 {
                let d = plane.d(c, &comp);
                for p in 0..np {
                    dg[p][c][a][b] = d[p];
                }
            }
        }
    }
    // Γ^a_bc
    let mut gamma = vec![[[[0.0; 2]; 2]; 2]; np];
    for p in 0..np {
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let mut s = 0.0;
                    for d in 0..2 {
                        s += 0.5 * ginv[p][a][d] * (dg[p][b][d][c] + dg[p][c][d][b] - dg[p][d][b][c]);
                    }
                    gamma[p][a][b][c] = s;
                }
            }
        }
    }
    // ∂_e Γ^a_bc
    let mut dgamma = vec![[[[[0.0; 2]; 2]; 2]; 2]; np];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let comp: Vec<f64> = gamma.iter().map(|gm| gm[a][b][c]).collect();
                for e in 0..2 {
                    let d = plane.d(e, &comp);
                    for p in 0..np {
                        dgamma[p][e][a][b][c] = d[p];
                    }
                }
            }
        }
    }
    // R^a_bcd = ∂_c Γ^a_db - ∂_d Γ^a_cb + Γ^a_ce Γ^e_db - Γ^a_de Γ^e_cb, Ric_bd = R^a_bad
    let mut scalar = vec![0.0; np];
    for p in 0..np {
        let gm = &gamma[p];
        let mut ric: Sym = [[0.0; 2]; 2];
        for b in 0..2 {
            for d in 0..2 {
                let mut s = 0.0;
                for a in 0..2 {
                    let c = a;
                    s += dgamma[p][c][a][d][b] - dgamma[p][d][a][c][b];
                    for e in 0..2 {
                        s += gm[a][c][e] * gm[e][d][b] - gm[a][d][e] * gm[e][c][b];
                    }
                }
                ric[b][d] = s;
            }
        }
        scalar[p] = (0..2).flat_map(|b| (0..2).map(move |d| (b, d))).map(|(b, d)| ginv[p][b][d] * ric[b][d]).sum();
    }

    // first and second coordinate derivatives of f, Hessian ∇_a∇_b f
    let df = [plane.d(0, &fun), plane.d(1, &fun)];
    let ddf = [[plane.d(0, &df[0]), plane.d(1, &df[0])], [plane.d(0, &df[1]), plane.d(1, &df[1])]];
    let mut lap = vec![0.0; np];
    let mut grad = vec![0.0; np];
    let mut h11 = vec![0.0; np];
    let mut h22 = vec![0.0; np];
    let mut mixed = vec![0.0; np];
    let mut pure = vec![0.0; np];
    let mut trb = vec![0.0; np];
    let mut beta = vec![[[0.0; 2]; 2]; np];
    for p in 0..np {
        let gi = &ginv[p];
        let mut hess: Sym = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let mut s = 0.5 * (ddf[a][b][p] + ddf[b][a][p]);
                for c in 0..2 {
                    s -= gamma[p][c][a][b] * df[c][p];
                }
                hess[a][b] = s;
            }
        }
        let contract = |x: &Sym, y: &Sym| {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..2 {
                        for d in 0..2 {
                            s += gi[a][c] * gi[b][d] * x[a][b] * y[c][d];
                        }
                    }
                }
            }
            s
        };
        lap[p] = (0..2).map(|a| (0..2).map(|b| gi[a][b] * hess[a][b]).sum::<f64>()).sum();
        grad[p] = (0..2).map(|a| (0..2).map(|b| gi[a][b] * df[a][p] * df[b][p]).sum::<f64>()).sum();
        // unit frame e1 = ∂x/|∂x|, e2 = J e1
        let e1 = [1.0 / g[p][0][0].sqrt(), 0.0];
        let e2 = [jmat[0][0] * e1[0] + jmat[0][1] * e1[1], jmat[1][0] * e1[0] + jmat[1][1] * e1[1]];
        let quad = |u: &[f64; 2], v: &[f64; 2]| {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    s += hess[a][b] * u[a] * v[b];
                }
            }
            s
        };
        h11[p] = quad(&e1, &e1);
        h22[p] = quad(&e2, &e2);
        // J-invariant and anti-invariant parts, H(J·, J·) = Jᵀ H J
        let mut jhj: Sym = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        jhj[a][b] += jmat[c][a] * hess[c][d] * jmat[d][b];
                    }
                }
            }
        }
        let mut plus: Sym = [[0.0; 2]; 2];
        let mut minus: Sym = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                plus[a][b] = 0.5 * (hess[a][b] + jhj[a][b]);
                minus[a][b] = 0.5 * (hess[a][b] - jhj[a][b]);
            }
        }
        // complex norms are half the Riemannian ones
        mixed[p] = 0.5 * contract(&plus, &plus);
        pure[p] = 0.5 * contract(&minus, &minus);
        // β(X, Y) = α(X, JY)
        for a in 0..2 {
            for b in 0..2 {
                beta[p][a][b] = (0..2).map(|c| alpha[p][a][c] * jmat[c][b]).sum();
            }
        }
        trb[p] = (0..2).map(|a| (0..2).map(|b| gi[a][b] * beta[p][a][b]).sum::<f64>()).sum();
    }

    // Bianchi residual for β
    let dtr = [plane.d(0, &trb), plane.d(1, &trb)];
    let mut dbeta = vec![[[[0.0; 2]; 2]; 2]; np];
    for a in 0..2 {
        for b in 0..2 {
            let comp = component(&beta, a, b);
            for c in 0..2 {
                let d = plane.d(c, &comp);
                for p in 0..np {
                    dbeta[p][c][a][b] = d[p];
                }
            }
        }
    }
    let core_cut = 1e-3 * m.h().max();
    let in_core = |p: usize| g[p][0][0] >= core_cut;
    let mut bianchi = 0.0f64;
    let mut bianchi_scale = 0.0f64;
    for p in (0..np).filter(|&p| in_core(p)) {
        for i in 0..2 {
            let mut div = 0.0;
            let mut raw = 0.0;
            for j in 0..2 {
                for q in 0..2 {
                    raw += ginv[p][j][q] * dbeta[p][q][i][j];
                    let mut cov = dbeta[p][q][i][j];
                    for k in 0..2 {
                        cov -= gamma[p][k][q][i] * beta[p][k][j] + gamma[p][k][q][j] * beta[p][i][k];
                    }
                    div += ginv[p][j][q] * cov;
                }
            }
            bianchi = bianchi.max((dtr[i][p] - 2.0 * div).abs());
            bianchi_scale = bianchi_scale.max(dtr[i][p].abs()).max(2.0 * raw.abs());
        }
    }
    if bianchi_scale > 0.0 {
        bianchi /= bianchi_scale;
    }

    // reduced formulas on the fine grid, compared at the coarse nodes
    let hf = hessian_frames(m, f);
    let complex = Normalization::Complex;
    let reduced_r = scalar_curvature(m);
    let reduced_lap = laplacian(m, f, complex);
    let reduced_grad = grad_sq(m, f, complex);
    let reduced_tr = trace_twist(m, t, complex);
    let compare = |reduced: &Field, oracle: &[f64], factor: f64| {
        let mut dev = 0.0f64;
        let mut scale = 1.0f64;
        for i in 0..nx {
            let p = plane.idx(i, 0);
            if !in_core(p) {
                continue;
            }
            for k in 0..nt {
                let o = factor * oracle[plane.idx(i, k)];
                scale = scale.max(o.abs());
                dev = dev.max((reduced[i * opts.stride] - o).abs());
            }
        }
        dev / scale
    };
    Ok(OracleReport {
        n_x: nx,
        n_theta: nt,
        scalar_curvature: compare(&reduced_r, &scalar, 0.5),
        laplacian: compare(&reduced_lap, &lap, 0.5),
        grad_sq: compare(&reduced_grad, &grad, 0.5),
        trace_twist: compare(&reduced_tr, &trb, 0.5),
        hessian_h11: compare(&hf.h11, &h11, 1.0),
        hessian_h22: compare(&hf.h22, &h22, 1.0),
        hessian_mixed: compare(&hf.mixed_sq, &mixed, 1.0),
        hessian_pure: compare(&hf.pure_sq, &pure, 1.0),
        bianchi,
    })
}

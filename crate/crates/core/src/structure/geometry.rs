//! Series-valued metric, Christoffel symbols and Koszul data around a point.
//!
//! Every field here is a truncated Taylor polynomial, so further derivatives
//! (for `∂Γ`, `∂β`, `∂∂R`) stay exact instead of going through stencils.

use crate::dsl::{PotentialField, Series};
use crate::tensor::invert_spd;

use super::StructureError;

pub(crate) struct LocalGeometry {
    pub n: usize,
    pub x: Vec<f64>,
    /// Potential expansion order.
    pub order: usize,
    /// `g_ij`, order `K-2`.
    pub g: Vec<Series>,
    /// `g^ij`, order `K-2`.
    pub g_inv: Vec<Series>,
    /// `γ_ijk = ½ ∂_k g_ij`, order `K-3`, index `(i*n + j)*n + k`.
    pub gamma: Vec<Series>,
    /// `Γ^i_jk = g^il γ_ljk`, order `K-3`.
    pub christoffel: Vec<Series>,
    /// `½ log det g`, order `K-2`.
    pub log_sqrt_det: Series,
    /// `α_i = ∂_i ½ log det g`, order `K-3`.
    pub alpha: Vec<Series>,
}

pub(crate) fn idx2(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

pub(crate) fn idx3(n: usize, i: usize, j: usize, k: usize) -> usize {
    (i * n + j) * n + k
}

fn mat_mul(a: &[Series], b: &[Series], n: usize) -> Vec<Series> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = &a[idx2(n, i, 0)] * &b[idx2(n, 0, j)];
            for k in 1..n {
                acc = &acc + &(&a[idx2(n, i, k)] * &b[idx2(n, k, j)]);
            }
            out.push(acc);
        }
    }
    out
}

impl LocalGeometry {
    pub fn new(field: &PotentialField, x: &[f64], order: usize) -> Result<Self, StructureError> {
        if field.max_order() < order {
            return Err(StructureError::InsufficientOrder {
                needed: order,
                available: field.max_order(),
            });
        }
        let n = field.dim();
        let phi = field.series_at(x, order)?;
        let layout = phi.layout().clone();
        let g_order = order - 2;

        let first: Vec<Series> = (0..n).map(|i| phi.derivative(i)).collect();
        let mut g = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                // read the sorted pair so g is symmetric term by term
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                g.push(first[a].derivative(b));
            }
        }
        let g0: Vec<f64> = g.iter().map(Series::value).collect();
        let (a0, _) = invert_spd(&g0, n).map_err(|_| StructureError::NotPositiveDefinite {
            point: x.to_vec(),
        })?;
        positive_definite_guard(&g0, n, x)?;

        // g^{-1} = (Σ_k N^k) A with A = g0^{-1}, N = I - A g (nilpotent)
        let a_series: Vec<Series> = a0
            .iter()
            .map(|&v| Series::constant(&layout, g_order, v))
            .collect();
        let ag = mat_mul(&a_series, &g, n);
        let nil: Vec<Series> = ag
            .iter()
            .map(|s| {
                let mut c = (-s).coeffs().to_vec();
                c[0] = 0.0;
                Series::from_coeffs(&layout, s.order(), c)
            })
            .collect();
        let identity: Vec<Series> = (0..n * n)
            .map(|k| Series::constant(&layout, g_order, if k / n == k % n { 1.0 } else { 0.0 }))
            .collect();
        let mut sum = identity.clone();
        let mut power = identity;
        for _ in 0..g_order {
            power = mat_mul(&power, &nil, n);
            sum = sum.iter().zip(&power).map(|(s, p)| s + p).collect();
        }
        let raw_inv = mat_mul(&sum, &a_series, n);
        let mut g_inv = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                let s = (&raw_inv[idx2(n, a, b)] + &raw_inv[idx2(n, b, a)]).scale(0.5);
                let mut c = s.coeffs().to_vec();
                c[0] = a0[idx2(n, a, b)];
                g_inv.push(Series::from_coeffs(&layout, s.order(), c));
            }
        }

        let mut gamma = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    // γ_ijk = ½ ∂_i∂_j∂_k φ, read from one sorted triple
                    let mut t = [i, j, k];
                    t.sort_unstable();
                    gamma.push(g[idx2(n, t[0], t[1])].derivative(t[2]).scale(0.5));
                }
            }
        }
        let mut christoffel = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = &g_inv[idx2(n, i, 0)] * &gamma[idx3(n, 0, j, k)];
                    for l in 1..n {
                        acc = &acc + &(&g_inv[idx2(n, i, l)] * &gamma[idx3(n, l, j, k)]);
                    }
                    christoffel.push(acc);
                }
            }
        }

        let log_sqrt_det = log_det_series(&g, n).scale(0.5);
        let alpha = (0..n).map(|i| log_sqrt_det.derivative(i)).collect();

        Ok(LocalGeometry {
            n,
            x: x.to_vec(),
            order,
            g,
            g_inv,
            gamma,
            christoffel,
            log_sqrt_det,
            alpha,
        })
    }

    pub fn gamma_at(&self, i: usize, j: usize, k: usize) -> &Series {
        &self.gamma[idx3(self.n, i, j, k)]
    }

    pub fn chris(&self, i: usize, j: usize, k: usize) -> &Series {
        &self.christoffel[idx3(self.n, i, j, k)]
    }

    /// `α^k = g^kl α_l` as series (order `K-3`).
    pub fn alpha_sharp(&self) -> Vec<Series> {
        let n = self.n;
        (0..n)
            .map(|k| {
                let mut acc = &self.g_inv[idx2(n, k, 0)] * &self.alpha[0];
                for l in 1..n {
                    acc = &acc + &(&self.g_inv[idx2(n, k, l)] * &self.alpha[l]);
                }
                acc
            })
            .collect()
    }
}

/// Smallest eigenvalue must exceed `1e-12 · trace`.
fn positive_definite_guard(g0: &[f64], n: usize, x: &[f64]) -> Result<(), StructureError> {
    let trace: f64 = (0..n).map(|i| g0[i * n + i]).sum();
    let eig = crate::tensor::symmetric_eigenvalues(g0, n);
    if eig[0] > 1e-12 * trace {
        Ok(())
    } else {
        Err(StructureError::NotPositiveDefinite { point: x.to_vec() })
    }
}

/// `log det` of a symmetric positive-definite series matrix by Gaussian
/// elimination; pivots keep positive constant terms.
fn log_det_series(g: &[Series], n: usize) -> Series {
    let mut m = g.to_vec();
    let mut total: Option<Series> = None;
    for k in 0..n {
        let pivot = m[idx2(n, k, k)].clone();
        let inv = pivot.recip();
        for i in k + 1..n {
            let f = &m[idx2(n, i, k)] * &inv;
            for j in k + 1..n {
                let upd = &m[idx2(n, i, j)] - &(&f * &m[idx2(n, k, j)]);
                m[idx2(n, i, j)] = upd;
            }
        }
        let l = pivot.ln();
        total = Some(match total {
            None => l,
            Some(t) => &t + &l,
        });
    }
    total.expect("n ≥ 1")
}

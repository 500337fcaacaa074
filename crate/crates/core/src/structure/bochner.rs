//! Laplacian of the scalar curvature against its quadratic expansion in
//! `∇∇α`, `∇γ`, `Rm`, `Ric`, `β`.
//!
//! Two sources for `ΔR = g^ij(∂_i∂_j R − Γ^k_ij ∂_k R)`: the curvature
//! formula pushed through an order-5 jet, or 4th-order central differences of
//! the pointwise scalar curvature.

use itertools_free::product;
use serde::Serialize;

use crate::dsl::{PotentialField, Series};
use crate::tensor::MetricPoint;

use super::geometry::{idx2, LocalGeometry};
use super::{build_structure, structure_at, StructureError, StructurePoint};

/// Jet order consumed by the Bochner check.
pub const BOCHNER_ORDER: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianSource {
    Jet,
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BochnerTerms {
    pub source: LaplacianSource,
    pub half_laplacian_r: f64,
    /// `∇_i∇_jα_k γ_ijk`
    pub grad_grad_alpha_gamma: f64,
    /// `∇_r∇_rα_i α_i`
    pub rough_laplacian_alpha_alpha: f64,
    pub grad_gamma_sq: f64,
    pub riemann_sq: f64,
    pub ricci_sq: f64,
    /// `R_ij β_ij`
    pub ricci_beta: f64,
    /// `R_ij ∇_iα_j`
    pub ricci_grad_alpha: f64,
    pub grad_alpha_sq: f64,
}

impl BochnerTerms {
    /// Right-hand side without the `|∇α|²` term.
    pub fn printed_rhs(&self) -> f64 {
        self.grad_grad_alpha_gamma - self.rough_laplacian_alpha_alpha
            + self.grad_gamma_sq
            + self.riemann_sq
            + self.ricci_sq
            + self.ricci_beta
            - self.ricci_grad_alpha
    }

    /// Full right-hand side: the expansion of `½ΔR` carries `−|∇α|²`.
    pub fn rhs(&self) -> f64 {
        self.printed_rhs() - self.grad_alpha_sq
    }

    /// Signed `½ΔR − rhs`.
    pub fn residual(&self) -> f64 {
        self.half_laplacian_r - self.rhs()
    }

    /// Signed `½ΔR − printed_rhs`; equals `−|∇α|²` up to roundoff.
    pub fn printed_residual(&self) -> f64 {
        self.half_laplacian_r - self.printed_rhs()
    }

    /// Largest term magnitude, used as the relative scale.
    pub fn scale(&self) -> f64 {
        [
            self.half_laplacian_r,
            self.grad_grad_alpha_gamma,
            self.rough_laplacian_alpha_alpha,
            self.grad_gamma_sq,
            self.riemann_sq,
            self.ricci_sq,
            self.ricci_beta,
            self.ricci_grad_alpha,
            self.grad_alpha_sq,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Signed residual `½ΔR − rhs` at `x`.
pub fn bochner_residual(
    field: &PotentialField,
    x: &[f64],
    source: LaplacianSource,
) -> Result<f64, StructureError> {
    Ok(bochner_terms(field, x, source)?.residual())
}

pub fn bochner_terms(
    field: &PotentialField,
    x: &[f64],
    source: LaplacianSource,
) -> Result<BochnerTerms, StructureError> {
    let geo = LocalGeometry::new(field, x, BOCHNER_ORDER)?;
    let sp = build_structure(field, &geo)?;
    let n = geo.n;
    let m = &sp.metric;

    let grad_alpha_series = covariant_alpha_series(&geo);
    let gm = |i: usize, j: usize, k: usize| sp.gamma_mixed.get(&[i, j, k]);
    // ∇_i∇_jα_k = ∂_i(∇α)_jk − Γ^r_ij ∇α_rk − Γ^r_ik ∇α_jr
    let mut gga = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut v = grad_alpha_series[idx2(n, j, k)].derivative_value(&[i]);
                for r in 0..n {
                    v -= gm(r, i, j) * sp.grad_alpha.get(&[r, k]) + gm(r, i, k) * sp.grad_alpha.get(&[j, r]);
                }
                gga[(i * n + j) * n + k] = v;
            }
        }
    }

    let half_laplacian_r = 0.5
        * match source {
            LaplacianSource::Jet => jet_laplacian(&geo, &sp),
            LaplacianSource::FiniteDifference => fd_laplacian(field, &sp)?,
        };

    let gamma = |i: usize, j: usize, k: usize| sp.gamma_lower.get(&[i, j, k]);
    let mut t1 = 0.0;
    for (a, b) in product(n, 3) {
        t1 += weight(m, &a, &b) * gga[(a[0] * n + a[1]) * n + a[2]] * gamma(b[0], b[1], b[2]);
    }
    let mut t2 = 0.0;
    for r in 0..n {
        for s in 0..n {
            for i in 0..n {
                for a in 0..n {
                    t2 += m.inv(r, s) * m.inv(i, a) * gga[(r * n + s) * n + i] * sp.alpha.get(&[a]);
                }
            }
        }
    }
    let norm = |t: &crate::tensor::DenseTensor| crate::tensor::norm_sq(t, m).expect("lower tensor");
    let pair = |a: &crate::tensor::DenseTensor, b: &crate::tensor::DenseTensor| {
        let mut s = 0.0;
        for (x, y) in product(n, 2) {
            s += weight(m, &x, &y) * a.get(&x) * b.get(&y);
        }
        s
    };

    Ok(BochnerTerms {
        source,
        half_laplacian_r,
        grad_grad_alpha_gamma: t1,
        rough_laplacian_alpha_alpha: t2,
        grad_gamma_sq: norm(&sp.grad_gamma),
        riemann_sq: norm(&sp.riemann_lower),
        ricci_sq: norm(&sp.ricci),
        ricci_beta: pair(&sp.ricci, &sp.beta),
        ricci_grad_alpha: pair(&sp.ricci, &sp.grad_alpha),
        grad_alpha_sq: norm(&sp.grad_alpha),
    })
}

fn weight(m: &MetricPoint, a: &[usize], b: &[usize]) -> f64 {
    a.iter().zip(b).map(|(&i, &j)| m.inv(i, j)).product()
}

/// `∇_jα_k = ∂_jα_k − Γ^r_jk α_r` as series.
fn covariant_alpha_series(geo: &LocalGeometry) -> Vec<Series> {
    let n = geo.n;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            let mut s = geo.alpha[k].derivative(j);
            for r in 0..n {
                s = &s - &(geo.chris(r, j, k) * &geo.alpha[r]);
            }
            out.push(s);
        }
    }
    out
}

/// Scalar curvature as a series through the γγ formula, contracted with `g^jk`.
fn scalar_series(geo: &LocalGeometry) -> Series {
    let n = geo.n;
    let c = |i, j, k| geo.chris(i, j, k);
    let mut total: Option<Series> = None;
    for j in 0..n {
        for k in 0..n {
            // Ric_jk = R^s_jsk = Γ^s_kr Γ^r_js − Γ^s_sr Γ^r_jk
            for s in 0..n {
                for r in 0..n {
                    let term = &(c(s, k, r) * c(r, j, s)) - &(c(s, s, r) * c(r, j, k));
                    let term = &geo.g_inv[idx2(n, j, k)] * &term;
                    total = Some(match total {
                        None => term,
                        Some(t) => &t + &term,
                    });
                }
            }
        }
    }
    total.expect("n ≥ 1")
}

fn laplacian_from(sp: &StructurePoint, grad: &[f64], hess: &[f64]) -> f64 {
    let n = sp.dim();
    let mut out = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut v = hess[idx2(n, i, j)];
            for k in 0..n {
                v -= sp.gamma_mixed.get(&[k, i, j]) * grad[k];
            }
            out += sp.metric.inv(i, j) * v;
        }
    }
    out
}

fn jet_laplacian(geo: &LocalGeometry, sp: &StructurePoint) -> f64 {
    let n = geo.n;
    let r = scalar_series(geo);
    let grad: Vec<f64> = (0..n).map(|k| r.derivative_value(&[k])).collect();
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            hess[idx2(n, i, j)] = r.derivative_value(&[i, j]);
        }
    }
    laplacian_from(sp, &grad, &hess)
}

const D1: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
const D2: [(f64, f64); 5] = [
    (-2.0, -1.0 / 12.0),
    (-1.0, 16.0 / 12.0),
    (0.0, -30.0 / 12.0),
    (1.0, 16.0 / 12.0),
    (2.0, -1.0 / 12.0),
];

/// Fourth-order central differences of `R` with step `1e-3 · max(1, |x|∞)`.
fn fd_laplacian(field: &PotentialField, sp: &StructurePoint) -> Result<f64, StructureError> {
    let n = sp.dim();
    let x = &sp.point;
    let h = 1e-3 * x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let scalar_at = |offsets: &[(usize, f64)]| -> Result<f64, StructureError> {
        let mut y = x.clone();
        for &(axis, d) in offsets {
            y[axis] += d * h;
        }
        Ok(structure_at(field, &y)?.scalar)
    };
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        for &(o, w) in &D1 {
            grad[i] += w * scalar_at(&[(i, o)])?;
        }
        grad[i] /= h;
        for &(o, w) in &D2 {
            let v = if o == 0.0 { sp.scalar } else { scalar_at(&[(i, o)])? };
            hess[idx2(n, i, i)] += w * v;
        }
        hess[idx2(n, i, i)] /= h * h;
        for j in 0..i {
            let mut v = 0.0;
            for &(oi, wi) in &D1 {
                for &(oj, wj) in &D1 {
                    v += wi * wj * scalar_at(&[(i, oi), (j, oj)])?;
                }
            }
            hess[idx2(n, i, j)] = v / (h * h);
            hess[idx2(n, j, i)] = v / (h * h);
        }
    }
    Ok(laplacian_from(sp, &grad, &hess))
}

mod itertools_free {
    /// All pairs `(a, b)` of index tuples of length `k` over `0..n`.
    pub fn product(n: usize, k: usize) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> {
        let total = n.pow(k as u32);
        let tuple = move |mut c: usize| {
            let mut t = vec![0; k];
            for slot in t.iter_mut().rev() {
                *slot = c % n;
                c /= n;
            }
            t
        };
        (0..total).flat_map(move |a| (0..total).map(move |b| (tuple(a), tuple(b))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic() -> PotentialField {
        PotentialField::parse("(x1^2 + x2^2)/2 + 0.01*(x1^4 + x1^2*x2^2)", 2).unwrap()
    }

    #[test]
    fn quadratic_is_exactly_zero() {
        let f = PotentialField::builtin_family("quadratic", 2, None, None).unwrap();
        let t = bochner_terms(&f, &[0.4, -0.2], LaplacianSource::Jet).unwrap();
        assert_eq!(t.residual(), 0.0);
        assert_eq!(t.scale(), 0.0);
    }

    #[test]
    fn quartic_matches_symbolic_values() {
        // Symbolic oracle: the printed expansion misses exactly -|∇α|² here.
        for source in [LaplacianSource::Jet, LaplacianSource::FiniteDifference] {
            let t = bochner_terms(&quartic(), &[0.2, 0.1], source).unwrap();
            assert!(t.residual().abs() < 1e-8, "{source:?}: {}", t.residual());
            assert!((t.grad_alpha_sq - 0.0191150407278087).abs() < 1e-12);
            assert!((t.printed_residual() + t.grad_alpha_sq).abs() < 1e-8);
        }
    }

    #[test]
    fn log_cone_points() {
        let f = PotentialField::builtin_family("log_cone", 2, None, None).unwrap();
        for x in [[0.0, 1.0], [0.3, 1.3]] {
            for source in [LaplacianSource::Jet, LaplacianSource::FiniteDifference] {
                let t = bochner_terms(&f, &x, source).unwrap();
                assert!(t.residual().abs() < 1e-7, "{x:?} {source:?} {}", t.residual());
                assert!(t.grad_alpha_sq < 1e-20);
            }
        }
    }

    #[test]
    fn product_enumerates_all_pairs() {
        assert_eq!(product(2, 2).count(), 16);
        assert_eq!(product(3, 1).last(), Some((vec![2], vec![2])));
    }
}

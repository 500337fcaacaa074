//! Hessian-structure tensor inventory at a chart point.
//!
//! In the affine chart the flat connection `D` has zero coefficients, so the
//! difference tensor `γ = ∇ - D` has mixed components equal to the
//! Levi-Civita Christoffel symbols, and `β = Dα` is just `∂_i α_j`.

mod bochner;
pub(crate) mod geometry;

use serde::Serialize;
use thiserror::Error;

use crate::check::{relative, CheckRecord};
use crate::dsl::{FieldError, PotentialField};
use crate::tensor::{self, DenseTensor, Lower, MetricPoint, TensorError, Upper};

pub use bochner::{bochner_residual, bochner_terms, BochnerTerms, LaplacianSource};
use geometry::{idx2, LocalGeometry};

/// Default relative tolerance for the pointwise identity suite.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

/// Jet order used by [`structure_at`]; `β` and `∇γ` consume fourth
/// derivatives of the potential.
pub const STRUCTURE_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("Hessian is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("jet order {needed} needed, field supports {available}")]
    InsufficientOrder { needed: usize, available: usize },
    #[error("sample set is empty")]
    EmptySamples,
}

/// Full tensor inventory at one point.
///
/// Index conventions: `gamma_mixed.get([i, j, k]) = γ^i_jk`,
/// `riemann.get([i, j, k, l]) = R^i_jkl`, `grad_gamma.get([i, j, k, l]) = ∇_i γ_jkl`.
#[derive(Clone, Debug, Serialize)]
pub struct StructurePoint {
    pub field_id: String,
    pub point: Vec<f64>,
    pub jet_order: usize,
    pub metric: MetricPoint,
    /// `∂_k g_ij` read straight from the third derivatives of the potential.
    pub metric_derivative: DenseTensor,
    pub gamma_lower: DenseTensor,
    pub gamma_mixed: DenseTensor,
    /// `α_i = ∂_i log sqrt(det g)`.
    pub alpha: DenseTensor,
    /// `α_i = γ^r_ri`.
    pub alpha_trace: DenseTensor,
    /// `β_ij = ∂_i α_j`.
    pub beta: DenseTensor,
    /// `β_ij = H^r_rij`.
    pub beta_h_trace: DenseTensor,
    /// `H^i_jkl = ∂_k γ^i_jl`.
    pub hessian_curvature: DenseTensor,
    pub hessian_curvature_lower: DenseTensor,
    /// `R^i_jkl = γ^i_lr γ^r_jk - γ^i_kr γ^r_jl`.
    pub riemann: DenseTensor,
    /// `R_ijkl = g_ip R^p_jkl`.
    pub riemann_lower: DenseTensor,
    /// `R_jk = R^s_jsk`.
    pub ricci: DenseTensor,
    pub scalar: f64,
    /// `∇_i α_j`.
    pub grad_alpha: DenseTensor,
    /// `∇_i γ_jkl`.
    pub grad_gamma: DenseTensor,
    pub alpha_dual: DenseTensor,
    pub beta_dual: DenseTensor,
    pub flat_connection: DenseTensor,
    pub levi_civita: DenseTensor,
    pub dual_connection: DenseTensor,
    /// `α♯`, and its Jacobian `∂_i α^k` stored as `[i, k]`.
    pub alpha_sharp: DenseTensor,
    pub alpha_sharp_jacobian: DenseTensor,
    /// `½ log det g`, a primitive of `α`.
    pub log_volume_density: f64,
}

fn tensor_from(n: usize, variance: &[crate::tensor::Variance], f: impl FnMut(&[usize]) -> f64) -> DenseTensor {
    DenseTensor::from_fn(n, variance, f)
}

/// Assemble the full inventory from an order-4 jet of the potential.
pub fn structure_at(field: &PotentialField, x: &[f64]) -> Result<StructurePoint, StructureError> {
    let geo = LocalGeometry::new(field, x, STRUCTURE_ORDER)?;
    build_structure(field, &geo)
}

pub(crate) fn build_structure(
    field: &PotentialField,
    geo: &LocalGeometry,
) -> Result<StructurePoint, StructureError> {
    let n = geo.n;
    let g0: Vec<f64> = geo.g.iter().map(|s| s.value()).collect();
    let metric = MetricPoint::new(&g0, n)?;

    let metric_derivative = tensor_from(n, &[Lower, Lower, Lower], |i| {
        geo.g[idx2(n, i[0], i[1])].derivative_value(&[i[2]])
    });
    let gamma_lower = tensor_from(n, &[Lower, Lower, Lower], |i| geo.gamma_at(i[0], i[1], i[2]).value());
    let gamma_mixed = tensor_from(n, &[Upper, Lower, Lower], |i| geo.chris(i[0], i[1], i[2]).value());
    let alpha = tensor_from(n, &[Lower], |i| geo.alpha[i[0]].value());
    let alpha_trace = tensor_from(n, &[Lower], |i| {
        (0..n).map(|r| geo.chris(r, r, i[0]).value()).sum()
    });
    let beta = tensor_from(n, &[Lower, Lower], |i| geo.log_sqrt_det.derivative_value(&[i[0], i[1]]));
    let hessian_curvature = tensor_from(n, &[Upper, Lower, Lower, Lower], |i| {
        geo.chris(i[0], i[1], i[3]).derivative_value(&[i[2]])
    });
    let beta_h_trace = tensor_from(n, &[Lower, Lower], |i| {
        (0..n).map(|r| hessian_curvature.get(&[r, r, i[0], i[1]])).sum()
    });
    let hessian_curvature_lower = tensor::lower(&hessian_curvature, 0, &metric)?;

    let gm = |i: usize, j: usize, k: usize| gamma_mixed.get(&[i, j, k]);
    let riemann = tensor_from(n, &[Upper, Lower, Lower, Lower], |ix| {
        let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
        (0..n).map(|r| gm(i, l, r) * gm(r, j, k) - gm(i, k, r) * gm(r, j, l)).sum()
    });
    let riemann_lower = tensor::lower(&riemann, 0, &metric)?;
    let ricci = tensor_from(n, &[Lower, Lower], |ix| {
        (0..n).map(|s| riemann.get(&[s, ix[0], s, ix[1]])).sum()
    });
    let scalar = tensor::trace(&ricci, 0, 1, Some(&metric))?.data()[0];

    let grad_alpha = tensor_from(n, &[Lower, Lower], |ix| {
        let (i, j) = (ix[0], ix[1]);
        beta.get(&[i, j]) - (0..n).map(|r| gm(r, i, j) * alpha.get(&[r])).sum::<f64>()
    });
    let gl = |i: usize, j: usize, k: usize| gamma_lower.get(&[i, j, k]);
    let grad_gamma = tensor_from(n, &[Lower, Lower, Lower, Lower], |ix| {
        let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
        let d = geo.gamma_at(j, k, l).derivative_value(&[i]);
        let corr: f64 = (0..n)
            .map(|r| gm(r, i, j) * gl(r, k, l) + gm(r, i, k) * gl(j, r, l) + gm(r, i, l) * gl(j, k, r))
            .sum();
        d - corr
    });

    // dual structure D' = 2∇ - D: coefficients 2Γ in the D-affine chart
    let dual_connection = gamma_mixed.scale(2.0);
    let flat_connection = DenseTensor::zeros(n, &[Upper, Lower, Lower]);
    // α'_i = trace of (∇ - D')_{∂_i}, β'_ij = ∂_i α'_j - D'^r_ij α'_r
    let alpha_dual_series: Vec<_> = (0..n)
        .map(|i| {
            let mut acc = (geo.chris(0, 0, i) - &geo.chris(0, 0, i).scale(2.0)).clone();
            for r in 1..n {
                let c = geo.chris(r, r, i);
                acc = &acc + &(c - &c.scale(2.0));
            }
            acc
        })
        .collect();
    let alpha_dual = tensor_from(n, &[Lower], |i| alpha_dual_series[i[0]].value());
    let beta_dual = tensor_from(n, &[Lower, Lower], |ix| {
        let (i, j) = (ix[0], ix[1]);
        let d = alpha_dual_series[j].derivative_value(&[i]);
        d - (0..n)
            .map(|r| dual_connection.get(&[r, i, j]) * alpha_dual.get(&[r]))
            .sum::<f64>()
    });

    let sharp_series = geo.alpha_sharp();
    let alpha_sharp = tensor_from(n, &[Upper], |i| sharp_series[i[0]].value());
    let alpha_sharp_jacobian = tensor_from(n, &[Lower, Upper], |ix| {
        sharp_series[ix[1]].derivative_value(&[ix[0]])
    });

    let sp = StructurePoint {
        field_id: field.id().to_string(),
        point: geo.x.clone(),
        jet_order: geo.order,
        levi_civita: gamma_mixed.clone(),
        metric,
        metric_derivative,
        gamma_lower,
        gamma_mixed,
        alpha,
        alpha_trace,
        beta,
        beta_h_trace,
        hessian_curvature,
        hessian_curvature_lower,
        riemann,
        riemann_lower,
        ricci,
        scalar,
        grad_alpha,
        grad_gamma,
        alpha_dual,
        beta_dual,
        flat_connection,
        dual_connection,
        alpha_sharp,
        alpha_sharp_jacobian,
        log_volume_density: geo.log_sqrt_det.value(),
    };
    if !sp.all_finite() {
        return Err(StructureError::Field(FieldError::Domain {
            point: sp.point.clone(),
            reason: "non-finite structure tensors".into(),
        }));
    }
    Ok(sp)
}

impl StructurePoint {
    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn gamma_norm_sq(&self) -> f64 {
        tensor::norm_sq(&self.gamma_lower, &self.metric).expect("shapes agree")
    }

    pub fn alpha_norm_sq(&self) -> f64 {
        tensor::norm_sq(&self.alpha, &self.metric).expect("shapes agree")
    }

    /// `g^ij β_ij`.
    pub fn beta_trace(&self) -> f64 {
        tensor::trace(&self.beta, 0, 1, Some(&self.metric)).expect("rank 2").data()[0]
    }

    /// `div α♯ = ∂_i α^i + Γ^i_ik α^k`.
    pub fn alpha_sharp_divergence(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                self.alpha_sharp_jacobian.get(&[i, i])
                    + (0..n)
                        .map(|k| self.gamma_mixed.get(&[i, i, k]) * self.alpha_sharp.get(&[k]))
                        .sum::<f64>()
            })
            .sum()
    }

    fn all_finite(&self) -> bool {
        [
            &self.metric.g,
            &self.metric.g_inv,
            &self.gamma_lower,
            &self.alpha,
            &self.beta,
            &self.riemann,
            &self.grad_gamma,
            &self.beta_dual,
            &self.alpha_sharp_jacobian,
        ]
        .iter()
        .all(|t| t.data().iter().all(|v| v.is_finite()))
            && self.scalar.is_finite()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("structure serializes")
    }
}

/// Pointwise identity suite on a populated structure point.
///
/// Residuals are relative with a unit floor (see [`relative`]).
pub fn verify_identities(sp: &StructurePoint, tol: f64) -> Vec<CheckRecord> {
    let n = sp.dim();
    let m = &sp.metric;
    let mut out = Vec::new();

    let scale = sp.alpha.max_abs().max(sp.alpha_trace.max_abs());
    out.push(CheckRecord::new(
        "alpha_logdet_vs_gamma_trace",
        "α_i = ∂_i log √det g = γ^r_ri",
        relative(sp.alpha.max_abs_diff(&sp.alpha_trace), scale),
        tol,
    ));

    let scale = sp.beta.max_abs().max(sp.beta_h_trace.max_abs());
    out.push(CheckRecord::new(
        "beta_vs_h_trace",
        "β_ij = ∂_i α_j = H^r_rij",
        relative(sp.beta.max_abs_diff(&sp.beta_h_trace), scale),
        tol,
    ));

    let gm = |i: usize, j: usize, k: usize| sp.gamma_mixed.get(&[i, j, k]);
    let ricci_gamma = DenseTensor::from_fn(n, &[Lower, Lower], |ix| {
        let (j, k) = (ix[0], ix[1]);
        let mut s = 0.0;
        for a in 0..n {
            for r in 0..n {
                s += gm(a, k, r) * gm(r, j, a);
            }
        }
        s - (0..n).map(|r| sp.alpha.get(&[r]) * gm(r, j, k)).sum::<f64>()
    });
    let scale = sp.ricci.max_abs().max(sp.gamma_norm_sq());
    out.push(CheckRecord::new(
        "ricci_gamma_form",
        "R_jk = γ^s_kr γ^r_js − α_r γ^r_jk",
        relative(sp.ricci.max_abs_diff(&ricci_gamma), scale),
        tol,
    ));

    let (gsq, asq) = (sp.gamma_norm_sq(), sp.alpha_norm_sq());
    out.push(CheckRecord::new(
        "scalar_curvature_norms",
        "R = |γ|² − |α|²",
        relative((sp.scalar - (gsq - asq)).abs(), gsq.max(asq)),
        tol,
    ));

    out.push(CheckRecord::new(
        "grad_gamma_total_symmetry",
        "∇_i γ_jkl symmetric in i, j, k, l",
        relative(sp.grad_gamma.symmetry_defect(), sp.grad_gamma.max_abs()),
        tol,
    ));

    let neg_alpha = sp.alpha.scale(-1.0);
    out.push(CheckRecord::new(
        "dual_alpha",
        "α′ = −α",
        relative(sp.alpha_dual.max_abs_diff(&neg_alpha), sp.alpha.max_abs()),
        tol,
    ));

    let predicted = sp
        .beta
        .sub(&sp.grad_alpha.scale(2.0))
        .expect("rank-2 shapes agree");
    let scale = sp.beta.max_abs().max(sp.grad_alpha.max_abs());
    out.push(CheckRecord::new(
        "dual_beta",
        "β′ = β − 2∇α",
        relative(sp.beta_dual.max_abs_diff(&predicted), scale),
        tol,
    ));

    // ∂_k g(∂_i, ∂_j) = g(D_k ∂_i, ∂_j) + g(∂_i, D′_k ∂_j)
    let mut worst: f64 = 0.0;
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let lhs = sp.metric_derivative.get(&[i, j, k]);
                let mut rhs = 0.0;
                for a in 0..n {
                    rhs += sp.flat_connection.get(&[a, k, i]) * m.g(a, j)
                        + m.g(i, a) * sp.dual_connection.get(&[a, k, j]);
                }
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    out.push(CheckRecord::new(
        "duality_pairing",
        "X g(Y,Z) = g(D_X Y, Z) + g(Y, D′_X Z)",
        relative(worst, sp.metric_derivative.max_abs()),
        tol,
    ));

    let tr = sp.beta_trace();
    let div = sp.alpha_sharp_divergence();
    out.push(CheckRecord::new(
        "koszul_trace_identity",
        "g^ij β_ij = div α♯ + |α|²",
        relative((tr - div - asq).abs(), tr.abs().max(asq)),
        tol,
    ));
    out
}

/// Curvature from the coordinate formula
/// `R^i_jkl = ∂_k Γ^i_lj − ∂_l Γ^i_kj + Γ^i_kr Γ^r_lj − Γ^i_lr Γ^r_kj`
/// with exact jet-derived `∂Γ`.
pub fn riemann_oracle(field: &PotentialField, x: &[f64]) -> Result<DenseTensor, StructureError> {
    let geo = LocalGeometry::new(field, x, STRUCTURE_ORDER)?;
    let n = geo.n;
    let c = |i: usize, j: usize, k: usize| geo.chris(i, j, k).value();
    Ok(DenseTensor::from_fn(n, &[Upper, Lower, Lower, Lower], |ix| {
        let (i, j, k, l) = (ix[0], ix[1], ix[2], ix[3]);
        let d = geo.chris(i, l, j).derivative_value(&[k]) - geo.chris(i, k, j).derivative_value(&[l]);
        let q: f64 = (0..n).map(|r| c(i, k, r) * c(r, l, j) - c(i, l, r) * c(r, k, j)).sum();
        d + q
    }))
}

/// Relative agreement between the γγ curvature formula and [`riemann_oracle`].
pub fn riemann_agreement(field: &PotentialField, sp: &StructurePoint, tol: f64) -> Result<CheckRecord, StructureError> {
    let oracle = riemann_oracle(field, &sp.point)?;
    let scale = oracle.max_abs().max(sp.riemann.max_abs());
    Ok(CheckRecord::new(
        "riemann_gamma_vs_christoffel",
        "R^i_jkl = γ^i_lr γ^r_jk − γ^i_kr γ^r_jl",
        relative(oracle.max_abs_diff(&sp.riemann), scale),
        tol,
    ))
}

/// `max |β(cφ) − β(φ)|`: scaling the metric by a constant leaves `β` fixed.
pub fn beta_scale_defect(field: &PotentialField, x: &[f64], c: f64) -> Result<f64, StructureError> {
    let base = structure_at(field, x)?;
    let scaled = structure_at(&field.scaled(c), x)?;
    Ok(base.beta.max_abs_diff(&scaled.beta))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Properness {
    pub max_gamma_norm: f64,
    pub proper: bool,
}

/// Threshold on `sup |γ|` above which the structure counts as proper (`D ≠ ∇`).
pub const PROPERNESS_THRESHOLD: f64 = 1e-8;

pub fn properness_indicator(field: &PotentialField, samples: &[Vec<f64>]) -> Result<Properness, StructureError> {
    if samples.is_empty() {
        return Err(StructureError::EmptySamples);
    }
    let mut sup: f64 = 0.0;
    for x in samples {
        let sp = structure_at(field, x)?;
        sup = sup.max(sp.gamma_norm_sq().sqrt());
    }
    Ok(Properness {
        max_gamma_norm: sup,
        proper: sup > PROPERNESS_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cone() -> PotentialField {
        PotentialField::builtin_family("log_cone", 2, None, None).unwrap()
    }

    #[test]
    fn quadratic_is_flat_and_non_proper() {
        let f = PotentialField::builtin_family("quadratic", 3, None, None).unwrap();
        let sp = structure_at(&f, &[0.3, -1.0, 2.0]).unwrap();
        for t in [
            &sp.gamma_lower,
            &sp.alpha,
            &sp.beta,
            &sp.riemann,
            &sp.dual_connection,
            &sp.grad_gamma,
        ] {
            assert_eq!(t.max_abs(), 0.0);
        }
        assert_eq!(sp.scalar, 0.0);
        for rec in verify_identities(&sp, IDENTITY_TOLERANCE) {
            assert_eq!(rec.residual, 0.0, "{}", rec.name);
        }
    }

    #[test]
    fn log_cone_anchor_point() {
        // Values at (0, 1), cross-checked against a symbolic oracle.
        let sp = structure_at(&cone(), &[0.0, 1.0]).unwrap();
        assert_eq!(sp.metric.g.data(), &[2.0, 0.0, 0.0, 2.0]);
        let g = &sp.gamma_lower;
        for (idx, want) in [
            ([0, 0, 1], -2.0),
            ([0, 1, 0], -2.0),
            ([1, 0, 0], -2.0),
            ([1, 1, 1], -2.0),
            ([0, 0, 0], 0.0),
            ([0, 1, 1], 0.0),
        ] {
            assert!((g.get(&idx) - want).abs() < 1e-12, "{idx:?}");
        }
        assert!(sp.alpha.max_abs_diff(&DenseTensor::from_data(2, &[Lower], vec![0.0, -2.0]).unwrap()) < 1e-12);
        let two_id = DenseTensor::from_data(2, &[Lower, Lower], vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        assert!(sp.beta.max_abs_diff(&two_id) < 1e-12);
        assert!(sp.beta_dual.max_abs_diff(&two_id) < 1e-12);
        assert!(sp.grad_alpha.max_abs() < 1e-12);
        assert!(sp.ricci.max_abs() < 1e-12);
        assert!(sp.scalar.abs() < 1e-12);
        assert!((sp.gamma_norm_sq() - 2.0).abs() < 1e-12);
        assert!((sp.alpha_norm_sq() - 2.0).abs() < 1e-12);
        for rec in verify_identities(&sp, IDENTITY_TOLERANCE) {
            assert!(rec.residual < 1e-10, "{}: {}", rec.name, rec.residual);
        }
    }

    #[test]
    fn riemann_oracle_on_flat_and_cone() {
        let q = PotentialField::builtin_family("quadratic", 2, None, None).unwrap();
        assert_eq!(riemann_oracle(&q, &[1.0, 2.0]).unwrap().max_abs(), 0.0);
        let sp = structure_at(&cone(), &[0.0, 1.0]).unwrap();
        let rec = riemann_agreement(&cone(), &sp, 1e-10).unwrap();
        assert!(rec.pass, "{rec:?}");
        let oracle = riemann_oracle(&cone(), &[0.0, 1.0]).unwrap();
        let ric = tensor::trace(&oracle, 0, 2, None).unwrap();
        assert!(ric.max_abs() < 1e-10);
    }

    #[test]
    fn properness() {
        let q = PotentialField::builtin_family("quadratic", 2, None, None).unwrap();
        let p = properness_indicator(&q, &[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(p, Properness { max_gamma_norm: 0.0, proper: false });
        let p = properness_indicator(&cone(), &[vec![0.0, 1.0], vec![0.01, 1.0]]).unwrap();
        assert!(p.proper && p.max_gamma_norm >= 2f64.sqrt() - 1e-12);
        let t0 = PotentialField::builtin_family("torus_perturbed", 2, Some(0.0), Some(vec![1.0, 1.0])).unwrap();
        assert!(!properness_indicator(&t0, &[vec![0.5, 0.5]]).unwrap().proper);
        assert_eq!(properness_indicator(&q, &[]), Err(StructureError::EmptySamples));
    }

    #[test]
    fn errors_surface() {
        let saddle = PotentialField::parse("x1^2 - x2^2", 2).unwrap();
        assert!(matches!(
            structure_at(&saddle, &[0.0, 0.0]),
            Err(StructureError::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            structure_at(&cone(), &[1.0, 0.5]),
            Err(StructureError::Field(FieldError::Domain { .. }))
        ));
    }
}

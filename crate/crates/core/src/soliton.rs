//! Hesse soliton and Einstein residuals, the dual-space soliton, and the
//! steady/Killing and trace checks.
//!
//! Vector fields enter through their value and first derivatives at a point
//! ([`VectorJet`]); every such jet here is read off an exact Taylor series.

use serde::Serialize;
use thiserror::Error;

use crate::check::{relative, CheckRecord};
use crate::dsl::{parse_potential, DomainError, Expression, ParseError, PotentialField};
use crate::structure::geometry::{idx2, LocalGeometry};
use crate::structure::{structure_at, StructureError, StructurePoint};
use crate::tensor::{self, DenseTensor, Lower};

/// Certification threshold for soliton and Killing checks.
pub const SOLITON_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolitonError {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("cannot evaluate at {point:?}: {source}")]
    Domain { point: Vec<f64>, source: DomainError },
    #[error("spec has {got} components, field has dimension {want}")]
    Dimension { got: usize, want: usize },
    #[error("sample set is empty")]
    EmptySamples,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Expanding,
    Steady,
    Shrinking,
}

impl Classification {
    pub fn of(lambda: f64) -> Self {
        if lambda > 0.0 {
            Classification::Expanding
        } else if lambda < 0.0 {
            Classification::Shrinking
        } else {
            Classification::Steady
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolitonKind {
    /// `β − ½ 𝓛_X g = λ g`, with `X` given by its upper components.
    Vector(Vec<Expression>),
    /// `β − ∇∇f = λ g`.
    Gradient(Expression),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolitonSpec {
    pub kind: SolitonKind,
    pub lambda: f64,
}

impl SolitonSpec {
    pub fn vector(components: Vec<Expression>, lambda: f64) -> Self {
        SolitonSpec { kind: SolitonKind::Vector(components), lambda }
    }

    pub fn gradient(f: Expression, lambda: f64) -> Self {
        SolitonSpec { kind: SolitonKind::Gradient(f), lambda }
    }

    /// `X = 0`.
    pub fn zero(dim: usize, lambda: f64) -> Self {
        let zero = parse_potential("0", dim).expect("constant parses");
        SolitonSpec::vector(vec![zero; dim], lambda)
    }

    pub fn parse_vector(components: &[&str], dim: usize, lambda: f64) -> Result<Self, SolitonError> {
        let exprs = components
            .iter()
            .map(|c| parse_potential(c, dim))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SolitonSpec::vector(exprs, lambda))
    }

    pub fn parse_gradient(f: &str, dim: usize, lambda: f64) -> Result<Self, SolitonError> {
        Ok(SolitonSpec::gradient(parse_potential(f, dim)?, lambda))
    }

    pub fn classification(&self) -> Classification {
        Classification::of(self.lambda)
    }

    fn check_dim(&self, n: usize) -> Result<(), SolitonError> {
        let got = match &self.kind {
            SolitonKind::Vector(xs) => {
                if xs.len() != n {
                    return Err(SolitonError::Dimension { got: xs.len(), want: n });
                }
                xs.iter().map(Expression::dim).max().unwrap_or(n)
            }
            SolitonKind::Gradient(f) => f.dim(),
        };
        if got != n {
            return Err(SolitonError::Dimension { got, want: n });
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            SolitonKind::Vector(xs) => {
                let parts: Vec<String> = xs.iter().map(|e| e.to_string()).collect();
                format!("X = ({})", parts.join(", "))
            }
            SolitonKind::Gradient(f) => format!("f = {f}"),
        }
    }
}

/// Value `X^k` and Jacobian `∂_i X^k` (stored at `i * n + k`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorJet {
    pub value: Vec<f64>,
    pub jacobian: Vec<f64>,
}

impl VectorJet {
    pub fn zero(n: usize) -> Self {
        VectorJet { value: vec![0.0; n], jacobian: vec![0.0; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.value.len()
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &VectorJet, b: f64) -> VectorJet {
        let mix = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| a * p + b * q).collect();
        VectorJet {
            value: mix(&self.value, &other.value),
            jacobian: mix(&self.jacobian, &other.jacobian),
        }
    }
}

/// Anything that can report its first jet at a point.
pub trait VectorField {
    fn jet1(&self, x: &[f64]) -> Result<VectorJet, SolitonError>;
}

/// Components written as expressions in the chart coordinates.
pub struct ExpressionField<'a>(pub &'a [Expression]);

impl VectorField for ExpressionField<'_> {
    fn jet1(&self, x: &[f64]) -> Result<VectorJet, SolitonError> {
        let n = self.0.len();
        let mut out = VectorJet::zero(n);
        for (k, e) in self.0.iter().enumerate() {
            let s = e.series_at(x, 1).map_err(|source| SolitonError::Domain { point: x.to_vec(), source })?;
            out.value[k] = s.value();
            for i in 0..n {
                out.jacobian[i * n + k] = s.derivative_value(&[i]);
            }
        }
        Ok(out)
    }
}

/// `grad f = g^{-1} df` for the metric of `field`.
pub struct GradientField<'a> {
    pub field: &'a PotentialField,
    pub f: &'a Expression,
}

impl VectorField for GradientField<'_> {
    fn jet1(&self, x: &[f64]) -> Result<VectorJet, SolitonError> {
        let geo = LocalGeometry::new(self.field, x, 3)?;
        let n = geo.n;
        let fs = self.f.series_at(x, 2).map_err(|source| SolitonError::Domain { point: x.to_vec(), source })?;
        let df: Vec<_> = (0..n).map(|l| fs.derivative(l)).collect();
        let mut out = VectorJet::zero(n);
        for k in 0..n {
            let mut s = &geo.g_inv[idx2(n, k, 0)] * &df[0];
            for l in 1..n {
                s = &s + &(&geo.g_inv[idx2(n, k, l)] * &df[l]);
            }
            out.value[k] = s.value();
            for i in 0..n {
                out.jacobian[i * n + k] = s.derivative_value(&[i]);
            }
        }
        Ok(out)
    }
}

/// `α♯` of a potential, differentiated through its jet.
pub struct AlphaSharpField<'a>(pub &'a PotentialField);

impl VectorField for AlphaSharpField<'_> {
    fn jet1(&self, x: &[f64]) -> Result<VectorJet, SolitonError> {
        Ok(alpha_sharp_jet(&structure_at(self.0, x)?))
    }
}

fn alpha_sharp_jet(sp: &StructurePoint) -> VectorJet {
    VectorJet {
        value: sp.alpha_sharp.data().to_vec(),
        jacobian: sp.alpha_sharp_jacobian.data().to_vec(),
    }
}

/// `(𝓛_X g)_ij = ∇_i X_j + ∇_j X_i`.
pub fn lie_derivative_metric(sp: &StructurePoint, x: &VectorJet) -> DenseTensor {
    let n = sp.dim();
    let m = &sp.metric;
    // ∇_i X^k = ∂_i X^k + Γ^k_ir X^r
    let cov = |i: usize, k: usize| {
        x.jacobian[i * n + k] + (0..n).map(|r| sp.gamma_mixed.get(&[k, i, r]) * x.value[r]).sum::<f64>()
    };
    let lowered = |i: usize, j: usize| (0..n).map(|k| m.g(j, k) * cov(i, k)).sum::<f64>();
    DenseTensor::from_fn(n, &[Lower, Lower], |ix| lowered(ix[0], ix[1]) + lowered(ix[1], ix[0]))
}

/// Coordinate form `X^k ∂_k g_ij + g_kj ∂_i X^k + g_ik ∂_j X^k`.
pub fn lie_derivative_metric_direct(sp: &StructurePoint, x: &VectorJet) -> DenseTensor {
    let n = sp.dim();
    let m = &sp.metric;
    DenseTensor::from_fn(n, &[Lower, Lower], |ix| {
        let (i, j) = (ix[0], ix[1]);
        (0..n)
            .map(|k| {
                x.value[k] * sp.metric_derivative.get(&[i, j, k])
                    + m.g(k, j) * x.jacobian[i * n + k]
                    + m.g(i, k) * x.jacobian[j * n + k]
            })
            .sum()
    })
}

/// Value, gradient and Hessian of a scalar at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarJet2 {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

impl ScalarJet2 {
    pub fn of(f: &Expression, x: &[f64]) -> Result<Self, SolitonError> {
        let n = x.len();
        let s = f.series_at(x, 2).map_err(|source| SolitonError::Domain { point: x.to_vec(), source })?;
        let mut hessian = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                hessian[i * n + j] = s.derivative_value(&[i, j]);
            }
        }
        Ok(ScalarJet2 {
            value: s.value(),
            gradient: (0..n).map(|i| s.derivative_value(&[i])).collect(),
            hessian,
        })
    }

    /// `½ log det g` at the structure point: gradient `α`, Hessian `β`.
    pub fn log_volume_density(sp: &StructurePoint) -> Self {
        ScalarJet2 {
            value: sp.log_volume_density,
            gradient: sp.alpha.data().to_vec(),
            hessian: sp.beta.data().to_vec(),
        }
    }

    pub fn combine(&self, a: f64, other: &ScalarJet2, b: f64) -> Self {
        let mix = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| a * p + b * q).collect();
        ScalarJet2 {
            value: a * self.value + b * other.value,
            gradient: mix(&self.gradient, &other.gradient),
            hessian: mix(&self.hessian, &other.hessian),
        }
    }
}

/// `∇∇f = ∂_i∂_j f − Γ^k_ij ∂_k f`.
pub fn hessian_of_function(sp: &StructurePoint, f: &ScalarJet2) -> DenseTensor {
    let n = sp.dim();
    DenseTensor::from_fn(n, &[Lower, Lower], |ix| {
        let (i, j) = (ix[0], ix[1]);
        f.hessian[i * n + j] - (0..n).map(|k| sp.gamma_mixed.get(&[k, i, j]) * f.gradient[k]).sum::<f64>()
    })
}

fn spec_vector_jet(sp: &StructurePoint, xs: &[Expression]) -> Result<VectorJet, SolitonError> {
    ExpressionField(xs).jet1(&sp.point)
}

/// `β − ½𝓛_X g − λg` (or `β − ∇∇f − λg`) and its max-abs entry.
pub fn soliton_residual(sp: &StructurePoint, spec: &SolitonSpec) -> Result<(DenseTensor, f64), SolitonError> {
    spec.check_dim(sp.dim())?;
    let drift = match &spec.kind {
        SolitonKind::Vector(xs) => lie_derivative_metric(sp, &spec_vector_jet(sp, xs)?).scale(0.5),
        SolitonKind::Gradient(f) => hessian_of_function(sp, &ScalarJet2::of(f, &sp.point)?),
    };
    Ok(residual_of(&sp.beta, &drift, sp, spec.lambda))
}

fn residual_of(beta: &DenseTensor, drift: &DenseTensor, sp: &StructurePoint, lambda: f64) -> (DenseTensor, f64) {
    let r = beta
        .sub(drift)
        .and_then(|t| t.sub(&sp.metric.g.scale(lambda)))
        .expect("rank-2 lower tensors");
    let worst = r.max_abs();
    (r, worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EinsteinFit {
    pub lambda: f64,
    pub max_residual: f64,
    /// Per-sample trace ratios `g^ij β_ij / n`.
    pub ratios: Vec<f64>,
}

/// Estimate `λ` in `β = λg` over samples.
///
/// Each sample contributes its trace ratio; the estimate is the midrange of
/// the ratios, and the residual is `max |β − λ̂ g|` over every sample.
pub fn einstein_fit(field: &PotentialField, samples: &[Vec<f64>]) -> Result<EinsteinFit, SolitonError> {
    if samples.is_empty() {
        return Err(SolitonError::EmptySamples);
    }
    let points = samples
        .iter()
        .map(|x| structure_at(field, x))
        .collect::<Result<Vec<_>, _>>()?;
    let ratios: Vec<f64> = points.iter().map(|sp| sp.beta_trace() / sp.dim() as f64).collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lambda = 0.5 * (lo + hi);
    let max_residual = points
        .iter()
        .map(|sp| sp.beta.max_abs_diff(&sp.metric.g.scale(lambda)))
        .fold(0.0, f64::max);
    Ok(EinsteinFit { lambda, max_residual, ratios })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualSoliton {
    /// Dual drift, written out (`X − 2α♯` or `f − 2F` with `F = ½ log det g`).
    pub dual: String,
    pub residual: DenseTensor,
    pub max_residual: f64,
}

/// The dual-space soliton `β′ − ½𝓛_{X − 2α♯} g − λg`.
///
/// Gradient specs use `f′ = f − 2F`, `F = ½ log det g`, so that `dF = α`.
pub fn dual_soliton(sp: &StructurePoint, spec: &SolitonSpec) -> Result<DualSoliton, SolitonError> {
    spec.check_dim(sp.dim())?;
    let (dual, drift) = match &spec.kind {
        SolitonKind::Vector(xs) => {
            let x = spec_vector_jet(sp, xs)?;
            let x_dual = x.combine(1.0, &alpha_sharp_jet(sp), -2.0);
            (
                format!("{} − 2α♯", spec.describe()),
                lie_derivative_metric(sp, &x_dual).scale(0.5),
            )
        }
        SolitonKind::Gradient(f) => {
            let fj = ScalarJet2::of(f, &sp.point)?;
            let f_dual = fj.combine(1.0, &ScalarJet2::log_volume_density(sp), -2.0);
            (format!("{} − log det g", spec.describe()), hessian_of_function(sp, &f_dual))
        }
    };
    let (residual, max_residual) = residual_of(&sp.beta_dual, &drift, sp, spec.lambda);
    Ok(DualSoliton { dual, residual, max_residual })
}

/// `𝓛_{α♯} g − 2∇α`, max-abs entry, relative to the larger side.
pub fn lie_alpha_identity(sp: &StructurePoint, tol: f64) -> CheckRecord {
    let lie = lie_derivative_metric(sp, &alpha_sharp_jet(sp));
    let two = sp.grad_alpha.scale(2.0);
    CheckRecord::new(
        "lie_alpha_sharp",
        "𝓛_{α♯} g = 2∇α",
        relative(lie.max_abs_diff(&two), lie.max_abs().max(two.max_abs())),
        tol,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadyReport {
    pub beta_norm: f64,
    pub lie_norm: f64,
    pub steady: bool,
}

/// Certifies a steady soliton when both `|β|` and `|𝓛_X g|` vanish.
pub fn steady_killing_check(sp: &StructurePoint, x: &VectorJet) -> SteadyReport {
    let lie = lie_derivative_metric(sp, x);
    let beta_norm = tensor::norm_sq(&sp.beta, &sp.metric).expect("rank 2").sqrt();
    let lie_norm = tensor::norm_sq(&lie, &sp.metric).expect("rank 2").sqrt();
    SteadyReport {
        beta_norm,
        lie_norm,
        steady: beta_norm < SOLITON_TOLERANCE && lie_norm < SOLITON_TOLERANCE,
    }
}

/// `div Y = ∂_i Y^i + Γ^i_ik Y^k`.
pub fn divergence(sp: &StructurePoint, y: &VectorJet) -> f64 {
    let n = sp.dim();
    (0..n)
        .map(|i| {
            y.jacobian[i * n + i]
                + (0..n).map(|k| sp.gamma_mixed.get(&[i, i, k]) * y.value[k]).sum::<f64>()
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceResiduals {
    /// `g^ij β_ij − div α♯ − |α|²`.
    pub koszul: f64,
    /// `g^ij β_ij − div X − nλ`, when a spec is supplied.
    pub soliton: Option<f64>,
}

pub fn trace_identity_residual(
    sp: &StructurePoint,
    spec: Option<&SolitonSpec>,
) -> Result<TraceResiduals, SolitonError> {
    let tr = sp.beta_trace();
    let koszul = tr - sp.alpha_sharp_divergence() - sp.alpha_norm_sq();
    let soliton = match spec {
        None => None,
        Some(spec) => {
            spec.check_dim(sp.dim())?;
            let div = match &spec.kind {
                SolitonKind::Vector(xs) => divergence(sp, &spec_vector_jet(sp, xs)?),
                SolitonKind::Gradient(f) => {
                    let h = hessian_of_function(sp, &ScalarJet2::of(f, &sp.point)?);
                    tensor::trace(&h, 0, 1, Some(&sp.metric))?.data()[0]
                }
            };
            Some(tr - div - sp.dim() as f64 * spec.lambda)
        }
    };
    Ok(TraceResiduals { koszul, soliton })
}

impl From<crate::tensor::TensorError> for SolitonError {
    fn from(e: crate::tensor::TensorError) -> Self {
        SolitonError::Structure(StructureError::Tensor(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(n: usize) -> PotentialField {
        PotentialField::builtin_family("quadratic", n, None, None).unwrap()
    }

    fn cone(n: usize) -> PotentialField {
        PotentialField::builtin_family("log_cone", n, None, None).unwrap()
    }

    fn jet(spec: &[&str], n: usize, x: &[f64]) -> VectorJet {
        let exprs: Vec<_> = spec.iter().map(|s| parse_potential(s, n).unwrap()).collect();
        ExpressionField(&exprs).jet1(x).unwrap()
    }

    #[test]
    fn lie_derivative_examples() {
        let sp = structure_at(&quad(2), &[0.3, -0.7]).unwrap();
        assert_eq!(lie_derivative_metric(&sp, &VectorJet::zero(2)).max_abs(), 0.0);
        let pos = lie_derivative_metric(&sp, &jet(&["x1", "x2"], 2, &sp.point));
        assert_eq!(pos.data(), &[2.0, 0.0, 0.0, 2.0]);
        let rot = lie_derivative_metric(&sp, &jet(&["-x2", "x1"], 2, &sp.point));
        assert_eq!(rot.max_abs(), 0.0);
    }

    #[test]
    fn covariant_and_direct_lie_forms_agree() {
        let f = PotentialField::parse("(x1^2 + x2^2)/2 + 0.01*(x1^4 + x1^2*x2^2)", 2).unwrap();
        let sp = structure_at(&f, &[0.2, 0.1]).unwrap();
        let x = jet(&["sin(x1)*x2", "x1^2 - 3*x2"], 2, &sp.point);
        let a = lie_derivative_metric(&sp, &x);
        let b = lie_derivative_metric_direct(&sp, &x);
        assert!(a.max_abs_diff(&b) < 1e-13);
        assert!(a.symmetry_defect() < 1e-15);
    }

    #[test]
    fn hessian_of_function_examples() {
        let sp = structure_at(&quad(2), &[1.0, 2.0]).unwrap();
        let c = ScalarJet2::of(&parse_potential("3", 2).unwrap(), &sp.point).unwrap();
        assert_eq!(hessian_of_function(&sp, &c).max_abs(), 0.0);
        let half = ScalarJet2::of(&parse_potential("(x1^2+x2^2)/2", 2).unwrap(), &sp.point).unwrap();
        assert_eq!(hessian_of_function(&sp, &half).data(), &[1.0, 0.0, 0.0, 1.0]);
        // Oracle: ∂∂φ − Γ^k ∂_kφ at (0,1) has vanishing (1,1) entry.
        let sp = structure_at(&cone(2), &[0.0, 1.0]).unwrap();
        let phi = ScalarJet2::of(&parse_potential("-log(x2^2 - x1^2)", 2).unwrap(), &sp.point).unwrap();
        assert!(hessian_of_function(&sp, &phi).get(&[0, 0]).abs() < 1e-12);
    }

    #[test]
    fn soliton_residual_examples() {
        let sp = structure_at(&cone(2), &[0.0, 1.0]).unwrap();
        let (_, r) = soliton_residual(&sp, &SolitonSpec::zero(2, 1.0)).unwrap();
        assert!(r < 1e-12);
        let sp = structure_at(&quad(2), &[0.5, 0.5]).unwrap();
        assert_eq!(soliton_residual(&sp, &SolitonSpec::zero(2, 0.0)).unwrap().1, 0.0);
        let (t, r) = soliton_residual(&sp, &SolitonSpec::zero(2, 1.0)).unwrap();
        assert_eq!(t.data(), &[-1.0, 0.0, 0.0, -1.0]);
        assert_eq!(r, 1.0);
        assert!(matches!(
            soliton_residual(&sp, &SolitonSpec::zero(3, 0.0)),
            Err(SolitonError::Dimension { .. })
        ));
    }

    #[test]
    fn gradient_form_matches_raised_vector_form() {
        let f = PotentialField::builtin_family("torus_perturbed", 2, Some(0.05), Some(vec![1.0, 1.0])).unwrap();
        let pot = parse_potential("x1^2*x2 + cos(x2)", 2).unwrap();
        let sp = structure_at(&f, &[0.4, 1.1]).unwrap();
        let (tg, _) = soliton_residual(&sp, &SolitonSpec::gradient(pot.clone(), 0.3)).unwrap();
        let grad = GradientField { field: &f, f: &pot }.jet1(&sp.point).unwrap();
        let lie = lie_derivative_metric(&sp, &grad).scale(0.5);
        let (tv, _) = residual_of(&sp.beta, &lie, &sp, 0.3);
        assert!(tg.max_abs_diff(&tv) < 1e-10);
    }

    #[test]
    fn einstein_fit_examples() {
        let samples: Vec<Vec<f64>> = (0..10).map(|k| vec![0.05 * k as f64, 1.0 + 0.1 * k as f64]).collect();
        let fit = einstein_fit(&cone(2), &samples).unwrap();
        assert!((fit.lambda - 1.0).abs() < 1e-9 && fit.max_residual < 1e-9, "{fit:?}");
        let fit = einstein_fit(&quad(2), &samples).unwrap();
        assert_eq!((fit.lambda, fit.max_residual), (0.0, 0.0));
        assert_eq!(einstein_fit(&quad(2), &[]), Err(SolitonError::EmptySamples));
    }

    #[test]
    fn dual_soliton_on_cone() {
        let sp = structure_at(&cone(2), &[0.2, 1.1]).unwrap();
        let d = dual_soliton(&sp, &SolitonSpec::zero(2, 1.0)).unwrap();
        assert!(d.max_residual < 1e-10, "{d:?}");
        let d = dual_soliton(&sp, &SolitonSpec::parse_gradient("0", 2, 1.0).unwrap()).unwrap();
        assert!(d.max_residual < 1e-10, "{d:?}");
        assert!(lie_alpha_identity(&sp, 1e-8).pass);
    }

    #[test]
    fn steady_and_trace_examples() {
        let sp = structure_at(&quad(2), &[0.1, 0.2]).unwrap();
        let rot = steady_killing_check(&sp, &jet(&["-x2", "x1"], 2, &sp.point));
        assert!(rot.steady);
        let pos = steady_killing_check(&sp, &jet(&["x1", "x2"], 2, &sp.point));
        assert!(!pos.steady && (pos.lie_norm - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        let sp = structure_at(&cone(2), &[0.0, 1.0]).unwrap();
        assert!(!steady_killing_check(&sp, &VectorJet::zero(2)).steady);
        let t = trace_identity_residual(&sp, Some(&SolitonSpec::zero(2, 1.0))).unwrap();
        assert!(t.koszul.abs() < 1e-12 && t.soliton.unwrap().abs() < 1e-12);
    }

    #[test]
    fn classification_follows_sign() {
        assert_eq!(SolitonSpec::zero(1, 0.5).classification(), Classification::Expanding);
        assert_eq!(SolitonSpec::zero(1, 0.0).classification(), Classification::Steady);
        assert_eq!(SolitonSpec::zero(1, -2.0).classification(), Classification::Shrinking);
    }
}

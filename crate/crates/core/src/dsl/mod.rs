//! Potential functions: expression parsing, exact jets and built-in families.

mod expr;
mod parser;
pub mod series;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use expr::{BinOp, Expr, Expression, Func};
pub use parser::parse_potential;
pub use series::{Layout, Series};

/// Highest jet order any field supports. Fifth derivatives of the potential
/// feed the Laplacian of the scalar curvature.
pub const K_MAX: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("variable x{index} at byte {offset} is out of range for dimension {dim}")]
    VariableOutOfRange {
        offset: usize,
        index: usize,
        dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{what} (value {value})")]
pub struct DomainError {
    pub what: String,
    pub value: f64,
}

impl DomainError {
    pub fn new(what: impl Into<String>, value: f64) -> Self {
        DomainError {
            what: what.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("point {point:?} is outside the domain: {reason}")]
    Domain { point: Vec<f64>, reason: String },
    #[error("jet order {requested} exceeds the supported maximum {max}")]
    OrderTooHigh { requested: usize, max: usize },
    #[error("point has dimension {got}, field has dimension {want}")]
    Dimension { got: usize, want: usize },
    #[error("unknown potential family '{0}'")]
    UnknownFamily(String),
    #[error("invalid family parameters: {0}")]
    InvalidParams(String),
    #[error("Hessian is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
}

/// Raw partial derivatives `∂^m φ(x)` for every multi-index with `|m| ≤ order`.
///
/// Values are derivatives, not Taylor coefficients: the `m!` factor is
/// already applied.
#[derive(Clone, Debug)]
pub struct Jet {
    dim: usize,
    order: usize,
    layout: Arc<Layout>,
    raw: Vec<f64>,
}

impl Jet {
    pub fn from_series(s: &Series, dim: usize) -> Jet {
        let layout = s.layout().clone();
        let raw = s
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| c * layout.factorial_weight(i))
            .collect();
        Jet {
            dim,
            order: s.order(),
            layout,
            raw,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored coefficients (multi-indices with `|m| ≤ order`).
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn value(&self) -> f64 {
        self.raw[0]
    }

    /// Derivative along the listed axes (zero-based, any order of listing).
    pub fn derivative(&self, axes: &[usize]) -> f64 {
        assert!(axes.len() <= self.order, "jet order too low");
        let idx = self.layout.index_of_axes(axes).expect("axis in range");
        self.raw[idx]
    }

    /// Derivative for an explicit multi-index.
    pub fn by_multi_index(&self, m: &[u8]) -> Option<f64> {
        let idx = self.layout.index_of(m)?;
        self.raw.get(idx).copied()
    }

    /// `(multi-index, raw derivative)` pairs in graded order.
    pub fn entries(&self) -> impl Iterator<Item = (&[u8], f64)> + '_ {
        self.raw
            .iter()
            .enumerate()
            .map(|(i, v)| (self.layout.exponents(i), *v))
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.derivative(&[i])).collect()
    }

    /// Order-2 block. Symmetric bit-for-bit: each entry is read from the
    /// single stored value for its sorted multi-index.
    pub fn hessian(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.derivative(&[i, j])).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `½|x|²`
    Quadratic { n: usize },
    /// `-log(x_n² - Σ_{i<n} x_i²)` on the future light cone.
    LogCone { n: usize },
    /// `½|x|² + ε Π sin(k_i x_i)`
    TorusPerturbed {
        n: usize,
        epsilon: f64,
        frequencies: Vec<f64>,
    },
    /// `log(1 + Σ_{i<n} exp θ_i)`, the log-partition of an `n`-outcome
    /// categorical family in natural coordinates (dimension `n - 1`).
    MultinomialLogPartition { n: usize },
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::Quadratic { n } | Family::LogCone { n } | Family::TorusPerturbed { n, .. } => {
                *n
            }
            Family::MultinomialLogPartition { n } => n - 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Quadratic { .. } => "quadratic",
            Family::LogCone { .. } => "log_cone",
            Family::TorusPerturbed { .. } => "torus_perturbed",
            Family::MultinomialLogPartition { .. } => "multinomial_logpartition",
        }
    }
}

/// Largest |ε| keeping `½|x|² + ε Π sin(k_i x_i)` convex everywhere:
/// the perturbation Hessian has entries bounded by `|ε| k_i k_j`, so its
/// spectral norm is below `|ε| (Σ|k_i|)²`.
pub fn torus_epsilon_bound(frequencies: &[f64]) -> f64 {
    let s: f64 = frequencies.iter().map(|k| k.abs()).sum();
    if s == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (s * s)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Backend {
    Expression(Expression),
    Family(Family),
}

/// Chart-point validity test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Everywhere,
    /// `x_n > sqrt(Σ_{i<n} x_i²)`
    FutureCone,
}

impl Domain {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Everywhere => x.iter().all(|v| v.is_finite()),
            Domain::FutureCone => {
                let (last, rest) = match x.split_last() {
                    Some(p) => p,
                    None => return false,
                };
                let r2: f64 = rest.iter().map(|v| v * v).sum();
                *last > 0.0 && last * last > r2
            }
        }
    }
}

/// A smooth potential on an affine chart, evaluable to exact jets.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialField {
    dim: usize,
    backend: Backend,
    domain: Domain,
    scale: f64,
    id: String,
}

impl PotentialField {
    pub fn from_expression(expr: Expression) -> Self {
        let id = format!("expr:{expr}");
        PotentialField {
            dim: expr.dim(),
            backend: Backend::Expression(expr),
            domain: Domain::Everywhere,
            scale: 1.0,
            id,
        }
    }

    pub fn parse(source: &str, dim: usize) -> Result<Self, ParseError> {
        Ok(Self::from_expression(parse_potential(source, dim)?))
    }

    pub fn from_family(family: Family) -> Result<Self, FieldError> {
        let dim = family.dim();
        let domain = match &family {
            Family::Quadratic { n } | Family::LogCone { n } if *n == 0 => {
                return Err(FieldError::InvalidParams("dimension must be positive".into()))
            }
            Family::LogCone { .. } => Domain::FutureCone,
            Family::TorusPerturbed {
                n,
                epsilon,
                frequencies,
            } => {
                if *n == 0 || frequencies.len() != *n {
                    return Err(FieldError::InvalidParams(format!(
                        "torus_perturbed needs {n} frequencies, got {}",
                        frequencies.len()
                    )));
                }
                let bound = torus_epsilon_bound(frequencies);
                if !epsilon.is_finite() || epsilon.abs() >= bound {
                    return Err(FieldError::InvalidParams(format!(
                        "|epsilon| = {} must be below {bound} for positive definiteness",
                        epsilon.abs()
                    )));
                }
                Domain::Everywhere
            }
            Family::MultinomialLogPartition { n } => {
                if *n < 2 {
                    return Err(FieldError::InvalidParams(
                        "multinomial_logpartition needs at least 2 outcomes".into(),
                    ));
                }
                Domain::Everywhere
            }
            Family::Quadratic { .. } => Domain::Everywhere,
        };
        let id = match &family {
            Family::TorusPerturbed {
                n,
                epsilon,
                frequencies,
            } => format!("torus_perturbed(n={n},eps={epsilon},k={frequencies:?})"),
            other => format!("{}(n={})", other.name(), match other {
                Family::MultinomialLogPartition { n } => *n,
                _ => dim,
            }),
        };
        Ok(PotentialField {
            dim,
            backend: Backend::Family(family),
            domain,
            scale: 1.0,
            id,
        })
    }

    /// Build a family by name. `params` is interpreted per family:
    /// `n` for all, `epsilon` and `frequencies` for `torus_perturbed`.
    pub fn builtin_family(
        name: &str,
        n: usize,
        epsilon: Option<f64>,
        frequencies: Option<Vec<f64>>,
    ) -> Result<Self, FieldError> {
        let family = match name {
            "quadratic" => Family::Quadratic { n },
            "log_cone" => Family::LogCone { n },
            "torus_perturbed" => Family::TorusPerturbed {
                n,
                epsilon: epsilon.unwrap_or(0.0),
                frequencies: frequencies.unwrap_or_else(|| vec![1.0; n]),
            },
            "multinomial_logpartition" => Family::MultinomialLogPartition { n },
            other => return Err(FieldError::UnknownFamily(other.to_string())),
        };
        Self::from_family(family)
    }

    /// `c·φ`, which scales the metric by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut f = self.clone();
        f.scale *= c;
        f.id = format!("{}*{}", c, self.id);
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn max_order(&self) -> usize {
        K_MAX
    }

    pub fn family(&self) -> Option<&Family> {
        match &self.backend {
            Backend::Family(f) => Some(f),
            Backend::Expression(_) => None,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.domain.contains(x)
    }

    /// Taylor expansion of the potential about `x` to `order`.
    pub fn series_at(&self, x: &[f64], order: usize) -> Result<Series, FieldError> {
        if order > K_MAX {
            return Err(FieldError::OrderTooHigh {
                requested: order,
                max: K_MAX,
            });
        }
        if x.len() != self.dim {
            return Err(FieldError::Dimension {
                got: x.len(),
                want: self.dim,
            });
        }
        if !self.domain.contains(x) {
            return Err(FieldError::Domain {
                point: x.to_vec(),
                reason: format!("not in {:?}", self.domain),
            });
        }
        let domain_err = |e: DomainError| FieldError::Domain {
            point: x.to_vec(),
            reason: e.to_string(),
        };
        let s = match &self.backend {
            Backend::Expression(e) => e.series_at(x, order).map_err(domain_err)?,
            Backend::Family(f) => family_series(f, x, order).map_err(domain_err)?,
        };
        Ok(if self.scale == 1.0 {
            s
        } else {
            s.scale(self.scale)
        })
    }

    pub fn eval_jet(&self, x: &[f64], order: usize) -> Result<Jet, FieldError> {
        Ok(Jet::from_series(&self.series_at(x, order)?, self.dim))
    }

    /// Lazy positive-definiteness test: smallest Hessian eigenvalue must
    /// exceed `1e-12 · trace`.
    pub fn check_positive_definite(&self, x: &[f64]) -> Result<(), FieldError> {
        let h = self.eval_jet(x, 2)?.hessian();
        let n = self.dim;
        let flat: Vec<f64> = h.iter().flatten().copied().collect();
        let trace: f64 = (0..n).map(|i| flat[i * n + i]).sum();
        let eig = crate::tensor::symmetric_eigenvalues(&flat, n);
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if trace > 0.0 && min > 1e-12 * trace {
            Ok(())
        } else {
            Err(FieldError::NotPositiveDefinite { point: x.to_vec() })
        }
    }
}

impl fmt::Display for PotentialField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

fn family_series(family: &Family, x: &[f64], order: usize) -> Result<Series, DomainError> {
    let n = x.len();
    let layout = Layout::shared(n, order.max(1));
    let vars: Vec<Series> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| Series::variable(&layout, order, i, v))
        .collect();
    let half_norm = || {
        let sq = vars.iter().map(|v| v * v).reduce(|a, b| a + b).expect("n ≥ 1");
        sq.scale(0.5)
    };
    match family {
        Family::Quadratic { .. } => Ok(half_norm()),
        Family::LogCone { .. } => {
            let (last, rest) = vars.split_last().expect("n ≥ 1");
            let mut u = last * last;
            for v in rest {
                u = &u - &(v * v);
            }
            if u.value() <= 0.0 {
                return Err(DomainError::new("outside the cone", u.value()));
            }
            Ok(-&u.ln())
        }
        Family::TorusPerturbed {
            epsilon,
            frequencies,
            ..
        } => {
            let mut s = half_norm();
            if *epsilon != 0.0 {
                let bump = sine_product_series(&layout, order, x, frequencies);
                s = &s + &bump.scale(*epsilon);
            }
            Ok(s)
        }
        Family::MultinomialLogPartition { .. } => {
            let mut z = Series::constant(&layout, order, 1.0);
            for v in &vars {
                z = &z + &v.exp();
            }
            Ok(z.ln())
        }
    }
}

/// Closed form: `∂^m Π sin(k_i x_i) = Π k_i^{m_i} sin(k_i x_i + m_i π/2)`.
fn sine_product_series(layout: &Arc<Layout>, order: usize, x: &[f64], k: &[f64]) -> Series {
    let count = layout.count(order);
    let coeffs = (0..count)
        .map(|idx| {
            let m = layout.exponents(idx);
            let raw: f64 = m
                .iter()
                .zip(x.iter().zip(k))
                .map(|(&mi, (&xi, &ki))| {
                    let phase = ki * xi + mi as f64 * std::f64::consts::FRAC_PI_2;
                    ki.powi(mi as i32) * phase.sin()
                })
                .product();
            raw / layout.factorial_weight(idx)
        })
        .collect();
    Series::from_coeffs(layout, order, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_jet() {
        let f = PotentialField::parse("x1^2/2 + x2^2/2", 2).unwrap();
        let j = f.eval_jet(&[3.0, -1.0], 2).unwrap();
        assert_eq!(j.value(), 5.0);
        assert_eq!(j.gradient(), vec![3.0, -1.0]);
        assert_eq!(j.hessian(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn order_zero_is_the_value() {
        let f = PotentialField::parse("exp(x1)*cos(x2) + x1^3", 2).unwrap();
        let j = f.eval_jet(&[0.4, 0.9], 0).unwrap();
        assert_eq!(j.len(), 1);
        let want = 0.4f64.exp() * 0.9f64.cos() + 0.4f64.powi(3);
        assert!((j.value() - want).abs() < 1e-15);
    }

    #[test]
    fn log_cone_expression_and_family_agree() {
        // Hand differentiation of -log(x2² - x1²) at (0, 1):
        // value 0, gradient (0, -2), Hessian diag(2, 2).
        let parsed = PotentialField::parse("-log(x2^2 - x1^2)", 2).unwrap();
        let fam = PotentialField::builtin_family("log_cone", 2, None, None).unwrap();
        for f in [&parsed, &fam] {
            let j = f.eval_jet(&[0.0, 1.0], 2).unwrap();
            assert!(j.value().abs() < 1e-15);
            assert_eq!(j.gradient(), vec![0.0, -2.0]);
            assert_eq!(j.hessian(), vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        }
        let a = parsed.eval_jet(&[0.3, 1.7], 5).unwrap();
        let b = fam.eval_jet(&[0.3, 1.7], 5).unwrap();
        for ((_, x), (_, y)) in a.entries().zip(b.entries()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn domain_violations() {
        let f = PotentialField::parse("-log(x2^2 - x1^2)", 2).unwrap();
        assert!(matches!(
            f.eval_jet(&[2.0, 1.0], 2),
            Err(FieldError::Domain { .. })
        ));
        let cone = PotentialField::builtin_family("log_cone", 2, None, None).unwrap();
        assert!(matches!(
            cone.eval_jet(&[0.0, -1.0], 2),
            Err(FieldError::Domain { .. })
        ));
        assert!(matches!(
            f.eval_jet(&[0.0, 1.0], 6),
            Err(FieldError::OrderTooHigh { requested: 6, max: 5 })
        ));
        let p = PotentialField::parse("x1^0.5", 1).unwrap();
        assert!(p.eval_jet(&[-1.0], 1).is_err());
        assert!(p.eval_jet(&[4.0], 1).is_ok());
        // integer exponents accept negative bases
        let q = PotentialField::parse("x1^3", 1).unwrap();
        assert_eq!(q.eval_jet(&[-2.0], 1).unwrap().gradient(), vec![12.0]);
    }

    #[test]
    fn quadratic_family_is_identity_everywhere() {
        let f = PotentialField::builtin_family("quadratic", 3, None, None).unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 5.0]] {
            let h = f.eval_jet(&x, 2).unwrap().hessian();
            for (i, row) in h.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert_eq!(*v, if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn log_partition_hessian_at_origin() {
        // diag(p) - p pᵀ at p = (1/3, 1/3)
        let f = PotentialField::builtin_family("multinomial_logpartition", 3, None, None).unwrap();
        assert_eq!(f.dim(), 2);
        let h = f.eval_jet(&[0.0, 0.0], 2).unwrap().hessian();
        let want = [[2.0 / 9.0, -1.0 / 9.0], [-1.0 / 9.0, 2.0 / 9.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn family_errors() {
        assert!(matches!(
            PotentialField::builtin_family("saddle", 2, None, None),
            Err(FieldError::UnknownFamily(_))
        ));
        assert!(matches!(
            PotentialField::builtin_family("torus_perturbed", 2, Some(0.3), Some(vec![1.0, 1.0])),
            Err(FieldError::InvalidParams(_))
        ));
        assert!(
            PotentialField::builtin_family("torus_perturbed", 2, Some(0.2), Some(vec![1.0, 1.0]))
                .is_ok()
        );
    }

    #[test]
    fn torus_closed_form_matches_expression() {
        let fam = PotentialField::builtin_family(
            "torus_perturbed",
            2,
            Some(0.05),
            Some(vec![1.0, 2.0]),
        )
        .unwrap();
        let expr =
            PotentialField::parse("x1^2/2 + x2^2/2 + 0.05*sin(x1)*sin(2*x2)", 2).unwrap();
        let x = [0.7, -1.3];
        let a = fam.eval_jet(&x, 5).unwrap();
        let b = expr.eval_jet(&x, 5).unwrap();
        for ((m, u), (_, v)) in a.entries().zip(b.entries()) {
            assert!((u - v).abs() < 1e-13, "{m:?}: {u} vs {v}");
        }
    }

    #[test]
    fn positive_definiteness_is_checked_lazily() {
        let f = PotentialField::parse("x1^2 - x2^2", 2).unwrap();
        assert!(matches!(
            f.check_positive_definite(&[0.0, 0.0]),
            Err(FieldError::NotPositiveDefinite { .. })
        ));
        let g = PotentialField::parse("x1^4 + x2^2", 2).unwrap();
        assert!(g.check_positive_definite(&[1.0, 0.0]).is_ok());
        assert!(g.check_positive_definite(&[0.0, 0.0]).is_err());
    }
}

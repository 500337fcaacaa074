//! Fisher metric and `a`-connections on the finite probability simplex.
//!
//! The connection parameter is called `a` here; `α` stays reserved for the
//! first Koszul form.

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{Layout, PotentialField, Series};
use crate::structure::{structure_at, StructureError};
use crate::tensor::{symmetric_eigenvalues, DenseTensor, Lower, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InfoGeoError {
    #[error("parameter dimension is 0: a family needs at least two outcomes")]
    Degenerate,
    #[error("point {point:?} has {got} coordinates, family needs {want}")]
    Dimension { point: Vec<f64>, got: usize, want: usize },
    #[error("point {point:?} is on or outside the simplex boundary")]
    Boundary { point: Vec<f64> },
    #[error("certificate needs natural coordinates")]
    NeedsNatural,
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    /// `p_1, …, p_{n−1}`, with `p_n = 1 − Σ p_i`.
    Mean,
    /// `θ_1, …, θ_{n−1}`, with outcome `n` as the baseline.
    Natural,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SimplexFamily {
    pub outcomes: usize,
    pub coords: Coordinates,
}

/// `log p(ω)` for every outcome as second-order series in the parameters.
struct LogProbabilities {
    log_p: Vec<Series>,
}

impl SimplexFamily {
    pub fn new(outcomes: usize, coords: Coordinates) -> Result<Self, InfoGeoError> {
        if outcomes < 2 {
            return Err(InfoGeoError::Degenerate);
        }
        Ok(SimplexFamily { outcomes, coords })
    }

    pub fn dim(&self) -> usize {
        self.outcomes - 1
    }

    pub fn probabilities(&self, u: &[f64]) -> Result<Vec<f64>, InfoGeoError> {
        self.check_point(u)?;
        let p = match self.coords {
            Coordinates::Mean => {
                let mut p = u.to_vec();
                p.push(1.0 - u.iter().sum::<f64>());
                p
            }
            Coordinates::Natural => {
                let z = 1.0 + u.iter().map(|t| t.exp()).sum::<f64>();
                let mut p: Vec<f64> = u.iter().map(|t| t.exp() / z).collect();
                p.push(1.0 / z);
                p
            }
        };
        if p.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(InfoGeoError::Boundary { point: u.to_vec() });
        }
        Ok(p)
    }

    /// Mean coordinates `p_1, …, p_{n−1}` of a natural-coordinate point.
    pub fn to_mean(&self, theta: &[f64]) -> Result<Vec<f64>, InfoGeoError> {
        let mut p = SimplexFamily::new(self.outcomes, Coordinates::Natural)?.probabilities(theta)?;
        p.pop();
        Ok(p)
    }

    fn check_point(&self, u: &[f64]) -> Result<(), InfoGeoError> {
        if u.len() != self.dim() {
            return Err(InfoGeoError::Dimension {
                point: u.to_vec(),
                got: u.len(),
                want: self.dim(),
            });
        }
        Ok(())
    }

    fn log_probabilities(&self, u: &[f64]) -> Result<LogProbabilities, InfoGeoError> {
        self.probabilities(u)?;
        let m = self.dim();
        let layout = Layout::shared(m, 2);
        let vars: Vec<Series> = u.iter().enumerate().map(|(i, &v)| Series::variable(&layout, 2, i, v)).collect();
        let mut log_p = Vec::with_capacity(self.outcomes);
        match self.coords {
            Coordinates::Mean => {
                let mut rest = Series::constant(&layout, 2, 1.0);
                for v in &vars {
                    log_p.push(v.ln());
                    rest = &rest - v;
                }
                log_p.push(rest.ln());
            }
            Coordinates::Natural => {
                let mut z = Series::constant(&layout, 2, 1.0);
                for v in &vars {
                    z = &z + &v.exp();
                }
                let log_z = z.ln();
                for v in &vars {
                    log_p.push(v - &log_z);
                }
                log_p.push(-&log_z);
            }
        }
        Ok(LogProbabilities { log_p })
    }
}

/// Score vectors `∂_i log p(ω)` at the point and the metric as first-order
/// series (`g_ij = Σ p l_i l_j`).
struct FisherJet {
    p: Vec<f64>,
    scores: Vec<Vec<f64>>,
    metric: Vec<Series>,
}

fn fisher_jet(fam: &SimplexFamily, u: &[f64]) -> Result<FisherJet, InfoGeoError> {
    let m = fam.dim();
    let lp = fam.log_probabilities(u)?;
    let mut metric: Vec<Option<Series>> = vec![None; m * m];
    let mut scores = Vec::with_capacity(fam.outcomes);
    let mut p = Vec::with_capacity(fam.outcomes);
    for s in &lp.log_p {
        let prob = s.truncate(1).exp();
        let l: Vec<Series> = (0..m).map(|i| s.derivative(i)).collect();
        for i in 0..m {
            for j in 0..m {
                let term = &(&prob * &l[i]) * &l[j];
                let slot = &mut metric[i * m + j];
                *slot = Some(match slot.take() {
                    None => term,
                    Some(acc) => &acc + &term,
                });
            }
        }
        p.push(prob.value());
        scores.push(l.iter().map(Series::value).collect());
    }
    Ok(FisherJet {
        p,
        scores,
        metric: metric.into_iter().map(|s| s.expect("m ≥ 1")).collect(),
    })
}

/// `g^F_ij = Σ_ω p(ω) ∂_i log p(ω) ∂_j log p(ω)`.
pub fn fisher_metric(fam: &SimplexFamily, u: &[f64]) -> Result<DenseTensor, InfoGeoError> {
    let fj = fisher_jet(fam, u)?;
    let m = fam.dim();
    Ok(DenseTensor::from_fn(m, &[Lower, Lower], |ix| fj.metric[ix[0] * m + ix[1]].value()))
}

/// Lowered coefficients `Γ^{(a)}_{ij,k} = g(∇^{(a)}_{∂_i} ∂_j, ∂_k)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConnectionCoefficients {
    pub a: f64,
    pub coefficients: DenseTensor,
}

struct ConnectionParts {
    levi_civita: DenseTensor,
    skewness: DenseTensor,
    metric_derivative: DenseTensor,
}

fn connection_parts(fam: &SimplexFamily, u: &[f64]) -> Result<ConnectionParts, InfoGeoError> {
    let fj = fisher_jet(fam, u)?;
    let m = fam.dim();
    // ∂_k g_ij at [i, j, k]
    let metric_derivative = DenseTensor::from_fn(m, &[Lower, Lower, Lower], |ix| {
        fj.metric[ix[0] * m + ix[1]].derivative_value(&[ix[2]])
    });
    let dg = |i: usize, j: usize, k: usize| metric_derivative.get(&[i, j, k]);
    let levi_civita = DenseTensor::from_fn(m, &[Lower, Lower, Lower], |ix| {
        let (i, j, k) = (ix[0], ix[1], ix[2]);
        0.5 * (dg(j, k, i) + dg(i, k, j) - dg(i, j, k))
    });
    let skewness = DenseTensor::from_fn(m, &[Lower, Lower, Lower], |ix| {
        fj.p
            .iter()
            .zip(&fj.scores)
            .map(|(p, l)| p * l[ix[0]] * l[ix[1]] * l[ix[2]])
            .sum()
    });
    Ok(ConnectionParts { levi_civita, skewness, metric_derivative })
}

impl ConnectionParts {
    fn at(&self, a: f64) -> DenseTensor {
        self.levi_civita
            .sub(&self.skewness.scale(0.5 * a))
            .expect("rank-3 tensors")
    }
}

/// `Γ^{(a)}_{ij,k} = Γ^{LC}_{ij,k} − (a/2) T_ijk`, `T_ijk = Σ p l_i l_j l_k`.
pub fn alpha_connection(fam: &SimplexFamily, u: &[f64], a: f64) -> Result<ConnectionCoefficients, InfoGeoError> {
    Ok(ConnectionCoefficients {
        a,
        coefficients: connection_parts(fam, u)?.at(a),
    })
}

/// Max over coordinate triples of
/// `|∂_k g_ij − Γ^{(a)}_{ki,j} − Γ^{(−a)}_{kj,i}|`.
pub fn duality_pairing_check(fam: &SimplexFamily, u: &[f64], a: f64) -> Result<f64, InfoGeoError> {
    let parts = connection_parts(fam, u)?;
    let (plus, minus) = (parts.at(a), parts.at(-a));
    let m = fam.dim();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let lhs = parts.metric_derivative.get(&[i, j, k]);
                let rhs = plus.get(&[k, i, j]) + minus.get(&[k, j, i]);
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    Ok(worst)
}

/// `max |Γ^{(1)} − Γ^{LC}|` at a point, which is `max |T| / 2`.
pub fn properness_witness(fam: &SimplexFamily, u: &[f64]) -> Result<f64, InfoGeoError> {
    let parts = connection_parts(fam, u)?;
    Ok(parts.at(1.0).max_abs_diff(&parts.levi_civita))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HessianCertificate {
    pub outcomes: usize,
    pub samples: usize,
    /// `max |g^F − ∂∂ log(1 + Σ e^θ)|` over samples.
    pub potential_defect: f64,
    /// `max |Γ^{(1)}|` in natural coordinates.
    pub flatness_defect: f64,
    /// `max |Γ^{(1)} − Γ^{LC}|` in mean coordinates over the same samples.
    pub properness_witness: f64,
    pub min_eigenvalue: f64,
    pub certified: bool,
}

/// Tolerance of the certificate's potential and flatness checks.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-10;

/// Hessian-manifold certificate of the exponential family at natural
/// coordinate samples.
pub fn hessian_structure_certificate(
    fam: &SimplexFamily,
    samples: &[Vec<f64>],
) -> Result<HessianCertificate, InfoGeoError> {
    if fam.coords != Coordinates::Natural {
        return Err(InfoGeoError::NeedsNatural);
    }
    let potential = PotentialField::builtin_family("multinomial_logpartition", fam.outcomes, None, None)
        .map_err(StructureError::from)?;
    let mean = SimplexFamily::new(fam.outcomes, Coordinates::Mean)?;
    let (mut pot, mut flat, mut proper) = (0.0f64, 0.0f64, 0.0f64);
    let mut min_eig = f64::INFINITY;
    for theta in samples {
        let g = fisher_metric(fam, theta)?;
        let sp = structure_at(&potential, theta)?;
        pot = pot.max(g.max_abs_diff(&sp.metric.g));
        flat = flat.max(alpha_connection(fam, theta, 1.0)?.coefficients.max_abs());
        proper = proper.max(properness_witness(&mean, &fam.to_mean(theta)?)?);
        let eig = symmetric_eigenvalues(g.data(), fam.dim());
        min_eig = min_eig.min(eig[0]);
    }
    Ok(HessianCertificate {
        outcomes: fam.outcomes,
        samples: samples.len(),
        potential_defect: pot,
        flatness_defect: flat,
        properness_witness: proper,
        min_eigenvalue: min_eig,
        certified: !samples.is_empty()
            && pot < CERTIFICATE_TOLERANCE
            && flat < CERTIFICATE_TOLERANCE
            && min_eig > 0.0
            && proper > 0.0,
    })
}

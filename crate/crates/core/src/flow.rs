//! Hesse flow `∂_t g = 2β` on small lattices.
//!
//! Potential mode evolves `ψ` on a periodic torus with `g = I + D²ψ` and
//! `∂_t ψ = log det(I + D²ψ)`. Metric mode evolves the components of `g`
//! directly with `∂_t g_ij = ∂_i∂_j log det g`, either periodically or on a
//! box whose two outer node layers follow a prescribed exact solution.
//!
//! All spatial derivatives are 4th-order central differences; mixed second
//! derivatives nest two first-derivative stencils.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{FieldError, PotentialField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("metric lost positive definiteness at node {node:?}, t = {t}")]
    NotPositiveDefinite { node: Vec<usize>, t: f64 },
    #[error("operation needs a periodic lattice")]
    NotPeriodic,
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("unsupported lattice: {0}")]
    Unsupported(String),
    #[error("lattices differ in shape")]
    ShapeMismatch,
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Potential,
    Metric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    Rk4,
}

/// Exact metric components `g(x, t)` for boundary nodes.
pub type BoundaryFn = Arc<dyn Fn(&[f64], f64) -> Result<Vec<f64>, FlowError> + Send + Sync>;

#[derive(Clone)]
pub enum Boundary {
    Periodic,
    Prescribed(BoundaryFn),
    /// `g(x, t) = (1 + 2λt) g(x, 0)`, the flow of an Einstein metric with
    /// `β = λg`; the initial node values are captured when the grid is built.
    EinsteinScaling { lambda: f64, initial: Option<Arc<Vec<f64>>> },
}

impl fmt::Debug for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => write!(f, "Periodic"),
            Boundary::Prescribed(_) => write!(f, "Prescribed(..)"),
            Boundary::EinsteinScaling { lambda, .. } => write!(f, "EinsteinScaling({lambda})"),
        }
    }
}

impl Boundary {
    pub fn einstein(lambda: f64) -> Boundary {
        Boundary::EinsteinScaling { lambda, initial: None }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Boundary::Periodic)
    }
}

/// Stencil half-width; prescribed lattices keep this many boundary layers.
pub const LAYER: usize = 2;

const D1: [(isize, f64); 4] = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
const D2: [(isize, f64); 5] = [
    (-2, -1.0 / 12.0),
    (-1, 16.0 / 12.0),
    (0, -30.0 / 12.0),
    (1, 16.0 / 12.0),
    (2, -1.0 / 12.0),
];

fn ncomp(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Packed index of `(i, j)` in the upper triangle, row by row.
fn comp(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * n - a * (a + 1) / 2 + b
}

fn pack(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut out = vec![0.0; ncomp(n)];
    for i in 0..n {
        for j in i..n {
            out[comp(n, i, j)] = m[i][j];
        }
    }
    out
}

/// Determinant and inverse of a packed symmetric 1×1 or 2×2 matrix.
fn det_inv(n: usize, g: &[f64]) -> (f64, Vec<f64>) {
    match n {
        1 => (g[0], vec![1.0 / g[0]]),
        _ => {
            let det = g[0] * g[2] - g[1] * g[1];
            (det, vec![g[2] / det, -g[1] / det, g[0] / det])
        }
    }
}

fn positive_definite(n: usize, g: &[f64]) -> bool {
    let (det, _) = det_inv(n, g);
    g[0] > 0.0 && det > 0.0 && det.is_finite()
}

fn eigen_range(n: usize, g: &[f64]) -> (f64, f64) {
    match n {
        1 => (g[0], g[0]),
        _ => {
            let mean = 0.5 * (g[0] + g[2]);
            let r = (0.25 * (g[0] - g[2]).powi(2) + g[1] * g[1]).sqrt();
            (mean - r, mean + r)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lattice {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    pub periodic: bool,
}

impl Lattice {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let mut rest = idx;
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = rest % self.shape[a];
            rest /= self.shape[a];
        }
        out
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + i as f64 * self.spacing[a])
            .collect()
    }

    fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    /// Whether full stencils fit along every axis.
    pub fn is_interior(&self, idx: usize) -> bool {
        self.periodic || (0..self.dim()).all(|a| self.along_axis_ok(idx, a))
    }

    fn along_axis_ok(&self, idx: usize, axis: usize) -> bool {
        if self.periodic {
            return true;
        }
        let i = (idx / self.stride(axis)) % self.shape[axis];
        i >= LAYER && i + LAYER < self.shape[axis]
    }

    fn stencil(&self, f: &[f64], idx: usize, axis: usize, weights: &[(isize, f64)]) -> f64 {
        let stride = self.stride(axis);
        let len = self.shape[axis] as isize;
        let i = ((idx / stride) % self.shape[axis]) as isize;
        let base = idx - i as usize * stride;
        weights
            .iter()
            .map(|&(o, w)| {
                let j = if self.periodic { (i + o).rem_euclid(len) } else { i + o };
                debug_assert!((0..len).contains(&j), "stencil inside lattice");
                w * f[base + j as usize * stride]
            })
            .sum()
    }

    /// `∂_a f` where the stencil fits, `NaN` elsewhere.
    pub fn d1(&self, f: &[f64], axis: usize) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                if self.along_axis_ok(idx, axis) {
                    self.stencil(f, idx, axis, &D1) / self.spacing[axis]
                } else {
                    f64::NAN
                }
            })
            .collect()
    }

    /// `∂_a∂_b f` where the stencils fit, `NaN` elsewhere.
    pub fn d2(&self, f: &[f64], a: usize, b: usize) -> Vec<f64> {
        if a == b {
            let h2 = self.spacing[a] * self.spacing[a];
            (0..self.len())
                .map(|idx| {
                    if self.along_axis_ok(idx, a) {
                        self.stencil(f, idx, a, &D2) / h2
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        } else {
            self.d1(&self.d1(f, b), a)
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }
}

/// Lattice state of the flow.
#[derive(Clone, Debug)]
pub struct MetricGrid {
    pub representation: Representation,
    pub lattice: Lattice,
    pub boundary: Boundary,
    /// `ψ` per node, or packed `g` components per node.
    pub state: Vec<f64>,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSnapshot {
    pub representation: Representation,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    pub periodic: bool,
    pub t: f64,
    pub state: Vec<f64>,
}

/// Per-node packed symmetric field; entries outside the interior are `NaN`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeField {
    pub ncomp: usize,
    pub data: Vec<f64>,
}

impl NodeField {
    pub fn at(&self, node: usize) -> &[f64] {
        &self.data[node * self.ncomp..(node + 1) * self.ncomp]
    }

    /// Largest `|Δ|` over nodes where both fields are defined.
    pub fn max_abs_diff(&self, other: &NodeField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().filter(|v| v.is_finite()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_dim(n: usize) -> Result<(), FlowError> {
    if n == 1 || n == 2 {
        Ok(())
    } else {
        Err(FlowError::Unsupported(format!("dimension {n}, grids support 1 or 2")))
    }
}

impl MetricGrid {
    /// Potential mode on `[0, 2π)^n` with `N` nodes per axis.
    pub fn torus_potential(n: usize, nodes: usize, mut psi0: impl FnMut(&[f64]) -> f64) -> Result<Self, FlowError> {
        check_dim(n)?;
        if nodes < 2 * LAYER + 1 {
            return Err(FlowError::Unsupported(format!("{nodes} nodes per axis")));
        }
        let lattice = Lattice {
            shape: vec![nodes; n],
            spacing: vec![2.0 * PI / nodes as f64; n],
            origin: vec![0.0; n],
            periodic: true,
        };
        let state = (0..lattice.len()).map(|i| psi0(&lattice.coords(i))).collect();
        let grid = MetricGrid {
            representation: Representation::Potential,
            lattice,
            boundary: Boundary::Periodic,
            state,
            t: 0.0,
        };
        grid.metric_components()?;
        Ok(grid)
    }

    /// Potential mode with `ψ = φ − ½|x|²` for a `2π`-periodic perturbation.
    pub fn torus_from_field(field: &PotentialField, nodes: usize) -> Result<Self, FlowError> {
        let n = field.dim();
        check_dim(n)?;
        let mut err = None;
        let grid = MetricGrid::torus_potential(n, nodes, |x| match field.eval_jet(x, 0) {
            Ok(j) => j.value() - 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        });
        if let Some(e) = err {
            return Err(e.into());
        }
        grid
    }

    /// Metric mode with `g = ∂∂φ` sampled at every node of a box.
    pub fn patch_from_field(
        field: &PotentialField,
        origin: &[f64],
        nodes: usize,
        h: f64,
        boundary: Boundary,
    ) -> Result<Self, FlowError> {
        let n = field.dim();
        check_dim(n)?;
        if origin.len() != n {
            return Err(FlowError::ShapeMismatch);
        }
        let periodic = boundary.is_periodic();
        if !periodic && nodes < 2 * LAYER + 1 {
            return Err(FlowError::Unsupported(format!("{nodes} nodes per axis")));
        }
        let lattice = Lattice {
            shape: vec![nodes; n],
            spacing: vec![h; n],
            origin: origin.to_vec(),
            periodic,
        };
        let mut state = Vec::with_capacity(lattice.len() * ncomp(n));
        for idx in 0..lattice.len() {
            state.extend(pack(&field.eval_jet(&lattice.coords(idx), 2)?.hessian()));
        }
        let boundary = match boundary {
            Boundary::EinsteinScaling { lambda, .. } => Boundary::EinsteinScaling {
                lambda,
                initial: Some(Arc::new(state.clone())),
            },
            other => other,
        };
        let grid = MetricGrid {
            representation: Representation::Metric,
            lattice,
            boundary,
            state,
            t: 0.0,
        };
        grid.check_metric(&grid.state)?;
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    /// Packed `g` at every node.
    pub fn metric_components(&self) -> Result<Vec<f64>, FlowError> {
        let g = match self.representation {
            Representation::Metric => self.state.clone(),
            Representation::Potential => potential_metric(&self.lattice, &self.state),
        };
        self.check_metric(&g)?;
        Ok(g)
    }

    fn check_metric(&self, g: &[f64]) -> Result<(), FlowError> {
        let n = self.dim();
        let k = ncomp(n);
        for idx in 0..self.lattice.len() {
            if !positive_definite(n, &g[idx * k..(idx + 1) * k]) {
                return Err(FlowError::NotPositiveDefinite {
                    node: self.lattice.multi_index(idx),
                    t: self.t,
                });
            }
        }
        Ok(())
    }

    /// The same metric held in metric mode.
    pub fn to_metric(&self) -> Result<MetricGrid, FlowError> {
        Ok(MetricGrid {
            representation: Representation::Metric,
            lattice: self.lattice.clone(),
            boundary: self.boundary.clone(),
            state: self.metric_components()?,
            t: self.t,
        })
    }

    /// `c·g` in metric mode. The boundary function is not rescaled.
    pub fn scaled(&self, c: f64) -> Result<MetricGrid, FlowError> {
        let mut m = self.to_metric()?;
        m.state.iter_mut().for_each(|v| *v *= c);
        Ok(m)
    }

    pub fn snapshot(&self) -> GridSnapshot {
        GridSnapshot {
            representation: self.representation,
            shape: self.lattice.shape.clone(),
            spacing: self.lattice.spacing.clone(),
            origin: self.lattice.origin.clone(),
            periodic: self.lattice.periodic,
            t: self.t,
            state: self.state.clone(),
        }
    }

    /// `dt` limit for explicit stepping: `0.25 h² / (n · max |g^ij|)`.
    pub fn stable_dt(&self) -> Result<f64, FlowError> {
        let n = self.dim();
        let k = ncomp(n);
        let g = self.metric_components()?;
        let mut worst: f64 = 0.0;
        for node in g.chunks(k) {
            let (_, inv) = det_inv(n, node);
            worst = inv.iter().fold(worst, |m, v| m.max(v.abs()));
        }
        let h = self.lattice.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(0.25 * h * h / (n as f64 * worst))
    }

    fn apply_boundary(&self, state: &mut [f64], t: f64) -> Result<(), FlowError> {
        let k = ncomp(self.dim());
        let interior = |idx| self.lattice.is_interior(idx);
        match &self.boundary {
            Boundary::Periodic => {}
            Boundary::Prescribed(exact) => {
                for idx in (0..self.lattice.len()).filter(|&i| !interior(i)) {
                    let v = exact(&self.lattice.coords(idx), t)?;
                    state[idx * k..(idx + 1) * k].copy_from_slice(&v);
                }
            }
            Boundary::EinsteinScaling { lambda, initial } => {
                let base = initial.as_ref().ok_or_else(|| {
                    FlowError::Unsupported("Einstein boundary without initial values".into())
                })?;
                let c = 1.0 + 2.0 * lambda * t;
                for idx in (0..self.lattice.len()).filter(|&i| !interior(i)) {
                    for j in idx * k..(idx + 1) * k {
                        state[j] = c * base[j];
                    }
                }
            }
        }
        Ok(())
    }

    fn rhs(&self, state: &[f64], t: f64) -> Result<Vec<f64>, FlowError> {
        let lat = &self.lattice;
        let n = self.dim();
        let k = ncomp(n);
        let probe = MetricGrid {
            representation: self.representation,
            lattice: lat.clone(),
            boundary: Boundary::Periodic,
            state: state.to_vec(),
            t,
        };
        let g = probe.metric_components()?;
        let log_det: Vec<f64> = g.chunks(k).map(|c| det_inv(n, c).0.ln()).collect();
        match self.representation {
            Representation::Potential => Ok(log_det),
            Representation::Metric => {
                let mut out = vec![0.0; state.len()];
                for i in 0..n {
                    for j in i..n {
                        let d = lat.d2(&log_det, i, j);
                        for idx in 0..lat.len() {
                            if lat.is_interior(idx) {
                                out[idx * k + comp(n, i, j)] = d[idx];
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

fn potential_metric(lat: &Lattice, psi: &[f64]) -> Vec<f64> {
    let n = lat.dim();
    let k = ncomp(n);
    let mut g = vec![0.0; lat.len() * k];
    for i in 0..n {
        for j in i..n {
            let d = lat.d2(psi, i, j);
            for idx in 0..lat.len() {
                g[idx * k + comp(n, i, j)] = d[idx] + if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    g
}

/// `β_ij = ∂_i∂_j log √det g` at every interior node.
pub fn beta_on_grid(grid: &MetricGrid) -> Result<NodeField, FlowError> {
    let lat = &grid.lattice;
    let n = grid.dim();
    let k = ncomp(n);
    let g = grid.metric_components()?;
    let log_sqrt: Vec<f64> = g.chunks(k).map(|c| 0.5 * det_inv(n, c).0.ln()).collect();
    let mut data = vec![f64::NAN; lat.len() * k];
    for i in 0..n {
        for j in i..n {
            let d = lat.d2(&log_sqrt, i, j);
            for idx in 0..lat.len() {
                if lat.is_interior(idx) {
                    data[idx * k + comp(n, i, j)] = d[idx];
                }
            }
        }
    }
    Ok(NodeField { ncomp: k, data })
}

/// Advance by `dt`, splitting into equal substeps no larger than
/// [`MetricGrid::stable_dt`]. Prescribed boundaries are reset to their exact
/// values at every stage time. The input grid is left untouched.
pub fn flow_step(grid: &MetricGrid, dt: f64, scheme: Scheme) -> Result<MetricGrid, FlowError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FlowError::InvalidTimeStep(dt));
    }
    let substeps = (dt / grid.stable_dt()?).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let mut cur = grid.clone();
    for s in 0..substeps {
        let t0 = grid.t + s as f64 * h;
        cur.state = single_step(&cur, t0, h, scheme)?;
        cur.t = if s + 1 == substeps { grid.t + dt } else { t0 + h };
    }
    Ok(cur)
}

fn single_step(grid: &MetricGrid, t0: f64, h: f64, scheme: Scheme) -> Result<Vec<f64>, FlowError> {
    let y = &grid.state;
    let stage = |k: &[f64], c: f64| -> Result<Vec<f64>, FlowError> {
        let mut s: Vec<f64> = y.iter().zip(k).map(|(a, b)| a + c * h * b).collect();
        grid.apply_boundary(&mut s, t0 + c * h)?;
        Ok(s)
    };
    let mut out = match scheme {
        Scheme::Euler => {
            let k1 = grid.rhs(y, t0)?;
            y.iter().zip(&k1).map(|(a, b)| a + h * b).collect::<Vec<_>>()
        }
        Scheme::Rk4 => {
            let k1 = grid.rhs(y, t0)?;
            let k2 = grid.rhs(&stage(&k1, 0.5)?, t0 + 0.5 * h)?;
            let k3 = grid.rhs(&stage(&k2, 0.5)?, t0 + 0.5 * h)?;
            let k4 = grid.rhs(&stage(&k3, 1.0)?, t0 + h)?;
            (0..y.len())
                .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    };
    grid.apply_boundary(&mut out, t0 + h)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorusIntegrals {
    /// `∫ g^ij β_ij dv`
    pub beta_trace: f64,
    /// `∫ |α|² dv`
    pub alpha_sq: f64,
    /// `∫ div α♯ dv`, with `div α♯ = ∂_i α^i + |α|²`.
    pub divergence: f64,
}

impl TorusIntegrals {
    /// `∫ g^ij β_ij dv − ∫ |α|² dv`.
    pub fn stokes_defect(&self) -> f64 {
        self.beta_trace - self.alpha_sq
    }
}

/// Periodic trapezoid integrals with volume element `√det g`.
pub fn torus_integrals(grid: &MetricGrid) -> Result<TorusIntegrals, FlowError> {
    let lat = &grid.lattice;
    if !lat.periodic {
        return Err(FlowError::NotPeriodic);
    }
    let n = grid.dim();
    let k = ncomp(n);
    let g = grid.metric_components()?;
    let beta = beta_on_grid(grid)?;
    let log_sqrt: Vec<f64> = g.chunks(k).map(|c| 0.5 * det_inv(n, c).0.ln()).collect();
    let alpha: Vec<Vec<f64>> = (0..n).map(|a| lat.d1(&log_sqrt, a)).collect();
    let inv: Vec<Vec<f64>> = g.chunks(k).map(|c| det_inv(n, c).1).collect();
    let sharp: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..lat.len())
                .map(|idx| (0..n).map(|j| inv[idx][comp(n, i, j)] * alpha[j][idx]).sum())
                .collect()
        })
        .collect();
    let div_sharp: Vec<Vec<f64>> = (0..n).map(|i| lat.d1(&sharp[i], i)).collect();
    let (mut tb, mut ta, mut td) = (0.0, 0.0, 0.0);
    for idx in 0..lat.len() {
        let vol = det_inv(n, &g[idx * k..(idx + 1) * k]).0.sqrt();
        let mut tr = 0.0;
        let mut asq = 0.0;
        let mut dv = 0.0;
        for i in 0..n {
            dv += div_sharp[i][idx];
            for j in 0..n {
                tr += inv[idx][comp(n, i, j)] * beta.at(idx)[comp(n, i, j)];
                asq += inv[idx][comp(n, i, j)] * alpha[i][idx] * alpha[j][idx];
            }
        }
        tb += tr * vol;
        ta += asq * vol;
        td += (dv + asq) * vol;
    }
    let cell = lat.cell_volume();
    Ok(TorusIntegrals {
        beta_trace: tb * cell,
        alpha_sq: ta * cell,
        divergence: td * cell,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SelfSimilarity {
    pub c_hat: f64,
    pub deviation: f64,
    pub self_similar: bool,
}

/// Least-squares `ĉ` in `g(t) ≈ ĉ g(0)` over all nodes and components.
pub fn self_similarity_diagnostic(grid: &MetricGrid, reference: &MetricGrid) -> Result<SelfSimilarity, FlowError> {
    if grid.lattice.shape != reference.lattice.shape {
        return Err(FlowError::ShapeMismatch);
    }
    let g = grid.metric_components()?;
    let g0 = reference.metric_components()?;
    let num: f64 = g.iter().zip(&g0).map(|(a, b)| a * b).sum();
    let den: f64 = g0.iter().map(|b| b * b).sum();
    let c_hat = num / den;
    let deviation = g.iter().zip(&g0).fold(0.0f64, |m, (a, b)| m.max((a - c_hat * b).abs()));
    let scale = g0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(SelfSimilarity {
        c_hat,
        deviation,
        self_similar: deviation < 1e-6 * scale,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowRecord {
    pub t: f64,
    pub max_beta: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    pub int_beta_trace: Option<f64>,
    pub int_alpha_sq: Option<f64>,
    pub c_hat: f64,
    pub ss_deviation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FlowDiagnostics {
    pub records: Vec<FlowRecord>,
}

pub fn record(grid: &MetricGrid, reference: &MetricGrid) -> Result<FlowRecord, FlowError> {
    let n = grid.dim();
    let g = grid.metric_components()?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in g.chunks(ncomp(n)) {
        let (a, b) = eigen_range(n, c);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let integrals = if grid.lattice.periodic { Some(torus_integrals(grid)?) } else { None };
    let ss = self_similarity_diagnostic(grid, reference)?;
    Ok(FlowRecord {
        t: grid.t,
        max_beta: beta_on_grid(grid)?.max_abs(),
        min_eig: lo,
        max_eig: hi,
        int_beta_trace: integrals.map(|i| i.beta_trace),
        int_alpha_sq: integrals.map(|i| i.alpha_sq),
        c_hat: ss.c_hat,
        ss_deviation: ss.deviation,
    })
}

impl FlowDiagnostics {
    pub const CSV_HEADER: &'static str = "t,max_beta,min_eig,max_eig,int_beta_trace,int_alpha_sq,c_hat,ss_deviation";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{},{},{:e},{:e}\n",
                r.t,
                r.max_beta,
                r.min_eig,
                r.max_eig,
                opt(r.int_beta_trace),
                opt(r.int_alpha_sq),
                r.c_hat,
                r.ss_deviation
            ));
        }
        out
    }
}

/// Result of [`run_flow`]; on blow-up `grid` is the last valid state.
#[derive(Clone, Debug)]
pub struct FlowRun {
    pub grid: MetricGrid,
    pub diagnostics: FlowDiagnostics,
    pub blow_up: Option<FlowError>,
}

/// `steps` calls of [`flow_step`] with a diagnostic record after each.
pub fn run_flow(initial: &MetricGrid, dt: f64, steps: usize, scheme: Scheme) -> Result<FlowRun, FlowError> {
    let mut diagnostics = FlowDiagnostics {
        records: vec![record(initial, initial)?],
    };
    let mut grid = initial.clone();
    for _ in 0..steps {
        match flow_step(&grid, dt, scheme) {
            Ok(next) => {
                grid = next;
                diagnostics.records.push(record(&grid, initial)?);
            }
            Err(e @ FlowError::NotPositiveDefinite { .. }) => {
                return Ok(FlowRun { grid, diagnostics, blow_up: Some(e) });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(FlowRun { grid, diagnostics, blow_up: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::structure_at;

    fn torus(eps: f64, nodes: usize) -> MetricGrid {
        let f = PotentialField::builtin_family("torus_perturbed", 2, Some(eps), Some(vec![1.0, 1.0])).unwrap();
        MetricGrid::torus_from_field(&f, nodes).unwrap()
    }

    #[test]
    fn packing() {
        assert_eq!((comp(2, 0, 0), comp(2, 0, 1), comp(2, 1, 0), comp(2, 1, 1)), (0, 1, 1, 2));
        assert_eq!(comp(1, 0, 0), 0);
        assert_eq!(eigen_range(2, &[2.0, 0.0, 3.0]), (2.0, 3.0));
    }

    #[test]
    fn flat_torus_is_stationary() {
        let g = torus(0.0, 16);
        assert_eq!(beta_on_grid(&g).unwrap().max_abs(), 0.0);
        let next = flow_step(&g, 1e-3, Scheme::Rk4).unwrap();
        assert!(next.state.iter().all(|&v| v == 0.0));
        let i = torus_integrals(&g).unwrap();
        assert_eq!((i.beta_trace, i.alpha_sq, i.divergence), (0.0, 0.0, 0.0));
        let ss = self_similarity_diagnostic(&next, &g).unwrap();
        assert_eq!((ss.c_hat, ss.deviation, ss.self_similar), (1.0, 0.0, true));
    }

    #[test]
    fn grid_beta_converges_at_fourth_order() {
        let f = PotentialField::builtin_family("torus_perturbed", 2, Some(0.05), Some(vec![1.0, 1.0])).unwrap();
        let err = |nodes: usize| {
            let g = MetricGrid::torus_from_field(&f, nodes).unwrap();
            let b = beta_on_grid(&g).unwrap();
            let mut worst: f64 = 0.0;
            for idx in 0..g.lattice.len() {
                let sp = structure_at(&f, &g.lattice.coords(idx)).unwrap();
                let exact = pack(&sp.beta.as_matrix());
                for (a, e) in b.at(idx).iter().zip(&exact) {
                    worst = worst.max((a - e).abs());
                }
            }
            worst
        };
        let (coarse, fine) = (err(16), err(32));
        assert!(coarse / fine >= 12.0, "{coarse} / {fine}");
    }

    #[test]
    fn scale_invariance_on_grid() {
        let g = torus(0.05, 16);
        let b = beta_on_grid(&g.to_metric().unwrap()).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let bc = beta_on_grid(&g.scaled(c).unwrap()).unwrap();
            assert!(b.max_abs_diff(&bc) < 1e-12, "c = {c}");
        }
    }

    #[test]
    fn stokes_identity_on_torus() {
        let i = torus_integrals(&torus(0.05, 64)).unwrap();
        assert!(i.stokes_defect().abs() < 1e-6, "{i:?}");
        assert!(i.alpha_sq > 0.0);
        assert!(i.divergence.abs() < 1e-6);
    }

    #[test]
    fn cone_patch_is_einstein() {
        let f = PotentialField::builtin_family("log_cone", 2, None, None).unwrap();
        let g = MetricGrid::patch_from_field(&f, &[-0.16, 0.84], 33, 1e-2, Boundary::einstein(1.0))
            .unwrap();
        let b = beta_on_grid(&g).unwrap();
        let mut worst: f64 = 0.0;
        for idx in 0..g.lattice.len() {
            if g.lattice.is_interior(idx) {
                for c in 0..3 {
                    worst = worst.max((b.at(idx)[c] - g.state[idx * 3 + c]).abs());
                }
            }
        }
        assert!(worst < 1e-5, "{worst}");
        assert!(matches!(torus_integrals(&g), Err(FlowError::NotPeriodic)));
    }

    #[test]
    fn blow_up_and_errors() {
        let g = torus(0.05, 16);
        assert_eq!(flow_step(&g, 0.0, Scheme::Euler).unwrap_err(), FlowError::InvalidTimeStep(0.0));
        assert!(matches!(
            MetricGrid::torus_potential(2, 16, |x| -2.0 * x[0].sin() * x[1].sin()),
            Err(FlowError::NotPositiveDefinite { .. })
        ));
        assert!(matches!(MetricGrid::torus_potential(3, 8, |_| 0.0), Err(FlowError::Unsupported(_))));
    }

    #[test]
    fn csv_layout() {
        let g = torus(0.05, 16);
        let run = run_flow(&g, 1e-3, 2, Scheme::Euler).unwrap();
        let csv = run.diagnostics.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], FlowDiagnostics::CSV_HEADER);
        assert_eq!(lines[1].split(',').count(), 8);
        assert!(run.diagnostics.records.windows(2).all(|w| w[0].t < w[1].t));
    }
}

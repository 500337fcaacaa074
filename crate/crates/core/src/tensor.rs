//! Small dense tensors with per-slot variance, metric raising/lowering and
//! contractions.
//!
//! Every repeated-index contraction between two slots of the same variance is
//! routed through the metric, so `T_{ij} S_{ij}` means `g^{ia} g^{jb} T_{ij} S_{ab}`.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("matrix is not positive definite (leading minor {minor} fails)")]
    NotPositiveDefinite { minor: usize },
    #[error("matrix is not symmetric (entry ({i}, {j}))")]
    NotSymmetric { i: usize, j: usize },
    #[error("slot {slot} out of range for rank {rank}")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("slot {slot} has variance {found:?}, expected {expected:?}")]
    WrongVariance {
        slot: usize,
        found: Variance,
        expected: Variance,
    },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("contraction of two {0:?} slots requires a metric")]
    MetricRequired(Variance),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variance {
    Upper,
    Lower,
}

impl Variance {
    pub fn flip(self) -> Variance {
        match self {
            Variance::Upper => Variance::Lower,
            Variance::Lower => Variance::Upper,
        }
    }
}

pub use Variance::{Lower, Upper};

/// Row-major component array of length `dim^rank`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DenseTensor {
    dim: usize,
    variance: Vec<Variance>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dim: usize, variance: &[Variance]) -> Self {
        DenseTensor {
            dim,
            variance: variance.to_vec(),
            data: vec![0.0; dim.pow(variance.len() as u32)],
        }
    }

    pub fn scalar(v: f64) -> Self {
        DenseTensor {
            dim: 0,
            variance: Vec::new(),
            data: vec![v],
        }
    }

    pub fn from_data(dim: usize, variance: &[Variance], data: Vec<f64>) -> Result<Self, TensorError> {
        let want = dim.pow(variance.len() as u32);
        if data.len() != want {
            return Err(TensorError::DimensionMismatch(data.len(), want));
        }
        Ok(DenseTensor {
            dim,
            variance: variance.to_vec(),
            data,
        })
    }

    pub fn from_fn(dim: usize, variance: &[Variance], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(dim, variance);
        let rank = variance.len();
        let mut idx = vec![0usize; rank];
        for k in 0..t.data.len() {
            t.data[k] = f(&idx);
            increment(&mut idx, dim);
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[Variance] {
        &self.variance
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest componentwise difference; panics on a shape mismatch.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn scale(&self, k: f64) -> DenseTensor {
        let mut t = self.clone();
        t.data.iter_mut().for_each(|v| *v *= k);
        t
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor, TensorError> {
        self.check_same_shape(other)?;
        let mut t = self.clone();
        t.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(t)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor, TensorError> {
        self.add(&other.scale(-1.0))
    }

    fn check_same_shape(&self, other: &DenseTensor) -> Result<(), TensorError> {
        if self.dim != other.dim {
            return Err(TensorError::DimensionMismatch(self.dim, other.dim));
        }
        if self.rank() != other.rank() {
            return Err(TensorError::DimensionMismatch(self.rank(), other.rank()));
        }
        Ok(())
    }

    /// Componentwise tensor with slots reordered: `result[idx] = self[idx∘perm]`,
    /// i.e. result slot `s` reads source slot `perm[s]`.
    pub fn permuted(&self, perm: &[usize]) -> DenseTensor {
        let variance: Vec<Variance> = perm.iter().map(|&p| self.variance[p]).collect();
        let mut src = vec![0usize; self.rank()];
        DenseTensor::from_fn(self.dim, &variance, |idx| {
            for (s, &p) in perm.iter().enumerate() {
                src[p] = idx[s];
            }
            self.get(&src)
        })
    }

    /// Largest deviation from full symmetry over all slot permutations.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for perm in permutations(self.rank()) {
            worst = worst.max(self.max_abs_diff(&self.permuted(&perm)));
        }
        worst
    }

    pub fn as_matrix(&self) -> Vec<Vec<f64>> {
        assert_eq!(self.rank(), 2);
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }
}

fn increment(idx: &mut [usize], dim: usize) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < dim {
            return;
        }
        idx[k] = 0;
    }
}

pub(crate) fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// Inverse and `sqrt(det)` of a symmetric positive-definite `n × n`
/// row-major matrix via an LDLᵀ factorisation.
pub fn invert_spd(g: &[f64], n: usize) -> Result<(Vec<f64>, f64), TensorError> {
    if g.len() != n * n {
        return Err(TensorError::DimensionMismatch(g.len(), n * n));
    }
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (g[i * n + j] - g[j * n + i]).abs() > 1e-12 * scale {
                return Err(TensorError::NotSymmetric { i, j });
            }
        }
    }
    // g = L D Lᵀ with unit lower-triangular L
    let mut l = vec![0.0; n * n];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = g[j * n + j];
        for k in 0..j {
            dj -= l[j * n + k] * l[j * n + k] * d[k];
        }
        if !(dj > 0.0) || !dj.is_finite() {
            return Err(TensorError::NotPositiveDefinite { minor: j + 1 });
        }
        d[j] = dj;
        l[j * n + j] = 1.0;
        for i in j + 1..n {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k] * d[k];
            }
            l[i * n + j] = s / dj;
        }
    }
    let sqrt_det = d.iter().product::<f64>().sqrt();
    // L^{-1}, unit lower triangular
    let mut linv = vec![0.0; n * n];
    for i in 0..n {
        linv[i * n + i] = 1.0;
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s += l[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = -s;
        }
    }
    // g^{-1} = L^{-T} D^{-1} L^{-1}
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[k * n + i] * linv[k * n + j] / d[k];
            }
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    Ok((inv, sqrt_det))
}

/// Eigenvalues of a symmetric `n × n` matrix (cyclic Jacobi), ascending.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| m[i * n + i] * m[i * n + i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig
}

/// Metric at a point: `g`, `g^{-1}` and the volume density `sqrt(det g)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricPoint {
    pub g: DenseTensor,
    pub g_inv: DenseTensor,
    pub sqrt_det: f64,
}

impl MetricPoint {
    pub fn new(g: &[f64], n: usize) -> Result<Self, TensorError> {
        let (inv, sqrt_det) = invert_spd(g, n)?;
        // exact symmetrisation of the stored metric
        let sym: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                if i <= j {
                    g[i * n + j]
                } else {
                    g[j * n + i]
                }
            })
            .collect();
        Ok(MetricPoint {
            g: DenseTensor::from_data(n, &[Lower, Lower], sym)?,
            g_inv: DenseTensor::from_data(n, &[Upper, Upper], inv)?,
            sqrt_det,
        })
    }

    pub fn identity(n: usize) -> Self {
        let id: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
        MetricPoint::new(&id, n).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    #[inline]
    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.g.data[i * self.dim() + j]
    }

    #[inline]
    pub fn inv(&self, i: usize, j: usize) -> f64 {
        self.g_inv.data[i * self.dim() + j]
    }
}

fn check_slot(t: &DenseTensor, slot: usize) -> Result<(), TensorError> {
    if slot >= t.rank() {
        return Err(TensorError::SlotOutOfRange {
            slot,
            rank: t.rank(),
        });
    }
    Ok(())
}

fn apply_matrix(t: &DenseTensor, slot: usize, mat: &DenseTensor, to: Variance) -> DenseTensor {
    let n = t.dim;
    let mut variance = t.variance.clone();
    variance[slot] = to;
    let mut src = vec![0usize; t.rank()];
    DenseTensor::from_fn(n, &variance, |idx| {
        src.copy_from_slice(idx);
        let a = idx[slot];
        let mut s = 0.0;
        for b in 0..n {
            src[slot] = b;
            s += mat.data[a * n + b] * t.get(&src);
        }
        s
    })
}

/// Contract `slot` (lower) with `g^{-1}`.
pub fn raise(t: &DenseTensor, slot: usize, m: &MetricPoint) -> Result<DenseTensor, TensorError> {
    check_slot(t, slot)?;
    if t.variance[slot] != Lower {
        return Err(TensorError::WrongVariance {
            slot,
            found: t.variance[slot],
            expected: Lower,
        });
    }
    if t.dim != m.dim() {
        return Err(TensorError::DimensionMismatch(t.dim, m.dim()));
    }
    Ok(apply_matrix(t, slot, &m.g_inv, Upper))
}

/// Contract `slot` (upper) with `g`.
pub fn lower(t: &DenseTensor, slot: usize, m: &MetricPoint) -> Result<DenseTensor, TensorError> {
    check_slot(t, slot)?;
    if t.variance[slot] != Upper {
        return Err(TensorError::WrongVariance {
            slot,
            found: t.variance[slot],
            expected: Upper,
        });
    }
    if t.dim != m.dim() {
        return Err(TensorError::DimensionMismatch(t.dim, m.dim()));
    }
    Ok(apply_matrix(t, slot, &m.g, Lower))
}

/// Contract slot pairs `(a_slot, b_slot)` of `a` and `b`.
///
/// Result slots are the free slots of `a` followed by the free slots of `b`.
/// Pairs of equal variance go through the metric, which must then be given.
pub fn contract(
    a: &DenseTensor,
    b: &DenseTensor,
    pairs: &[(usize, usize)],
    m: Option<&MetricPoint>,
) -> Result<DenseTensor, TensorError> {
    if a.dim != b.dim {
        return Err(TensorError::DimensionMismatch(a.dim, b.dim));
    }
    let mut b = b.clone();
    for &(sa, sb) in pairs {
        check_slot(a, sa)?;
        check_slot(&b, sb)?;
        if a.variance[sa] == b.variance[sb] {
            let metric = m.ok_or(TensorError::MetricRequired(a.variance[sa]))?;
            b = match b.variance[sb] {
                Lower => raise(&b, sb, metric)?,
                Upper => lower(&b, sb, metric)?,
            };
        }
    }
    let n = a.dim;
    let free_a: Vec<usize> = (0..a.rank()).filter(|s| !pairs.iter().any(|p| p.0 == *s)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|s| !pairs.iter().any(|p| p.1 == *s)).collect();
    let variance: Vec<Variance> = free_a
        .iter()
        .map(|&s| a.variance[s])
        .chain(free_b.iter().map(|&s| b.variance[s]))
        .collect();
    let mut ia = vec![0usize; a.rank()];
    let mut ib = vec![0usize; b.rank()];
    let mut summed = vec![0usize; pairs.len()];
    let terms = n.pow(pairs.len() as u32);
    Ok(DenseTensor::from_fn(n, &variance, |idx| {
        for (k, &s) in free_a.iter().enumerate() {
            ia[s] = idx[k];
        }
        for (k, &s) in free_b.iter().enumerate() {
            ib[s] = idx[free_a.len() + k];
        }
        summed.iter_mut().for_each(|v| *v = 0);
        let mut total = 0.0;
        for _ in 0..terms {
            for (p, &(sa, sb)) in pairs.iter().enumerate() {
                ia[sa] = summed[p];
                ib[sb] = summed[p];
            }
            total += a.get(&ia) * b.get(&ib);
            increment(&mut summed, n);
        }
        total
    }))
}

/// Self-contraction of two slots of one tensor (metric trace when both have
/// the same variance).
pub fn trace(
    t: &DenseTensor,
    s1: usize,
    s2: usize,
    m: Option<&MetricPoint>,
) -> Result<DenseTensor, TensorError> {
    check_slot(t, s1)?;
    check_slot(t, s2)?;
    let mut t = t.clone();
    if t.variance[s1] == t.variance[s2] {
        let metric = m.ok_or(TensorError::MetricRequired(t.variance[s1]))?;
        t = match t.variance[s2] {
            Lower => raise(&t, s2, metric)?,
            Upper => lower(&t, s2, metric)?,
        };
    }
    let n = t.dim;
    let free: Vec<usize> = (0..t.rank()).filter(|&s| s != s1 && s != s2).collect();
    let variance: Vec<Variance> = free.iter().map(|&s| t.variance[s]).collect();
    let mut src = vec![0usize; t.rank()];
    Ok(DenseTensor::from_fn(n, &variance, |idx| {
        for (k, &s) in free.iter().enumerate() {
            src[s] = idx[k];
        }
        (0..n)
            .map(|r| {
                src[s1] = r;
                src[s2] = r;
                t.get(&src)
            })
            .sum()
    }))
}

/// Full metric contraction of `t` with itself.
pub fn norm_sq(t: &DenseTensor, m: &MetricPoint) -> Result<f64, TensorError> {
    if t.dim != m.dim() && t.rank() > 0 {
        return Err(TensorError::DimensionMismatch(t.dim, m.dim()));
    }
    let mut flipped = t.clone();
    for s in 0..t.rank() {
        flipped = match flipped.variance[s] {
            Lower => raise(&flipped, s, m)?,
            Upper => lower(&flipped, s, m)?,
        };
    }
    Ok(t.data.iter().zip(&flipped.data).map(|(a, b)| a * b).sum())
}

/// Musical isomorphism: `g(α♯, X) = α(X)`.
pub fn sharp(alpha: &DenseTensor, m: &MetricPoint) -> Result<DenseTensor, TensorError> {
    if alpha.rank() != 1 {
        return Err(TensorError::DimensionMismatch(alpha.rank(), 1));
    }
    raise(alpha, 0, m)
}

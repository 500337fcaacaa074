//! Truncated multivariate Taylor polynomials.
//!
//! Coefficients are stored Taylor-normalised (`c[m] = ∂^m f / m!`) so that
//! products are plain Cauchy products. [`super::Jet`] converts to raw
//! derivative values at the boundary.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

/// Monomial table for `nvars` variables up to total degree `max_order`,
/// graded by degree (all degree-0 monomials, then degree-1, ...).
#[derive(Debug)]
pub struct Layout {
    nvars: usize,
    max_order: usize,
    exponents: Vec<Vec<u8>>,
    degree_start: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    // shift[m * nvars + i] = index of m + e_i
    shift: Vec<Option<usize>>,
    // product[a][b] = index of a + b, for b < count(max_order - deg a)
    product: Vec<Vec<usize>>,
    factorial_weight: Vec<f64>,
}

fn monomials_of_degree(nvars: usize, degree: usize, out: &mut Vec<Vec<u8>>) {
    fn rec(prefix: &mut Vec<u8>, nvars: usize, remaining: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() + 1 == nvars {
            prefix.push(remaining as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=remaining).rev() {
            prefix.push(k as u8);
            rec(prefix, nvars, remaining - k, out);
            prefix.pop();
        }
    }
    if nvars == 0 {
        if degree == 0 {
            out.push(Vec::new());
        }
        return;
    }
    rec(&mut Vec::with_capacity(nvars), nvars, degree, out);
}

impl Layout {
    fn build(nvars: usize, max_order: usize) -> Self {
        let mut exponents = Vec::new();
        let mut degree_start = vec![0];
        for d in 0..=max_order {
            monomials_of_degree(nvars, d, &mut exponents);
            degree_start.push(exponents.len());
        }
        let index: HashMap<Vec<u8>, usize> = exponents
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut shift = vec![None; exponents.len() * nvars];
        for (mi, m) in exponents.iter().enumerate() {
            for i in 0..nvars {
                let mut up = m.clone();
                up[i] += 1;
                shift[mi * nvars + i] = index.get(&up).copied();
            }
        }
        let degree = |m: &[u8]| m.iter().map(|&e| e as usize).sum::<usize>();
        let product = exponents
            .iter()
            .map(|a| {
                let da = degree(a);
                let limit = degree_start[max_order - da + 1];
                exponents[..limit]
                    .iter()
                    .map(|b| {
                        let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                        index[&sum]
                    })
                    .collect()
            })
            .collect();
        let factorial_weight = exponents
            .iter()
            .map(|m| m.iter().map(|&e| factorial(e as usize)).product())
            .collect();
        Layout {
            nvars,
            max_order,
            exponents,
            degree_start,
            index,
            shift,
            product,
            factorial_weight,
        }
    }

    /// Shared layout for `(nvars, max_order)`; built once per process.
    pub fn shared(nvars: usize, max_order: usize) -> Arc<Layout> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry((nvars, max_order))
            .or_insert_with(|| Arc::new(Layout::build(nvars, max_order)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of monomials with total degree ≤ `order`.
    pub fn count(&self, order: usize) -> usize {
        self.degree_start[order + 1]
    }

    pub fn exponents(&self, idx: usize) -> &[u8] {
        &self.exponents[idx]
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.index.get(exponents).copied()
    }

    /// `Π m_i!` for the monomial at `idx`.
    pub fn factorial_weight(&self, idx: usize) -> f64 {
        self.factorial_weight[idx]
    }

    /// Index of the monomial whose exponents are the multiplicities of `axes`.
    pub fn index_of_axes(&self, axes: &[usize]) -> Option<usize> {
        let mut m = vec![0u8; self.nvars];
        for &a in axes {
            if a >= self.nvars {
                return None;
            }
            m[a] += 1;
        }
        self.index_of(&m)
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// A truncated Taylor polynomial about some expansion point.
#[derive(Clone, Debug)]
pub struct Series {
    layout: Arc<Layout>,
    order: usize,
    coeffs: Vec<f64>,
}

impl Series {
    pub fn constant(layout: &Arc<Layout>, order: usize, value: f64) -> Self {
        let mut coeffs = vec![0.0; layout.count(order)];
        coeffs[0] = value;
        Series {
            layout: layout.clone(),
            order,
            coeffs,
        }
    }

    pub fn zero(layout: &Arc<Layout>, order: usize) -> Self {
        Self::constant(layout, order, 0.0)
    }

    /// The coordinate function `x_axis` expanded about `value`.
    pub fn variable(layout: &Arc<Layout>, order: usize, axis: usize, value: f64) -> Self {
        let mut s = Self::constant(layout, order, value);
        if order >= 1 {
            let mut m = vec![0u8; layout.nvars()];
            m[axis] = 1;
            let idx = layout.index_of(&m).expect("axis within layout");
            s.coeffs[idx] = 1.0;
        }
        s
    }

    pub fn from_coeffs(layout: &Arc<Layout>, order: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), layout.count(order));
        Series {
            layout: layout.clone(),
            order,
            coeffs,
        }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Raw partial derivative `∂^m` at the expansion point.
    pub fn derivative_value(&self, axes: &[usize]) -> f64 {
        if axes.len() > self.order {
            return f64::NAN;
        }
        let idx = self
            .layout
            .index_of_axes(axes)
            .expect("axes within layout");
        self.coeffs[idx] * self.layout.factorial_weight(idx)
    }

    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        Series {
            layout: self.layout.clone(),
            order,
            coeffs: self.coeffs[..self.layout.count(order)].to_vec(),
        }
    }

    /// `∂/∂x_axis`; the result has one order less.
    ///
    /// Panics on an order-0 series: there is no derivative information left.
    pub fn derivative(&self, axis: usize) -> Self {
        assert!(self.order >= 1, "derivative of an order-0 series");
        let order = self.order - 1;
        let n = self.layout.nvars();
        let count = self.layout.count(order);
        let mut coeffs = vec![0.0; count];
        for (mi, c) in coeffs.iter_mut().enumerate() {
            let up = self.layout.shift[mi * n + axis].expect("shift within layout");
            let m_axis = self.layout.exponents[mi][axis] as f64;
            *c = (m_axis + 1.0) * self.coeffs[up];
        }
        Series {
            layout: self.layout.clone(),
            order,
            coeffs,
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        Series {
            layout: self.layout.clone(),
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
        }
    }

    pub fn add_constant(&self, k: f64) -> Self {
        let mut s = self.clone();
        s.coeffs[0] += k;
        s
    }

    fn zip_with(&self, other: &Series, f: impl Fn(f64, f64) -> f64) -> Series {
        let order = self.order.min(other.order);
        let count = self.layout.count(order);
        let coeffs = self.coeffs[..count]
            .iter()
            .zip(&other.coeffs[..count])
            .map(|(a, b)| f(*a, *b))
            .collect();
        Series {
            layout: self.layout.clone(),
            order,
            coeffs,
        }
    }

    fn product(&self, other: &Series) -> Series {
        let order = self.order.min(other.order);
        let layout = &self.layout;
        let mut coeffs = vec![0.0; layout.count(order)];
        for d in 0..=order {
            for a in layout.degree_start[d]..layout.degree_start[d + 1] {
                let ca = self.coeffs[a];
                if ca == 0.0 {
                    continue;
                }
                let targets = &layout.product[a];
                let limit = layout.count(order - d);
                for (b, &target) in targets[..limit].iter().enumerate() {
                    coeffs[target] += ca * other.coeffs[b];
                }
            }
        }
        Series {
            layout: layout.clone(),
            order,
            coeffs,
        }
    }

    /// `f(self)` given `derivs[k] = f^(k)(self.value())` for k = 0..=order.
    pub fn compose(&self, derivs: &[f64]) -> Series {
        debug_assert!(derivs.len() > self.order);
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let k_max = self.order;
        let mut acc = Series::constant(&self.layout, self.order, derivs[k_max] / factorial(k_max));
        for k in (0..k_max).rev() {
            acc = &acc * &delta;
            acc.coeffs[0] += derivs[k] / factorial(k);
        }
        acc
    }

    pub fn exp(&self) -> Series {
        let e = self.value().exp();
        self.compose(&vec![e; self.order + 1])
    }

    /// Natural log; the caller guarantees a positive constant term.
    pub fn ln(&self) -> Series {
        let u = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        d.push(u.ln());
        for k in 1..=self.order {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            d.push(sign * factorial(k - 1) / u.powi(k as i32));
        }
        self.compose(&d)
    }

    /// `self^r` for real `r`; the caller guarantees a positive constant term
    /// unless `r` is a non-negative integer.
    pub fn powf(&self, r: f64) -> Series {
        let u = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        let mut falling = 1.0;
        for k in 0..=self.order {
            d.push(falling * u.powf(r - k as f64));
            falling *= r - k as f64;
        }
        self.compose(&d)
    }

    pub fn recip(&self) -> Series {
        let u = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        for k in 0..=self.order {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            d.push(sign * factorial(k) / u.powi(k as i32 + 1));
        }
        self.compose(&d)
    }

    pub fn powi(&self, p: i64) -> Series {
        if p < 0 {
            return self.recip().powi(-p);
        }
        let mut result = Series::constant(&self.layout, self.order, 1.0);
        let mut base = self.clone();
        let mut e = p as u64;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    pub fn sqrt(&self) -> Series {
        self.powf(0.5)
    }

    pub fn sin(&self) -> Series {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.order).map(|k| cycle[k % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Series {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.order).map(|k| cycle[k % 4]).collect();
        self.compose(&d)
    }
}

impl<'a> Add for &'a Series {
    type Output = Series;
    fn add(self, rhs: &'a Series) -> Series {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl<'a> Sub for &'a Series {
    type Output = Series;
    fn sub(self, rhs: &'a Series) -> Series {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl<'a> Mul for &'a Series {
    type Output = Series;
    fn mul(self, rhs: &'a Series) -> Series {
        self.product(rhs)
    }
}

impl Neg for &Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.scale(-1.0)
    }
}

impl Add for Series {
    type Output = Series;
    fn add(self, rhs: Series) -> Series {
        &self + &rhs
    }
}

impl Sub for Series {
    type Output = Series;
    fn sub(self, rhs: Series) -> Series {
        &self - &rhs
    }
}

impl Mul for Series {
    type Output = Series;
    fn mul(self, rhs: Series) -> Series {
        &self * &rhs
    }
}

/// Sum of an iterator of series; `None` on an empty iterator.
pub fn sum<'a>(mut items: impl Iterator<Item = &'a Series>) -> Option<Series> {
    let first = items.next()?.clone();
    Some(items.fold(first, |acc, s| &acc + s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn layout_counts_match_binomials() {
        let l = Layout::shared(3, 5);
        // C(3 + 5, 5) = 56
        assert_eq!(l.count(5), 56);
        assert_eq!(l.count(0), 1);
        assert_eq!(l.count(1), 4);
        let l2 = Layout::shared(2, 4);
        assert_eq!(l2.count(4), 15);
    }

    #[test]
    fn univariate_exp_coefficients() {
        let l = Layout::shared(1, 5);
        let x = Series::variable(&l, 5, 0, 0.0);
        let e = x.exp();
        for k in 0..=5 {
            assert!(close(e.coeffs()[k], 1.0 / factorial(k), 1e-15));
            assert!(close(e.derivative_value(&vec![0; k]), 1.0, 1e-15));
        }
    }

    #[test]
    fn sin_cos_raw_derivatives() {
        let l = Layout::shared(1, 5);
        let x = Series::variable(&l, 5, 0, 0.3);
        let s = x.sin();
        let expected = [0.3f64.sin(), 0.3f64.cos(), -0.3f64.sin(), -0.3f64.cos()];
        for k in 0..=5 {
            assert!(close(s.derivative_value(&vec![0; k]), expected[k % 4], 1e-14));
        }
    }

    #[test]
    fn product_of_variables_gives_mixed_partial() {
        let l = Layout::shared(2, 4);
        let x = Series::variable(&l, 4, 0, 2.0);
        let y = Series::variable(&l, 4, 1, -1.0);
        // f = x^2 y
        let f = &(&x * &x) * &y;
        assert!(close(f.value(), -4.0, 1e-15));
        assert!(close(f.derivative_value(&[0]), -4.0, 1e-15));
        assert!(close(f.derivative_value(&[1]), 4.0, 1e-15));
        assert!(close(f.derivative_value(&[0, 0]), -2.0, 1e-15));
        assert!(close(f.derivative_value(&[0, 1]), 4.0, 1e-15));
        assert!(close(f.derivative_value(&[0, 0, 1]), 2.0, 1e-15));
        assert_eq!(f.derivative_value(&[1, 1]), 0.0);
    }

    #[test]
    fn recip_and_ln_are_consistent() {
        let l = Layout::shared(2, 5);
        let x = Series::variable(&l, 5, 0, 1.5);
        let y = Series::variable(&l, 5, 1, 0.5);
        let u = &(&x * &x) + &y;
        let one = &u * &u.recip();
        assert!(close(one.value(), 1.0, 1e-15));
        for c in &one.coeffs()[1..] {
            assert!(c.abs() < 1e-13);
        }
        // d/dx ln u = u_x / u
        let lu = u.ln();
        let dl = lu.derivative(0);
        let ratio = &u.derivative(0) * &u.recip().truncate(4);
        for (a, b) in dl.coeffs().iter().zip(ratio.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn powi_matches_repeated_product() {
        let l = Layout::shared(2, 5);
        let x = Series::variable(&l, 5, 0, -0.7);
        let p = x.powi(3);
        let q = &(&x * &x) * &x;
        for (a, b) in p.coeffs().iter().zip(q.coeffs()) {
            assert!((a - b).abs() < 1e-14);
        }
        let inv = x.powi(-2);
        let check = &inv * &(&x * &x);
        assert!(close(check.value(), 1.0, 1e-14));
    }

    #[test]
    fn derivative_reduces_order_and_shifts() {
        let l = Layout::shared(2, 3);
        let x = Series::variable(&l, 3, 0, 1.0);
        let y = Series::variable(&l, 3, 1, 2.0);
        let f = &(&x * &y) * &y; // x y^2
        let fy = f.derivative(1);
        assert_eq!(fy.order(), 2);
        assert!(close(fy.value(), 4.0, 1e-15)); // 2 x y
        assert!(close(fy.derivative_value(&[1]), 2.0, 1e-15)); // 2x
        assert!(close(fy.derivative_value(&[0]), 4.0, 1e-15)); // 2y
    }
}

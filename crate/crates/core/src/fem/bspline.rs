//! Univariate B-spline basis of degree r on a uniform open (clamped) knot
//! vector over [0, 1] with C^{r−1} smoothness at the interior knots.
//!
//! The full basis has K + r functions on K elements; the two endpoint
//! splines are the only ones with nonzero boundary values, and dropping
//! them enforces v(0) = v(1) = 0. What remains (K + r − 2 functions) spans
//! piecewise polynomials in H²(0,1) ∩ H¹₀(0,1) for r ≥ 2.

use crate::quad::GaussRule;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct BsplineBasis {
    degree: usize,
    elements: usize,
    knots: Vec<f64>,
}

/// Values and first/second derivatives of the nonzero full-basis functions
/// at one point: entry j refers to full index `first + j`.
#[derive(Debug, Clone)]
pub struct BasisValues {
    pub first: usize,
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl BsplineBasis {
    pub fn new(degree: usize, elements: usize) -> Result<Self> {
        if !(2..=4).contains(&degree) {
            return Err(Error::invalid("spline degree must be 2, 3 or 4"));
        }
        if elements < 2 {
            return Err(Error::invalid("need at least 2 elements per dimension"));
        }
        let mut knots = vec![0.0; degree + 1];
        for k in 1..elements {
            knots.push(k as f64 / elements as f64);
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(BsplineBasis { degree, elements, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn h(&self) -> f64 {
        1.0 / self.elements as f64
    }

    /// Size of the full (unconstrained) basis.
    pub fn full_count(&self) -> usize {
        self.elements + self.degree
    }

    /// Size of the boundary-constrained basis.
    pub fn count(&self) -> usize {
        self.full_count() - 2
    }

    /// Maps a full basis index to the constrained index, if kept.
    pub fn kept_index(&self, full: usize) -> Option<usize> {
        if full == 0 || full + 1 >= self.full_count() {
            None
        } else {
            Some(full - 1)
        }
    }

    /// 0-based element containing x (last element is right-closed).
    pub fn element_of(&self, x: f64) -> usize {
        ((x * self.elements as f64) as usize).min(self.elements - 1)
    }

    /// Evaluates the degree+1 nonzero basis functions and their first two
    /// derivatives at x ∈ [0, 1] (The NURBS Book, algorithm A2.3).
    pub fn eval(&self, x: f64) -> BasisValues {
        let p = self.degree;
        let span = self.element_of(x) + p; // knot span index
        let u = &self.knots;
        let mut ndu = vec![vec![0.0f64; p + 1]; p + 1];
        let mut left = vec![0.0f64; p + 1];
        let mut right = vec![0.0f64; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let max_der = 2usize;
        let mut ders = vec![vec![0.0f64; p + 1]; max_der + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0f64; p + 1]; 2];
        for r in 0..=p {
            let mut s1 = 0usize;
            let mut s2 = 1usize;
            a[0].iter_mut().for_each(|v| *v = 0.0);
            a[1].iter_mut().for_each(|v| *v = 0.0);
            a[0][0] = 1.0;
            for k in 1..=max_der {
                let mut d = 0.0;
                let rk = r as i64 - k as i64;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1usize } else { (-rk) as usize };
                let j2 = if r as i64 - 1 <= pk as i64 { k - 1 } else { p - r };
                for j in j1..=j2 {
                    a[s2][j] =
                        (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as i64) as usize];
                    d += a[s2][j] * ndu[(rk + j as i64) as usize][pk];
                }
                if r as i64 <= pk as i64 {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=max_der {
            for j in 0..=p {
                ders[k][j] *= factor;
            }
            factor *= (p - k) as f64;
        }
        BasisValues {
            first: span - p,
            values: ders[0].clone(),
            d1: ders[1].clone(),
            d2: ders[2].clone(),
        }
    }

    /// Value of the constrained function with coefficients `coeffs` at x.
    pub fn eval_function(&self, coeffs: &[f64], x: f64) -> f64 {
        let bv = self.eval(x);
        let mut acc = 0.0;
        for (j, &v) in bv.values.iter().enumerate() {
            if let Some(k) = self.kept_index(bv.first + j) {
                acc += coeffs[k] * v;
            }
        }
        acc
    }

    /// The three symmetric 1D Gram matrices on the constrained basis:
    /// M0 = (b, b), M1 = (b′, b′), M2 = (b″, b″). By parts, the mixed form
    /// (b″_i, b_j) equals −M1[i][j] for functions vanishing at the
    /// endpoints, so all biharmonic Kronecker blocks reduce to these.
    /// Per-element Gauss with degree+1 points is exact: the stiffest
    /// integrand (b·b) has polynomial degree 2r ≤ 2(r+1)−1.
    pub fn gram_matrices(&self) -> Gram1d {
        let n = self.count();
        let mut m0 = Dense1d::zeros(n);
        let mut m1 = Dense1d::zeros(n);
        let mut m2 = Dense1d::zeros(n);
        let rule = GaussRule::new(self.degree + 1);
        let h = self.h();
        for e in 0..self.elements {
            for (x, w) in rule.mapped(e as f64 * h, (e + 1) as f64 * h) {
                let bv = self.eval(x);
                for i in 0..bv.values.len() {
                    let Some(ki) = self.kept_index(bv.first + i) else { continue };
                    for j in 0..bv.values.len() {
                        let Some(kj) = self.kept_index(bv.first + j) else { continue };
                        m0.add(ki, kj, w * bv.values[i] * bv.values[j]);
                        m1.add(ki, kj, w * bv.d1[i] * bv.d1[j]);
                        m2.add(ki, kj, w * bv.d2[i] * bv.d2[j]);
                    }
                }
            }
        }
        Gram1d { m0, m1, m2 }
    }

    /// Load integrals ∫ √2 sin(aπx) b_i(x) dx for a = 1..=n_max against the
    /// constrained basis. Each element is subdivided so a subinterval sees
    /// at most ~half an oscillation period, then integrated with a
    /// (degree+7)-point rule. Refuses when the requested frequency would
    /// need more than 64 subdivisions per element.
    pub fn sine_loads(&self, n_max: usize) -> Result<Vec<Vec<f64>>> {
        let h = self.h();
        let rule = GaussRule::new(self.degree + 7);
        let mut out = Vec::with_capacity(n_max);
        for a in 1..=n_max {
            let pieces = ((a as f64 * h) / 2.0).ceil().max(1.0) as usize;
            if pieces > 64 {
                return Err(Error::guard(format!(
                    "sine frequency {a} too high for element width {h}: \
                     needs {pieces} subdivisions per element (max 64)"
                )));
            }
            let freq = a as f64 * std::f64::consts::PI;
            let mut loads = vec![0.0; self.count()];
            for e in 0..self.elements {
                let lo = e as f64 * h;
                for piece in 0..pieces {
                    let plo = lo + piece as f64 * h / pieces as f64;
                    let phi = lo + (piece + 1) as f64 * h / pieces as f64;
                    for (x, w) in rule.mapped(plo, phi) {
                        let s = std::f64::consts::SQRT_2 * (freq * x).sin();
                        let bv = self.eval(x);
                        for (j, &v) in bv.values.iter().enumerate() {
                            if let Some(k) = self.kept_index(bv.first + j) {
                                loads[k] += w * s * v;
                            }
                        }
                    }
                }
            }
            out.push(loads);
        }
        Ok(out)
    }

    /// ∫ b_i over [0,1] for the constrained basis.
    pub fn integrals(&self) -> Vec<f64> {
        let rule = GaussRule::new(self.degree + 1);
        let h = self.h();
        let mut out = vec![0.0; self.count()];
        for e in 0..self.elements {
            for (x, w) in rule.mapped(e as f64 * h, (e + 1) as f64 * h) {
                let bv = self.eval(x);
                for (j, &v) in bv.values.iter().enumerate() {
                    if let Some(k) = self.kept_index(bv.first + j) {
                        out[k] += w * v;
                    }
                }
            }
        }
        out
    }

    /// Exact integrals ∫_{cell_j} b_i dx over the J★ uniform cells of a
    /// noise grid, by splitting each cell at knot lines (the splines are
    /// polynomial per knot span, so per-piece Gauss of degree+1 points is
    /// exact). Returned as table[cell][basis].
    pub fn cell_integrals(&self, j_star: usize) -> Vec<Vec<f64>> {
        let rule = GaussRule::new(self.degree + 1);
        let dx = 1.0 / j_star as f64;
        let h = self.h();
        let mut out = vec![vec![0.0; self.count()]; j_star];
        for (cell, row) in out.iter_mut().enumerate() {
            let lo = cell as f64 * dx;
            let hi = (cell + 1) as f64 * dx;
            // split (lo, hi) at element boundaries
            let e_lo = self.element_of(lo + 1e-15 * h);
            let e_hi = self.element_of(hi - 1e-15 * h);
            for e in e_lo..=e_hi {
                let plo = lo.max(e as f64 * h);
                let phi = hi.min((e + 1) as f64 * h);
                if phi <= plo {
                    continue;
                }
                for (x, w) in rule.mapped(plo, phi) {
                    let bv = self.eval(x);
                    for (j, &v) in bv.values.iter().enumerate() {
                        if let Some(k) = self.kept_index(bv.first + j) {
                            row[k] += w * v;
                        }
                    }
                }
            }
        }
        out
    }

    /// Tables of constrained-basis values and second derivatives at a list
    /// of points, laid out as table[basis * points.len() + point].
    pub fn value_tables(&self, points: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.count();
        let q = points.len();
        let mut vals = vec![0.0; n * q];
        let mut lap = vec![0.0; n * q];
        for (qi, &x) in points.iter().enumerate() {
            let bv = self.eval(x);
            for (j, (&v, &d2)) in bv.values.iter().zip(&bv.d2).enumerate() {
                if let Some(k) = self.kept_index(bv.first + j) {
                    vals[k * q + qi] = v;
                    lap[k * q + qi] = d2;
                }
            }
        }
        (vals, lap)
    }
}

/// Small dense symmetric 1D matrix (bandwidth ≤ degree, but stored full —
/// these are at most a few hundred rows).
#[derive(Debug, Clone)]
pub struct Dense1d {
    n: usize,
    data: Vec<f64>,
}

impl Dense1d {
    pub fn zeros(n: usize) -> Self {
        Dense1d { n, data: vec![0.0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }
}

/// The 1D Gram matrices feeding the Kronecker assembly.
#[derive(Debug, Clone)]
pub struct Gram1d {
    pub m0: Dense1d,
    pub m1: Dense1d,
    pub m2: Dense1d,
}

//! Symmetric banded matrices with Cholesky factorization.
//!
//! Tensor-product spline operators on lexicographic dof orderings are
//! banded with half-bandwidth r·(n1^{d-1} + … + 1); banded Cholesky costs
//! O(n·bw²) to factor and O(n·bw) per solve, which keeps Backward Euler
//! time stepping cheap once the step matrix is factored.

use crate::{Error, Result};

/// Lower-band storage: entry (i, j) with 0 ≤ i − j ≤ bw lives at
/// data[(i − j) · n + j].
#[derive(Debug, Clone)]
pub struct SymBandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBandMatrix { n, bw, data: vec![0.0; (bw + 1) * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bw {
            0.0
        } else {
            self.data[(hi - lo) * self.n + lo]
        }
    }

    /// Adds to the (i, j) entry (the (j, i) mirror is implicit).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(hi - lo <= self.bw);
        self.data[(hi - lo) * self.n + lo] += v;
    }

    /// self + s·other, requiring identical layout.
    pub fn add_scaled(&self, s: f64, other: &SymBandMatrix) -> Result<SymBandMatrix> {
        if self.n != other.n || self.bw != other.bw {
            return Err(Error::invalid("band layout mismatch"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + s * b)
            .collect();
        Ok(SymBandMatrix { n: self.n, bw: self.bw, data })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            // diagonal
            y[j] += self.data[j] * x[j];
            let top = (j + self.bw).min(self.n - 1);
            for i in j + 1..=top {
                let v = self.data[(i - j) * self.n + j];
                y[i] += v * x[j];
                y[j] += v * x[i];
            }
        }
        y
    }

    /// Banded Cholesky A = L Lᵀ (unblocked, LAPACK pbtrf-style).
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let mut l = self.data.clone();
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = l[j];
            for k in lo..j {
                let v = l[(j - k) * n + k];
                d -= v * v;
            }
            if d <= 0.0 {
                return Err(Error::solver(format!(
                    "matrix not positive definite at pivot {j} (d = {d:.3e})"
                )));
            }
            let dj = d.sqrt();
            l[j] = dj;
            let top = (j + bw).min(n - 1);
            for i in j + 1..=top {
                let mut s = l[(i - j) * n + j];
                let lo_i = i.saturating_sub(bw).max(lo);
                for k in lo_i..j {
                    s -= l[(i - k) * n + k] * l[(j - k) * n + k];
                }
                l[(i - j) * n + j] = s / dj;
            }
        }
        Ok(BandCholesky { n, bw, l })
    }

    /// Dense copy (for the guarded dense eigensolver).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for i in j..=(j + self.bw).min(self.n - 1) {
                let v = self.data[(i - j) * self.n + j];
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Coordinate-format text export: one `row col value` line per stored
    /// nonzero of the lower triangle, 0-based indices.
    pub fn write_coo<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        for j in 0..self.n {
            for i in j..=(j + self.bw).min(self.n - 1) {
                let v = self.data[(i - j) * self.n + j];
                if v != 0.0 {
                    w.write_all(
                        format!("{} {} {}\n", i, j, crate::lab::format_float(v)).as_bytes(),
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Factored form; immutable and safe to share across threads.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let bw = self.bw;
        let mut y = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.l[(i - k) * n + k] * y[k];
            }
            y[i] = s / self.l[i];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let top = (i + bw).min(n - 1);
            let mut s = y[i];
            for k in i + 1..=top {
                s -= self.l[(k - i) * n + i] * y[k];
            }
            y[i] = s / self.l[i];
        }
        y
    }
}

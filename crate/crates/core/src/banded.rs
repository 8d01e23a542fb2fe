//! Band matrices with an LU factorization using partial pivoting.
//!
//! Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl`
//! super-diagonals hold fill-in from row exchanges.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandError {
    #[error("matrix is singular: zero pivot in column {pivot}")]
    Singular { pivot: usize },
    #[error("entry ({row}, {col}) lies outside the band (kl = {kl}, ku = {ku})")]
    OutsideBand {
        row: usize,
        col: usize,
        kl: usize,
        ku: usize,
    },
    #[error("right-hand side has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `(kl, ku)`: sub- and super-diagonal counts.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        row * self.width + (col + self.kl - row)
    }

    fn in_band(&self, row: usize, col: usize) -> bool {
        row < self.n && col < self.n && col + self.kl >= row && col <= row + self.ku
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if self.in_band(row, col) {
            self.data[self.slot(row, col)]
        } else {
            0.0
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) -> Result<(), BandError> {
        if !self.in_band(row, col) {
            return Err(BandError::OutsideBand {
                row,
                col,
                kl: self.kl,
                ku: self.ku,
            });
        }
        let s = self.slot(row, col);
        self.data[s] += value;
        Ok(())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + 1).min(self.n);
                (lo..hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Factorizes in place of a copy; the original is untouched.
    pub fn factorize(&self) -> Result<BandLu, BandError> {
        let mut a = self.clone();
        let n = a.n;
        let reach = a.kl + a.ku;
        let mut pivots = Vec::with_capacity(n);
        let scale = a.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = scale * n as f64 * f64::EPSILON * 1e-3;

        for k in 0..n {
            let last_row = (k + a.kl + 1).min(n);
            let mut p = k;
            let mut best = a.data[a.slot(k, k)].abs();
            for i in k + 1..last_row {
                let v = a.data[a.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(BandError::Singular { pivot: k });
            }
            pivots.push(p);
            let last_col = (k + reach + 1).min(n);
            if p != k {
                for j in k..last_col {
                    let (s1, s2) = (a.slot(k, j), a.slot(p, j));
                    a.data.swap(s1, s2);
                }
            }
            let diag = a.data[a.slot(k, k)];
            for i in k + 1..last_row {
                let sik = a.slot(i, k);
                let l = a.data[sik] / diag;
                a.data[sik] = l;
                if l != 0.0 {
                    for j in k + 1..last_col {
                        let upd = l * a.data[a.slot(k, j)];
                        let sij = a.slot(i, j);
                        a.data[sij] -= upd;
                    }
                }
            }
        }
        Ok(BandLu { lu: a, pivots })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, BandError> {
        let a = &self.lu;
        let n = a.n;
        if rhs.len() != n {
            return Err(BandError::DimensionMismatch {
                got: rhs.len(),
                expected: n,
            });
        }
        let mut x = rhs.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            for i in k + 1..(k + a.kl + 1).min(n) {
                x[i] -= a.data[a.slot(i, k)] * xk;
            }
        }
        let reach = a.kl + a.ku;
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..(k + reach + 1).min(n) {
                s -= a.data[a.slot(k, j)] * x[j];
            }
            x[k] = s / a.data[a.slot(k, k)];
        }
        Ok(x)
    }
}

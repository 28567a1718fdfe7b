//! Square band matrices with an in-place LU factorization (no pivoting).
//!
//! Every matrix factored here is a shifted diffusion operator `I + dt (A + D)`,
//! so elimination without row exchanges keeps the fill inside the band.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) <= self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    fn cols(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.bw)..(i + self.bw + 1).min(self.n)
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.cols(i).map(|j| self.data[self.idx(i, j)] * x[j]).sum();
        }
    }

    /// `alpha * self + diag(shift)`, with `shift` applied on the diagonal.
    pub fn scaled_plus_diagonal(&self, alpha: f64, shift: impl Fn(usize) -> f64) -> Self {
        let mut out = Self {
            data: self.data.iter().map(|v| alpha * v).collect(),
            ..*self
        };
        for i in 0..self.n {
            let k = out.idx(i, i);
            out.data[k] += shift(i);
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.cols(i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let scale = self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if !(pivot.abs() > 1e-14 * scale) {
                return Err(Error::SingularPivot { row: k });
            }
            let end = (k + self.bw + 1).min(n);
            for i in k + 1..end {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..end {
                    let kj = self.idx(k, j);
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * self.data[kj];
                }
            }
        }
        Ok(BandLu { lu: self })
    }
}

/// Packed `L U` factors; `L` has unit diagonal.
#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.lu;
        let n = m.n;
        for i in 0..n {
            let lo = i.saturating_sub(m.bw);
            let mut s = b[i];
            for j in lo..i {
                s -= m.data[m.idx(i, j)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + m.bw + 1).min(n);
            let mut s = b[i];
            for j in i + 1..hi {
                s -= m.data[m.idx(i, j)] * b[j];
            }
            b[i] = s / m.data[m.idx(i, i)];
        }
    }

    /// Solves `Aᵀ x = b` with the factors of `A = L U`.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let m = &self.lu;
        let n = m.n;
        // Uᵀ w = b
        for i in 0..n {
            let lo = i.saturating_sub(m.bw);
            let mut s = b[i];
            for j in lo..i {
                s -= m.data[m.idx(j, i)] * b[j];
            }
            b[i] = s / m.data[m.idx(i, i)];
        }
        // Lᵀ x = w
        for i in (0..n).rev() {
            let hi = (i + m.bw + 1).min(n);
            let mut s = b[i];
            for j in i + 1..hi {
                s -= m.data[m.idx(j, i)] * b[j];
            }
            b[i] = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, bw: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                let v = if i == j {
                    4.0 + i as f64 * 0.1
                } else {
                    ((i * 7 + j * 3) % 5) as f64 * 0.2 - 0.4
                };
                a.add(i, j, v);
            }
        }
        a
    }

    #[test]
    fn solves_and_transpose_solves() {
        let a = sample(17, 3);
        let x: Vec<f64> = (0..17).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; 17];
        a.matvec(&x, &mut b);
        let lu = a.clone().factor().unwrap();
        let mut sol = b.clone();
        lu.solve_in_place(&mut sol);
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-12);
        }
        // Aᵀ x
        let mut bt = vec![0.0; 17];
        for i in 0..17 {
            bt[i] = (0..17).map(|j| a.get(j, i) * x[j]).sum();
        }
        lu.solve_transpose_in_place(&mut bt);
        for (s, e) in bt.iter().zip(&x) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = BandMatrix::zeros(3, 1);
        assert!(matches!(a.factor(), Err(Error::SingularPivot { row: 0 })));
    }
}

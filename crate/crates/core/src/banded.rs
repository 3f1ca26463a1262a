//! Square band matrices with an in-place LU factorization without pivoting.
//!
//! Only used for operators whose symmetric part is positive definite, where
//! elimination without pivoting is well defined and every pivot is positive.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub(crate) struct BandMatrix {
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

    #[inline]
    fn slot(&self, r: usize, c: usize) -> usize {
        debug_assert!(r.abs_diff(c) <= self.bw);
        r * (2 * self.bw + 1) + c + self.bw - r
    }

    #[cfg(test)]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        if r.abs_diff(c) > self.bw {
            0.0
        } else {
            self.data[self.slot(r, c)]
        }
    }

    pub fn set(&mut self, r: usize, c: usize, x: f64) {
        let s = self.slot(r, c);
        self.data[s] = x;
    }

    #[cfg(test)]
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        (0..n)
            .map(|r| {
                let lo = r.saturating_sub(bw);
                let hi = (r + bw + 1).min(n);
                (lo..hi).map(|c| self.data[self.slot(r, c)] * x[c]).sum()
            })
            .collect()
    }

    /// Doolittle factorization in place. Fails on a pivot that is not
    /// strictly positive.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        for k in 0..n {
            let pivot = self.data[k * w + bw];
            if !(pivot > 0.0 && pivot.is_finite()) {
                return Err(Error::Invariant(format!(
                    "band LU pivot {pivot:e} at row {k}: operator is not positive definite"
                )));
            }
            let hi = (k + bw + 1).min(n);
            for i in k + 1..hi {
                let ik = i * w + k + bw - i;
                let l = self.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = l;
                // Row k entries k+1..hi sit at k*w + (j + bw - k).
                let (head, tail) = self.data.split_at_mut(i * w);
                let krow = &head[k * w..k * w + w];
                let irow = &mut tail[..w];
                for j in k + 1..hi {
                    irow[j + bw - i] -= l * krow[j + bw - k];
                }
            }
        }
        Ok(BandLu { m: self })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.m.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.m.n, self.m.bw);
        let w = 2 * bw + 1;
        let d = &self.m.data;
        let mut x = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for (k, xk) in x.iter().enumerate().take(i).skip(lo) {
                s -= d[i * w + k + bw - i] * xk;
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = x[i];
            for (j, xj) in x.iter().enumerate().take(hi).skip(i + 1) {
                s -= d[i * w + j + bw - i] * xj;
            }
            x[i] = s / d[i * w + bw];
        }
        x
    }
}

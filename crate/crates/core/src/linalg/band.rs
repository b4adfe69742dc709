//! Banded matrices with partial-pivoting LU and symmetric inertia counts.
//!
//! Storage is row-wise: row `i` keeps columns `i - kl ..= i + kl + ku`, the
//! extra `kl` super-diagonals absorbing fill-in from row interchanges.

use nalgebra::{ComplexField, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: ComplexField<RealField = f64> + Copy> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.kl + self.ku {
            None
        } else {
            Some(i * self.width + (j + self.kl - i))
        }
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i >= self.n || j >= self.n || !self.in_band(i, j) {
            return T::zero();
        }
        self.data[self.slot(i, j).unwrap()]
    }

    /// Adds `value` to entry `(i, j)`. Panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, value: T) {
        assert!(
            i < self.n && j < self.n && self.in_band(i, j),
            "entry ({i},{j}) outside band (kl={}, ku={})",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j).unwrap();
        self.data[s] += value;
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        assert!(i < self.n && j < self.n && self.in_band(i, j));
        let s = self.slot(i, j).unwrap();
        self.data[s] = value;
    }

    pub fn add_diagonal(&mut self, shift: T) {
        for i in 0..self.n {
            self.add(i, i, shift);
        }
    }

    pub fn mul_vec(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.n);
        let mut y = DVector::from_element(self.n, T::zero());
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = T::zero();
            for j in lo..=hi {
                acc += self.data[self.slot(i, j).unwrap()] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// Largest absolute difference between `A` and `A^T` over the band.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let hi = (i + self.ku).min(self.n - 1);
            for j in i..=hi {
                let d = (self.get(i, j) - self.get(j, i)).modulus();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    /// Row-sum infinity norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).modulus()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_complex(&self) -> BandMatrix<Complex64> {
        let mut out = BandMatrix::<Complex64>::zeros(self.n, self.kl, self.ku);
        for (dst, src) in out.data.iter_mut().zip(&self.data) {
            *dst = Complex64::new(src.real(), src.imaginary());
        }
        out
    }

    /// LU factorization with partial (row) pivoting.
    pub fn lu(&self) -> Result<BandLu<T>> {
        let mut a = self.clone();
        let n = a.n;
        let kl = a.kl;
        let reach = kl + a.ku;
        let mut piv = vec![0usize; n];
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a.get(k, k).modulus();
            for i in k + 1..=last_row {
                let m = a.data[a.slot(i, k).unwrap()].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best <= scale * 1e-300 || !best.is_finite() {
                return Err(Error::SingularMatrix { pivot: k });
            }
            piv[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let sk = a.slot(k, j).unwrap();
                    let sp = a.slot(p, j).unwrap();
                    a.data.swap(sk, sp);
                }
            }
            let pivot = a.data[a.slot(k, k).unwrap()];
            for i in k + 1..=last_row {
                let sik = a.slot(i, k).unwrap();
                let l = a.data[sik] / pivot;
                a.data[sik] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let skj = a.slot(k, j).unwrap();
                    let sij = a.slot(i, j).unwrap();
                    let ukj = a.data[skj];
                    a.data[sij] -= l * ukj;
                }
            }
        }
        Ok(BandLu { factors: a, piv })
    }
}

impl BandMatrix<f64> {
    /// Number of eigenvalues strictly below `shift` for a symmetric matrix,
    /// from the signs of the pivots of an unpivoted `LDL^T` of `A - shift`.
    /// Returns `None` when a pivot is too small for the count to be trusted.
    pub fn count_below(&self, shift: f64) -> Option<usize> {
        let n = self.n;
        let b = self.kl.max(self.ku);
        let scale = self.max_abs().max(shift.abs()).max(1.0);
        // Dense-in-band working copy of the upper triangle, rows of width b+1.
        let w = b + 1;
        let mut u = vec![0.0f64; n * w];
        for i in 0..n {
            for d in 0..w {
                let j = i + d;
                if j < n {
                    u[i * w + d] = self.get(i, j);
                }
            }
            u[i * w] -= shift;
        }
        let mut negatives = 0;
        for k in 0..n {
            let pivot = u[k * w];
            if pivot.abs() < scale * 1e-14 || !pivot.is_finite() {
                return None;
            }
            if pivot < 0.0 {
                negatives += 1;
            }
            for di in 1..w {
                let i = k + di;
                if i >= n {
                    break;
                }
                let l = u[k * w + di] / pivot;
                if l == 0.0 {
                    continue;
                }
                for dj in di..w {
                    let j = k + dj;
                    if j >= n {
                        break;
                    }
                    u[i * w + (j - i)] -= l * u[k * w + dj];
                }
            }
        }
        Some(negatives)
    }
}

#[derive(Debug, Clone)]
pub struct BandLu<T> {
    factors: BandMatrix<T>,
    piv: Vec<usize>,
}

impl<T: ComplexField<RealField = f64> + Copy> BandLu<T> {
    pub fn n(&self) -> usize {
        self.factors.n
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let a = &self.factors;
        let n = a.n;
        assert_eq!(b.len(), n);
        let mut x = b.clone();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap_rows(k, p);
            }
            let xk = x[k];
            if xk == T::zero() {
                continue;
            }
            let last_row = (k + a.kl).min(n - 1);
            for i in k + 1..=last_row {
                let l = a.data[a.slot(i, k).unwrap()];
                x[i] -= l * xk;
            }
        }
        let reach = a.kl + a.ku;
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = x[k];
            for j in k + 1..=last_col {
                acc -= a.data[a.slot(k, j).unwrap()] * x[j];
            }
            x[k] = acc / a.data[a.slot(k, k).unwrap()];
        }
        x
    }
}

//! Numerical building blocks shared by the spectral and resolvent layers.

pub mod band;
pub mod lanczos;

pub use band::{BandLu, BandMatrix};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;

/// Grid inner product `h * sum(conj(a_i) b_i)`.
pub fn inner(h: f64, a: &DVector<C64>, b: &DVector<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum::<C64>() * h
}

pub fn inner_real(h: f64, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) * h
}

pub fn norm(h: f64, a: &DVector<C64>) -> f64 {
    (a.iter().map(|v| v.norm_sqr()).sum::<f64>() * h).sqrt()
}

pub fn norm_real(h: f64, a: &DVector<f64>) -> f64 {
    (a.norm_squared() * h).sqrt()
}

pub fn complexify(v: &DVector<f64>) -> DVector<C64> {
    v.map(|x| C64::new(x, 0.0))
}

pub fn real_part(v: &DVector<C64>) -> DVector<f64> {
    v.map(|x| x.re)
}

pub fn imag_part(v: &DVector<C64>) -> DVector<f64> {
    v.map(|x| x.im)
}

/// Polynomial (Neville) extrapolation of vector samples `values[k]` taken at
/// `eps[k]` to `eps = 0`. Returns the full-order estimate and the relative
/// gap to the estimate that drops the largest `eps`.
pub fn extrapolate_to_zero(eps: &[f64], values: &[DVector<C64>]) -> (DVector<C64>, f64) {
    assert_eq!(eps.len(), values.len());
    assert!(!eps.is_empty());
    let neville = |nodes: &[f64], vals: &[DVector<C64>]| -> DVector<C64> {
        let mut p: Vec<DVector<C64>> = vals.to_vec();
        let k = nodes.len();
        for level in 1..k {
            for i in 0..k - level {
                let (xi, xj) = (nodes[i], nodes[i + level]);
                // value at 0 of the interpolant through nodes i..=i+level
                let w = C64::new(1.0 / (xi - xj), 0.0);
                let next = (&p[i + 1] * C64::new(xi, 0.0) - &p[i] * C64::new(xj, 0.0)) * w;
                p[i] = next;
            }
        }
        p.swap_remove(0)
    };
    let full = neville(eps, values);
    if eps.len() < 2 {
        return (full, f64::INFINITY);
    }
    let reduced = neville(&eps[1..], &values[1..]);
    let scale = full.norm().max(f64::MIN_POSITIVE);
    let gap = (&full - &reduced).norm() / scale;
    (full, gap)
}

/// Singular values of a complex matrix, descending.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Number of singular values at or above `rel * s_max`.
pub fn numerical_rank(sv: &[f64], rel: f64) -> usize {
    match sv.first() {
        None => 0,
        Some(&smax) if smax == 0.0 => 0,
        Some(&smax) => sv.iter().filter(|&&s| s >= rel * smax).count(),
    }
}

/// Greedy column selection by modified Gram-Schmidt with column pivoting.
/// Returns the chosen column indices (largest residual first) and the
/// residual norms at the moment each was picked.
pub fn pivoted_columns(h: f64, cols: &[DVector<C64>], take: usize) -> (Vec<usize>, Vec<f64>) {
    let mut work: Vec<DVector<C64>> = cols.to_vec();
    let mut chosen = Vec::new();
    let mut pivots = Vec::new();
    let mut used = vec![false; cols.len()];
    for _ in 0..take.min(cols.len()) {
        let (best, best_norm) = work
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, v)| (i, norm(h, v)))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == usize::MAX {
            break;
        }
        used[best] = true;
        chosen.push(best);
        pivots.push(best_norm);
        if best_norm == 0.0 {
            continue;
        }
        let q = &work[best] / C64::new(best_norm, 0.0);
        for (i, v) in work.iter_mut().enumerate() {
            if !used[i] {
                let c = inner(h, &q, v);
                *v -= &q * c;
            }
        }
    }
    (chosen, pivots)
}

/// Largest principal-angle sine between the column spans of `a` and `b`
/// (both given as lists of vectors, orthonormalized internally).
pub fn span_distance(h: f64, a: &[DVector<C64>], b: &[DVector<C64>]) -> f64 {
    let orth = |vs: &[DVector<C64>]| -> Vec<DVector<C64>> {
        let mut out: Vec<DVector<C64>> = Vec::new();
        for v in vs {
            let mut w = v.clone();
            for _ in 0..2 {
                for q in &out {
                    let c = inner(h, q, &w);
                    w -= q * c;
                }
            }
            let n = norm(h, &w);
            if n > 1e-300 {
                out.push(w / C64::new(n, 0.0));
            }
        }
        out
    };
    let qa = orth(a);
    let qb = orth(b);
    let mut worst: f64 = 0.0;
    for v in &qb {
        let mut r = v.clone();
        for q in &qa {
            let c = inner(h, q, &r);
            r -= q * c;
        }
        worst = worst.max(norm(h, &r));
    }
    worst
}

/// Greedy row pivots of the matrix whose columns are `cols`: each step takes
/// the row of largest residual norm, preferring the lowest index among rows
/// within a relative `tie` of the maximum, then projects that row out.
pub fn pivot_rows(cols: &[DVector<f64>], tie: f64) -> Vec<usize> {
    let n = cols.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = cols[0].len();
    let mut rows: Vec<Vec<f64>> = (0..dim).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
    let mut chosen = Vec::with_capacity(n);
    for _ in 0..n {
        let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let max = norms.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            break;
        }
        let pick = norms.iter().position(|&v| v >= (1.0 - tie) * max).unwrap();
        chosen.push(pick);
        let q: Vec<f64> = rows[pick].iter().map(|x| x / norms[pick]).collect();
        for r in rows.iter_mut() {
            let c: f64 = r.iter().zip(&q).map(|(a, b)| a * b).sum();
            for (x, y) in r.iter_mut().zip(&q) {
                *x -= c * y;
            }
        }
    }
    chosen
}

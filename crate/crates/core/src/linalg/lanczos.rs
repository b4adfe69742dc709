//! All eigenpairs of a real symmetric band matrix inside an interval.
//!
//! The count comes from Sylvester inertia at the interval ends; the pairs
//! come from shift-invert Lanczos with full reorthogonalization, polished by
//! inverse iteration and locked. Repeated passes started orthogonal to the
//! locked vectors pick up every copy of a degenerate eigenvalue.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::band::BandMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Euclidean unit vector.
    pub vector: DVector<f64>,
    /// `||A v - value v||_2`.
    pub residual: f64,
}

const MAX_PASSES: usize = 12;

/// Inertia count at `x`, nudged by `toward` (+1 or -1) when `x` sits on
/// an eigenvalue so that the count refers to the open interval.
fn count_below_robust(a: &BandMatrix<f64>, x: f64, toward: f64) -> Result<usize> {
    let scale = x.abs().max(1.0);
    for k in 0..20 {
        let nudge = scale * 1e-11 * (k as f64) * toward;
        if let Some(c) = a.count_below(x + nudge) {
            return Ok(c);
        }
    }
    Err(Error::EigenSolver(format!("inertia count failed near {x}")))
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
}

fn shifted(a: &BandMatrix<f64>, shift: f64) -> BandMatrix<f64> {
    let mut m = a.clone();
    m.add_diagonal(-shift);
    m
}

/// Eigenpairs of symmetric `a` with eigenvalues in the open interval `(lo, hi)`,
/// sorted ascending.
pub fn eigenpairs_in_interval(
    a: &BandMatrix<f64>,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<Vec<EigenPair>> {
    let n = a.n();
    if !(hi > lo) {
        return Err(Error::EigenSolver(format!("empty interval ({lo}, {hi})")));
    }
    let expected = count_below_robust(a, hi, -1.0)?.saturating_sub(count_below_robust(a, lo, 1.0)?);
    if expected == 0 {
        return Ok(Vec::new());
    }
    let anorm = a.norm_inf().max(1.0);
    let accept_tol = 1e-9 * anorm;

    let mut sigma = 0.5 * (lo + hi);
    let mut lu_sigma = None;
    for k in 0..10 {
        let trial = sigma + (hi - lo) * 1e-7 * k as f64;
        if let Ok(f) = shifted(a, trial).lu() {
            sigma = trial;
            lu_sigma = Some(f);
            break;
        }
    }
    let lu_sigma = lu_sigma.ok_or_else(|| Error::EigenSolver("shift factorization failed".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locked: Vec<EigenPair> = Vec::new();
    let mut locked_vecs: Vec<DVector<f64>> = Vec::new();

    for pass in 0..MAX_PASSES {
        let free_dim = n - locked_vecs.len();
        if free_dim == 0 {
            break;
        }
        let kmax = free_dim.min((80 + 8 * expected + 20 * pass).max(20));
        let mut start = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        orthogonalize(&mut start, &locked_vecs);
        let nrm = start.norm();
        if nrm == 0.0 {
            break;
        }
        start /= nrm;

        let mut q: Vec<DVector<f64>> = vec![start];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..kmax {
            let mut w = lu_sigma.solve(&q[j]);
            orthogonalize(&mut w, &locked_vecs);
            let aj = q[j].dot(&w);
            alpha.push(aj);
            // full reorthogonalization against the Krylov basis
            orthogonalize(&mut w, &q);
            let bj = w.norm();
            if j + 1 == kmax || bj < 1e-13 * aj.abs().max(1e-300) {
                break;
            }
            beta.push(bj);
            q.push(w / bj);
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j || j + 1 == i {
                beta[i.min(j)]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let mut candidates: Vec<(f64, usize)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, th)| th.abs() > 0.0)
            .map(|(i, th)| (*th, i))
            .filter(|(th, _)| {
                let lam = sigma + 1.0 / th;
                lam > lo && lam < hi
            })
            .collect();
        candidates.sort_by(|x, y| y.0.abs().partial_cmp(&x.0.abs()).unwrap());

        for (theta, idx) in candidates {
            let mut lam = sigma + 1.0 / theta;
            let s = eig.eigenvectors.column(idx);
            let mut v = DVector::zeros(n);
            for (i, qi) in q.iter().enumerate().take(k) {
                v.axpy(s[i], qi, 1.0);
            }
            orthogonalize(&mut v, &locked_vecs);
            if v.norm() < 1e-8 {
                continue;
            }
            v.normalize_mut();
            // inverse-iteration polish at the Ritz value
            let mut residual = f64::INFINITY;
            let mut factor = None;
            for t in 0..6 {
                if let Ok(f) = shifted(a, lam + anorm * 1e-15 * t as f64).lu() {
                    factor = Some(f);
                    break;
                }
            }
            let Some(factor) = factor else { continue };
            for _ in 0..4 {
                let mut x = factor.solve(&v);
                orthogonalize(&mut x, &locked_vecs);
                let xn = x.norm();
                if xn == 0.0 || !xn.is_finite() {
                    break;
                }
                v = x / xn;
                let av = a.mul_vec(&v);
                lam = v.dot(&av);
                let r = (&av - &v * lam).norm();
                if r >= residual * 0.9 && r < accept_tol {
                    residual = r;
                    break;
                }
                residual = r;
            }
            if residual <= accept_tol && lam > lo && lam < hi {
                locked_vecs.push(v.clone());
                locked.push(EigenPair { value: lam, vector: v, residual });
            }
            if locked.len() >= expected {
                break;
            }
        }
        if locked.len() >= expected {
            break;
        }
    }
    if locked.len() < expected {
        return Err(Error::EigenSolver(format!(
            "found {} of {expected} eigenvalues in ({lo}, {hi})",
            locked.len()
        )));
    }
    locked.sort_by(|x, y| x.value.partial_cmp(&y.value).unwrap());
    Ok(locked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> BandMatrix<f64> {
        let mut m = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            m.set(i, i, 2.0);
            if i + 1 < n {
                m.set(i, i + 1, -1.0);
                m.set(i + 1, i, -1.0);
            }
        }
        m
    }

    #[test]
    fn finds_all_laplacian_eigenvalues_in_interval() {
        let n = 200;
        let m = laplacian(n);
        let exact: Vec<f64> = (1..=n)
            .map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos())
            .filter(|&e| e > 1.0 && e < 1.2)
            .collect();
        let got = eigenpairs_in_interval(&m, 1.0, 1.2, 1).unwrap();
        assert_eq!(got.len(), exact.len());
        for (g, e) in got.iter().zip(&exact) {
            assert!((g.value - e).abs() < 1e-12);
            assert!(g.residual < 1e-10);
        }
    }

    #[test]
    fn recovers_degenerate_pairs() {
        // two decoupled copies of the same chain, interleaved
        let n = 60;
        let mut m = BandMatrix::zeros(2 * n, 2, 2);
        for i in 0..n {
            for c in 0..2 {
                let r = 2 * i + c;
                m.set(r, r, 2.0);
                if i + 1 < n {
                    m.set(r, r + 2, -1.0);
                    m.set(r + 2, r, -1.0);
                }
            }
        }
        let got = eigenpairs_in_interval(&m, 0.5, 0.8, 3).unwrap();
        let single = eigenpairs_in_interval(&laplacian(n), 0.5, 0.8, 3).unwrap();
        assert_eq!(got.len(), 2 * single.len());
        for pair in got.chunks(2) {
            assert!((pair[0].value - pair[1].value).abs() < 1e-12);
            assert!(pair[0].vector.dot(&pair[1].vector).abs() < 1e-10);
        }
    }
}

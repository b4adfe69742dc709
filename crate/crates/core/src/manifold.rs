//! The zero set of the Fermi map near `W = 0`: splitting of coefficient
//! space, the corrector solve, path tracing and off-manifold probing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complexify, inner, norm, C64};
use crate::operator::Branch;
use crate::problem::EmbeddedProblem;
use crate::resolvent::{eigenvalue_criterion, BoundaryResolvent, Method};

/// Coefficient space split as `c = N xi + T eta`, where the columns of `N`
/// span the kernel of the first-order Fermi matrix `J` and `T` is its
/// pseudo-inverse, so `J T = I`.
#[derive(Debug, Clone)]
pub struct SplitBasis {
    pub null: DMatrix<f64>,
    pub transverse: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl SplitBasis {
    pub fn coeffs(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        &self.null * xi + &self.transverse * eta
    }

    pub fn tangent_dim(&self) -> usize {
        self.null.ncols()
    }

    pub fn codim(&self) -> usize {
        self.transverse.ncols()
    }
}

/// Splits the coefficient space of a `r x p` matrix of full row rank `r`.
pub fn split_basis(j: &DMatrix<f64>, rel_tol: f64) -> Result<SplitBasis> {
    let (r, p) = j.shape();
    if r > p {
        return Err(Error::RankDeficient { rank: p, expected: r });
    }
    // pad to square so the SVD returns a full right basis
    let mut sq = DMatrix::zeros(p, p);
    sq.view_mut((0, 0), (r, p)).copy_from(j);
    let svd = sq.svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::EigenSolver("SVD failed".into()))?;
    let vt = svd.v_t.as_ref().ok_or_else(|| Error::EigenSolver("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > rel_tol * top && s > 0.0).count();
    if rank < r {
        return Err(Error::RankDeficient { rank, expected: r });
    }
    let null = DMatrix::from_fn(p, p - r, |i, k| vt[(order[r + k], i)]);
    // T = V_r S_r^-1 U_r^T restricted to the first r rows of the padded system
    let mut t = DMatrix::zeros(p, r);
    for (a, &col) in order.iter().take(r).enumerate() {
        let s = sv[a];
        for i in 0..p {
            for jr in 0..r {
                t[(i, jr)] += vt[(col, i)] * u[(jr, col)] / s;
            }
        }
    }
    Ok(SplitBasis { null, transverse: t, singular_values: sv[..r.min(sv.len())].to_vec() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Refresh the chord matrix when one step reduces `||F||` by less than this factor.
    pub refresh_ratio: f64,
    /// Relative step of the finite-difference refresh.
    pub fd_step: f64,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 30, refresh_ratio: 0.5, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldPoint {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub lambda: f64,
    pub fermi_norm: f64,
    pub iterations: usize,
    pub refreshes: usize,
    pub eigen_residual: f64,
    pub eigvec_imag: f64,
    pub q_gap: f64,
}

/// Solves `F(N xi + T eta) = 0` for `eta` by a chord iteration on `J T`.
pub fn solve_eta(
    problem: &EmbeddedProblem,
    split: &SplitBasis,
    xi: &DVector<f64>,
    eta0: &DVector<f64>,
    opts: &ManifoldOptions,
) -> Result<ManifoldPoint> {
    let setup = problem.setup();
    let r = split.codim();
    let mut chord = DMatrix::<f64>::identity(r, r);
    let mut eta = eta0.clone();
    let mut guess = problem.spec.lambda0;
    let mut val = setup.fermi_map_from(&problem.frame, &split.coeffs(xi, &eta), guess)?;
    guess = val.lambda.lambda_of_w;
    let mut iterations = 0;
    let mut refreshes = 0;
    let mut just_refreshed = false;
    while val.norm() > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: val.norm() });
        }
        iterations += 1;
        let step = chord
            .clone()
            .lu()
            .solve(&val.vector())
            .ok_or(Error::SingularMatrix { pivot: 0 })?;
        let trial = &eta - step;
        let next = setup.fermi_map_from(&problem.frame, &split.coeffs(xi, &trial), guess);
        let accept = match &next {
            Ok(n) => n.norm() <= opts.refresh_ratio * val.norm(),
            Err(_) => false,
        };
        if !accept && !just_refreshed {
            let c = split.coeffs(xi, &eta);
            let jfd = setup.fermi_jacobian_fd(&problem.frame, &c, opts.fd_step)?;
            chord = jfd * &split.transverse;
            refreshes += 1;
            just_refreshed = true;
            continue;
        }
        let next = next?;
        if next.norm() >= val.norm() {
            return Err(Error::NoConvergence { iterations, residual: val.norm() });
        }
        just_refreshed = false;
        eta = trial;
        val = next;
        guess = val.lambda.lambda_of_w;
    }
    let coeffs = split.coeffs(xi, &eta);
    let ev = eigenvector_on_manifold(problem, &coeffs, guess)?;
    let crit = eigenvalue_criterion(&problem.spec, &problem.perturbed_hbar(&coeffs)?, guess, 1e-6)?;
    Ok(ManifoldPoint {
        xi: xi.iter().copied().collect(),
        eta: eta.iter().copied().collect(),
        coeffs: coeffs.iter().copied().collect(),
        lambda: guess,
        fermi_norm: val.norm(),
        iterations,
        refreshes,
        eigen_residual: ev.residual,
        eigvec_imag: ev.imag_max,
        q_gap: crit.q_eigengap,
    })
}

#[derive(Debug, Clone)]
pub struct ManifoldEigenvector {
    /// Normalized, phase fixed by `<psi_1, psi_W> > 0`.
    pub vector: DVector<C64>,
    /// `||(H + W - lambda) psi_W||` with transparent rows at `lambda`.
    pub residual: f64,
    /// Largest imaginary entry after phase normalization.
    pub imag_max: f64,
}

/// `psi_W = psi_1 - R_W(lambda + i0) W psi_1`, the eigenvector of `H + W`
/// at a manifold point.
pub fn eigenvector_on_manifold(problem: &EmbeddedProblem, coeffs: &DVector<f64>, lambda: f64) -> Result<ManifoldEigenvector> {
    let w = problem.basis.combine(coeffs)?;
    let hbar_w = problem.hbar.add_multiplication(&w)?;
    let lay = &problem.hbar.layout;
    let h = problem.spec.h;
    let psi1 = complexify(problem.spec.psi1());
    let br = BoundaryResolvent::new(&hbar_w, lambda, Branch::Plus, Method::RadiationBC)?;
    let y = br.resolve(&lay.multiply_complex(&w, &psi1))?;
    let mut v = &psi1 - y;
    let ov = inner(h, &psi1, &v);
    let phase = if ov.norm() > 0.0 { ov.conj() / ov.norm() } else { C64::new(1.0, 0.0) };
    v *= phase;
    let nv = norm(h, &v);
    v /= C64::new(nv, 0.0);
    let h_w = problem.h_op.add_multiplication(&w)?;
    let res = h_w.apply_shifted_radiation(C64::new(lambda, 0.0), Branch::Plus, &v);
    let imag_max = v.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    Ok(ManifoldEigenvector { residual: norm(h, &res), vector: v, imag_max })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceResult {
    pub points: Vec<ManifoldPoint>,
    pub complete: bool,
    pub error: Option<String>,
}

/// Follows the manifold along `xi = s * direction`, `s = ds, 2 ds, ...`,
/// with a secant predictor for `eta`. Stops at the first failure and returns
/// the partial chain.
pub fn trace_manifold(
    problem: &EmbeddedProblem,
    split: &SplitBasis,
    direction: &DVector<f64>,
    ds: f64,
    steps: usize,
    opts: &ManifoldOptions,
) -> TraceResult {
    let r = split.codim();
    let mut points: Vec<ManifoldPoint> = Vec::new();
    let mut etas: Vec<DVector<f64>> = vec![DVector::zeros(r)];
    for k in 1..=steps {
        let xi = direction * (k as f64 * ds);
        let pred = if etas.len() >= 2 {
            let a = &etas[etas.len() - 1];
            let b = &etas[etas.len() - 2];
            a * 2.0 - b
        } else {
            etas[etas.len() - 1].clone()
        };
        match solve_eta(problem, split, &xi, &pred, opts) {
            Ok(p) => {
                etas.push(DVector::from_vec(p.eta.clone()));
                points.push(p);
            }
            Err(e) => {
                return TraceResult { points, complete: false, error: Some(format!("step {k}: {e}")) };
            }
        }
    }
    TraceResult { points, complete: true, error: None }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OffManifoldReport {
    pub min_gap: f64,
    pub argmin_lambda: f64,
    pub scanned: usize,
}

/// Minimum over `lambda` in the window of the distance of the spectrum of
/// `Q(lambda + i0, W)` to 1: a coarse scan of `samples` points followed by
/// golden-section refinement.
pub fn off_manifold_probe(problem: &EmbeddedProblem, coeffs: &DVector<f64>, samples: usize) -> Result<OffManifoldReport> {
    let op = problem.perturbed_hbar(coeffs)?;
    let (lo, hi) = problem.window;
    let gap = |lam: f64| -> Result<f64> { Ok(eigenvalue_criterion(&problem.spec, &op, lam, 0.0)?.q_eigengap) };
    let samples = samples.max(3);
    let pts: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / samples as f64)
        .collect();
    let mut vals = Vec::with_capacity(samples);
    for &p in &pts {
        vals.push(gap(p)?);
    }
    let best = (0..samples).min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap()).unwrap();
    let spacing = (hi - lo) / samples as f64;
    let (mut a, mut b) = ((pts[best] - spacing).max(lo + 1e-12), (pts[best] + spacing).min(hi - 1e-12));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = gap(x1)?;
    let mut f2 = gap(x2)?;
    for _ in 0..60 {
        if (b - a) < 1e-12 * (1.0 + a.abs()) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = gap(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = gap(x2)?;
        }
    }
    let (mut min_gap, mut arg) = if f1 < f2 { (f1, x1) } else { (f2, x2) };
    if vals[best] < min_gap {
        min_gap = vals[best];
        arg = pts[best];
    }
    Ok(OffManifoldReport { min_gap, argmin_lambda: arg, scanned: samples })
}

/// Unit-`J`-component normal direction `T e_k` (so `J T e_k = e_k`).
pub fn normal_direction(split: &SplitBasis, k: usize) -> DVector<f64> {
    split.transverse.column(k).clone_owned()
}

/// [`off_manifold_probe`] at `base + c * direction` for each magnitude `c`.
pub fn normal_scan(
    problem: &EmbeddedProblem,
    base: &DVector<f64>,
    direction: &DVector<f64>,
    magnitudes: &[f64],
    samples: usize,
) -> Result<Vec<(f64, OffManifoldReport)>> {
    magnitudes
        .iter()
        .map(|&c| Ok((c, off_manifold_probe(problem, &(base + direction * c), samples)?)))
        .collect()
}

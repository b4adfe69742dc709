//! Frame of density vectors, the implicit eigenvalue `lambda(W)`, the Fermi
//! map and its first-order matrix.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complexify, inner, pivoted_columns, C64};
use crate::operator::{Branch, DiscreteOperator, PerturbationBasis};
use crate::resolvent::{BoundaryResolvent, DensityPair, Method};
use crate::spectral::SpectralData;

/// Probes `phi_j`, densities `f_j = delta(Hbar - lambda0) phi_j` and duals
/// `g_l` with `<f_j, g_l> = delta_jl`. All vectors real.
#[derive(Debug, Clone)]
pub struct FermiFrame {
    pub probes: Vec<DVector<f64>>,
    pub densities: Vec<DVector<f64>>,
    pub duals: Vec<DVector<f64>>,
    pub m: usize,
    /// Indices of the chosen probes in the candidate list.
    pub chosen: Vec<usize>,
    /// Residual norms at the pivoted selection.
    pub pivots: Vec<f64>,
    /// Largest imaginary part discarded when making the densities real.
    pub imag_discarded: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameSummary {
    pub m: usize,
    pub chosen: Vec<usize>,
    pub pivots: Vec<f64>,
    pub biorthogonality_error: f64,
    pub imag_discarded: f64,
}

impl FermiFrame {
    /// Largest entry of `<f_j, g_l> - delta_jl`.
    pub fn biorthogonality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, f) in self.densities.iter().enumerate() {
            for (l, g) in self.duals.iter().enumerate() {
                let t = if j == l { 1.0 } else { 0.0 };
                worst = worst.max((self.h * f.dot(g) - t).abs());
            }
        }
        worst
    }

    /// Relative residual of the orthogonal projection of `v` onto span{f_j}.
    pub fn projection_residual(&self, v: &DVector<f64>) -> f64 {
        let m = self.m;
        let h = self.h;
        let g = DMatrix::from_fn(m, m, |i, j| h * self.densities[i].dot(&self.densities[j]));
        let b = DVector::from_fn(m, |i, _| h * self.densities[i].dot(v));
        let Some(c) = g.lu().solve(&b) else { return f64::INFINITY };
        let mut r = v.clone();
        for (ci, f) in c.iter().zip(&self.densities) {
            r.axpy(-ci, f, 1.0);
        }
        let nv = v.norm();
        if nv == 0.0 {
            0.0
        } else {
            r.norm() / nv
        }
    }

    pub fn summary(&self) -> FrameSummary {
        FrameSummary {
            m: self.m,
            chosen: self.chosen.clone(),
            pivots: self.pivots.clone(),
            biorthogonality_error: self.biorthogonality_error(),
            imag_discarded: self.imag_discarded,
        }
    }
}

/// Selects `m` probes with maximally independent density images and builds
/// real duals in the span of the selected probes.
pub fn build_frame(pair: &DensityPair, probes: &[DVector<f64>], m: usize) -> Result<FermiFrame> {
    let h = pair.plus.operator().h();
    let images = probes
        .par_iter()
        .map(|p| pair.apply(&complexify(p)))
        .collect::<Result<Vec<_>>>()?;
    let imag_discarded = images
        .iter()
        .flat_map(|v| v.iter().map(|c| c.im.abs()))
        .fold(0.0, f64::max);
    let (chosen, pivots) = pivoted_columns(h, &images, m);
    let top = pivots.first().copied().unwrap_or(0.0);
    let independent = pivots.iter().filter(|&&p| p > 1e-6 * top && p > 0.0).count();
    if chosen.len() < m || independent < m {
        return Err(Error::RankCollapse { rank: independent, required: m });
    }
    let phis: Vec<DVector<f64>> = chosen.iter().map(|&i| probes[i].clone()).collect();
    let fs: Vec<DVector<f64>> = chosen.iter().map(|&i| images[i].map(|c| c.re)).collect();
    // g = Phi D^{-1}, D_jk = <f_j, phi_k>
    let d = DMatrix::from_fn(m, m, |j, k| h * fs[j].dot(&phis[k]));
    let dinv = d
        .try_inverse()
        .ok_or(Error::RankCollapse { rank: m.saturating_sub(1), required: m })?;
    let duals = (0..m)
        .map(|l| {
            let mut g = DVector::zeros(phis[0].len());
            for (k, p) in phis.iter().enumerate() {
                g.axpy(dinv[(k, l)], p, 1.0);
            }
            g
        })
        .collect();
    Ok(FermiFrame { probes: phis, densities: fs, duals, m, chosen, pivots, imag_discarded, h })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSolve {
    pub lambda_of_w: f64,
    pub iterations: usize,
    /// `<psi_1, A(lambda, W) psi_1>` at the solution.
    pub a_value: f64,
    /// `d/dlambda <psi_1, A(lambda, W) psi_1>` at the solution, by centered differences.
    pub derivative_check: f64,
}

/// Everything the Fermi-map evaluations share.
pub struct FermiSetup<'a> {
    pub spec: &'a SpectralData,
    pub hbar: &'a DiscreteOperator,
    pub basis: &'a PerturbationBasis,
    pub window: (f64, f64),
}

const LAMBDA_MAX_ITER: usize = 50;
const LAMBDA_FD_STEP: f64 = 1e-6;

impl FermiSetup<'_> {
    fn perturbed(&self, coeffs: &DVector<f64>) -> Result<(DiscreteOperator, DVector<f64>)> {
        let w = self.basis.combine(coeffs)?;
        Ok((self.hbar.add_multiplication(&w)?, w))
    }

    /// `Re <psi_1, R_W(lambda + i0) W psi_1>` and the resolvent used.
    fn shift_term(&self, op: &DiscreteOperator, wpsi: &DVector<C64>, lambda: f64) -> Result<f64> {
        let br = BoundaryResolvent::in_window(op, lambda, Branch::Plus, Method::RadiationBC, self.window)?;
        let y = br.resolve(wpsi)?;
        Ok(inner(self.spec.h, &complexify(self.spec.psi1()), &y).re)
    }

    fn a_value(&self, lambda: f64, term: f64) -> f64 {
        (1.0 - term) / (self.spec.lambda0 + 1.0 - lambda)
    }

    /// Solves `<psi_1, A(lambda, W) psi_1> = 1` for `lambda` near `lambda0`.
    ///
    /// Uses `R_W psi_1 = c (psi_1 - R_W W psi_1)`, `c = 1/(lambda0 + 1 - lambda)`,
    /// which turns the equation into `lambda - lambda0 = Re <psi_1, R_W W psi_1>`.
    pub fn solve_lambda(&self, coeffs: &DVector<f64>, guess: f64) -> Result<LambdaSolve> {
        let (op, w) = self.perturbed(coeffs)?;
        let lay = &op.layout;
        let wpsi = complexify(&lay.multiply(&w, self.spec.psi1()));
        let lambda0 = self.spec.lambda0;
        let (lo, hi) = self.window;
        let f = |lam: f64| -> Result<f64> { Ok(lam - lambda0 - self.shift_term(&op, &wpsi, lam)?) };
        let mut lam = guess;
        if !(lam > lo && lam < hi) {
            return Err(Error::LeftWindow { lambda: lam });
        }
        let mut val = f(lam)?;
        // bracket for the bisection fallback, widened as values come in
        let mut bracket: (Option<(f64, f64)>, Option<(f64, f64)>) = (None, None);
        let mut iterations = 0;
        let scale = lam.abs().max(1.0);
        let mut best = (lam, val);
        while val.abs() > 1e-14 * scale {
            if iterations >= LAMBDA_MAX_ITER {
                if best.1.abs() <= 1e-9 * scale {
                    (lam, val) = best;
                    break;
                }
                return Err(Error::NoConvergence { iterations, residual: val.abs() });
            }
            iterations += 1;
            if val < 0.0 {
                bracket.0 = Some((lam, val));
            } else {
                bracket.1 = Some((lam, val));
            }
            let step = LAMBDA_FD_STEP.min(0.25 * (hi - lam).min(lam - lo));
            let d = (f(lam + step)? - f(lam - step)?) / (2.0 * step);
            let mut next = lam - val / d;
            let newton_ok = d.is_finite() && d > 0.0 && next > lo && next < hi;
            if !newton_ok {
                match bracket {
                    (Some((a, _)), Some((b, _))) => next = 0.5 * (a + b),
                    _ => return Err(Error::LeftWindow { lambda: next }),
                }
            }
            let new_val = f(next)?;
            if new_val.abs() < best.1.abs() {
                best = (next, new_val);
            }
            let converged = (next - lam).abs() <= 1e-14 * scale;
            // no further decrease at the round-off floor of the solves
            let stalled = new_val.abs() >= val.abs() && val.abs() <= 1e-9 * scale;
            (lam, val) = if stalled { best } else { (next, new_val) };
            if converged || stalled {
                break;
            }
        }
        let term = lam - lambda0 - val;
        let a_value = self.a_value(lam, term);
        let step = LAMBDA_FD_STEP.min(0.25 * (hi - lam).min(lam - lo));
        let ap = self.a_value(lam + step, self.shift_term(&op, &wpsi, lam + step)?);
        let am = self.a_value(lam - step, self.shift_term(&op, &wpsi, lam - step)?);
        Ok(LambdaSolve {
            lambda_of_w: lam,
            iterations,
            a_value,
            derivative_check: (ap - am) / (2.0 * step),
        })
    }

    /// Density rows `<g_j, delta(Hbar + W - lambda(W)) psi_1>` followed, for
    /// a degenerate eigenvalue, by `<psi_i, A(lambda(W), W) psi_1>`, `i >= 2`.
    pub fn fermi_map(&self, frame: &FermiFrame, coeffs: &DVector<f64>) -> Result<FermiValue> {
        self.fermi_map_from(frame, coeffs, self.spec.lambda0)
    }

    /// As [`FermiSetup::fermi_map`] with an explicit starting guess for `lambda(W)`.
    pub fn fermi_map_from(&self, frame: &FermiFrame, coeffs: &DVector<f64>, guess: f64) -> Result<FermiValue> {
        let ls = self.solve_lambda(coeffs, guess)?;
        let (op, w) = self.perturbed(coeffs)?;
        let lay = &op.layout;
        let h = self.spec.h;
        let lam = ls.lambda_of_w;
        let c = 1.0 / (self.spec.lambda0 + 1.0 - lam);
        let wpsi = complexify(&lay.multiply(&w, self.spec.psi1()));
        let pair = DensityPair::new(&op, lam, Method::RadiationBC)?;
        let yp = pair.plus.resolve(&wpsi)?;
        let ym = pair.minus.resolve(&wpsi)?;
        // delta_W psi_1 = -c delta_W (W psi_1), A psi_1 components = -c Re-part average
        let dens = (&yp - &ym) / C64::new(0.0, 2.0 * std::f64::consts::PI);
        let mut comps: Vec<C64> = frame
            .duals
            .iter()
            .map(|g| inner(h, &complexify(g), &dens) * (-c))
            .collect();
        for psi in self.spec.eigvecs.iter().skip(1) {
            let pc = complexify(psi);
            let a = (inner(h, &pc, &yp) + inner(h, &pc, &ym)) * 0.5;
            comps.push(a * (-c));
        }
        let imag_max = comps.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        Ok(FermiValue {
            components: comps.iter().map(|z| z.re).collect(),
            imag_max,
            lambda: ls,
        })
    }

    /// `J_jk = -<g_j, delta(Hbar - lambda0) W_k psi_1>`, stacked with
    /// `-<psi_i, W_k psi_1>` for `i >= 2`.
    pub fn fermi_jacobian(&self, frame: &FermiFrame, pair0: &DensityPair) -> Result<DMatrix<f64>> {
        let lay = &self.hbar.layout;
        let h = self.spec.h;
        let psi1 = self.spec.psi1();
        let n = self.spec.multiplicity;
        let rows = frame.m + n - 1;
        let cols = (0..self.basis.len())
            .into_par_iter()
            .map(|k| -> Result<Vec<f64>> {
                let wk = self.basis.element(k);
                let wpsi = lay.multiply(&wk, psi1);
                let d = pair0.apply_real(&wpsi)?;
                let mut col: Vec<f64> = frame.duals.iter().map(|g| -h * g.dot(&d)).collect();
                for psi in self.spec.eigvecs.iter().skip(1) {
                    col.push(-h * psi.dot(&wpsi));
                }
                Ok(col)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(rows, self.basis.len(), |i, k| cols[k][i]))
    }

    /// Centered finite differences of the Fermi map at `coeffs`, step
    /// `t (1 + ||coeffs||)`.
    pub fn fermi_jacobian_fd(&self, frame: &FermiFrame, coeffs: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let p = self.basis.len();
        let step = t * (1.0 + coeffs.norm());
        let cols = (0..p)
            .into_par_iter()
            .map(|k| -> Result<DVector<f64>> {
                let mut cp = coeffs.clone();
                let mut cm = coeffs.clone();
                cp[k] += step;
                cm[k] -= step;
                let fp = self.fermi_map(frame, &cp)?.vector();
                let fm = self.fermi_map(frame, &cm)?.vector();
                Ok((fp - fm) / (2.0 * step))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = cols.first().map_or(0, |c| c.len());
        Ok(DMatrix::from_fn(rows, p, |i, k| cols[k][i]))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FermiValue {
    pub components: Vec<f64>,
    pub imag_max: f64,
    pub lambda: LambdaSolve,
}

impl FermiValue {
    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.components)
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Entrywise relative error between two matrices, ignoring entries below
/// `floor * max|reference|`.
pub fn entrywise_relative_error(reference: &DMatrix<f64>, other: &DMatrix<f64>, floor: f64) -> f64 {
    let scale = reference.amax();
    let mut worst: f64 = 0.0;
    for (a, b) in reference.iter().zip(other.iter()) {
        let d = (a - b).abs();
        if a.abs() <= floor * scale {
            worst = worst.max(d / scale);
        } else {
            worst = worst.max(d / a.abs());
        }
    }
    worst
}

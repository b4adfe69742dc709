//! Boundary values `(Hbar + W - lambda -/+ i0)^{-1}`, the spectral density
//! and the compressed resolvent `Q`.
//!
//! Boundary values are realized either by transparent boundary rows at the
//! real energy or by complex energies `lambda +/- i eps` extrapolated to
//! `eps = 0`. Solves with the rank-`n` term go through a Woodbury formula
//! whose base matrix is kicked on the pivot rows of the eigenbasis, so the
//! base stays well conditioned when the energy approaches an eigenvalue of
//! the local part.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    complexify, extrapolate_to_zero, inner, numerical_rank, pivot_rows, singular_values, BandLu, C64,
};
use crate::operator::{check_energy, Branch, DiscreteOperator};
use crate::spectral::SpectralData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum Method {
    RadiationBC,
    EpsilonExtrapolation { eps: Vec<f64> },
}

impl Method {
    /// `eps_k = 0.1 * 2^-k`, `k = 0..6`.
    pub fn default_epsilon() -> Self {
        Method::EpsilonExtrapolation { eps: (0..7).map(|k| 0.1 * 0.5f64.powi(k)).collect() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::RadiationBC => "RadiationBC",
            Method::EpsilonExtrapolation { .. } => "EpsilonExtrapolation",
        }
    }
}

/// Factorization of `A - z + P0` at one complex energy.
#[derive(Debug, Clone)]
struct Solver {
    lu: BandLu<C64>,
    /// Columns of the low-rank update `U D U^T`.
    u: Vec<DVector<C64>>,
    /// `M^{-1} U`.
    y: Vec<DVector<C64>>,
    cap: Option<nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Solver {
    fn new(op: &DiscreteOperator, z: C64, branch: Branch) -> Result<Self> {
        let mut m = op.shifted_radiation(z, branch);
        let factors = op.low_rank();
        if factors.is_empty() {
            return Ok(Self { lu: m.lu()?, u: Vec::new(), y: Vec::new(), cap: None });
        }
        let h = op.h();
        let dim = op.dim();
        let rows = pivot_rows(factors, 1e-8);
        let rho = op.interior().max_abs().max(1.0);
        for &r in &rows {
            m.add(r, r, C64::new(rho, 0.0));
        }
        let lu = m.lu()?;
        let mut u: Vec<DVector<C64>> = factors.iter().map(complexify).collect();
        let mut d: Vec<f64> = vec![h; factors.len()];
        for &r in &rows {
            let mut e = DVector::from_element(dim, C64::new(0.0, 0.0));
            e[r] = C64::new(1.0, 0.0);
            u.push(e);
            d.push(-rho);
        }
        let y: Vec<DVector<C64>> = u.iter().map(|c| lu.solve(c)).collect();
        let k = u.len();
        // capacitance D^{-1} + U^T M^{-1} U
        let cap = DMatrix::from_fn(k, k, |i, j| {
            let mut s = u[i].iter().zip(y[j].iter()).map(|(a, b)| a * b).sum::<C64>();
            if i == j {
                s += C64::new(1.0 / d[i], 0.0);
            }
            s
        });
        Ok(Self { lu, u, y, cap: Some(cap.lu()) })
    }

    fn solve(&self, v: &DVector<C64>) -> Result<DVector<C64>> {
        let mut x = self.lu.solve(v);
        if let Some(cap) = &self.cap {
            let rhs = DVector::from_iterator(
                self.u.len(),
                self.u.iter().map(|c| c.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<C64>()),
            );
            let coef = cap.solve(&rhs).ok_or(Error::SingularMatrix { pivot: 0 })?;
            for (yk, ck) in self.y.iter().zip(coef.iter()) {
                x.axpy(-*ck, yk, C64::new(1.0, 0.0));
            }
        }
        if x.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::SingularMatrix { pivot: 0 });
        }
        Ok(x)
    }
}

/// Evaluator of one boundary value of the resolvent of an operator.
#[derive(Debug, Clone)]
pub struct BoundaryResolvent {
    op: DiscreteOperator,
    method: Method,
    lambda: f64,
    branch: Branch,
    solvers: Vec<Solver>,
    /// Tolerance on the relative gap of the extrapolation.
    pub extrapolation_tol: f64,
}

impl BoundaryResolvent {
    pub fn new(op: &DiscreteOperator, lambda: f64, branch: Branch, method: Method) -> Result<Self> {
        check_energy(&op.layout, lambda)?;
        let solvers = match &method {
            Method::RadiationBC => vec![Solver::new(op, C64::new(lambda, 0.0), branch)?],
            Method::EpsilonExtrapolation { eps } => {
                if eps.len() < 2 || eps.iter().any(|&e| !(e > 0.0)) {
                    return Err(Error::InvalidModel("epsilon sequence needs >= 2 positive values".into()));
                }
                eps.par_iter()
                    .map(|&e| Solver::new(op, C64::new(lambda, branch.sign() * e), branch))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(Self { op: op.clone(), method, lambda, branch, solvers, extrapolation_tol: 1e-5 })
    }

    /// Same as [`BoundaryResolvent::new`] but rejects energies outside `window`.
    pub fn in_window(
        op: &DiscreteOperator,
        lambda: f64,
        branch: Branch,
        method: Method,
        window: (f64, f64),
    ) -> Result<Self> {
        if !(lambda > window.0 && lambda < window.1) {
            return Err(Error::OutsideWindow { lambda, lo: window.0, hi: window.1 });
        }
        Self::new(op, lambda, branch, method)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn method(&self) -> &Method {
        &self.method
    }

    pub fn operator(&self) -> &DiscreteOperator {
        &self.op
    }

    pub fn resolve(&self, v: &DVector<C64>) -> Result<DVector<C64>> {
        if v.len() != self.op.dim() {
            return Err(Error::DimensionMismatch { expected: self.op.dim(), got: v.len() });
        }
        match &self.method {
            Method::RadiationBC => self.solvers[0].solve(v),
            Method::EpsilonExtrapolation { eps } => {
                let vals = self.solvers.iter().map(|s| s.solve(v)).collect::<Result<Vec<_>>>()?;
                let (est, gap) = extrapolate_to_zero(eps, &vals);
                if !(gap <= self.extrapolation_tol) {
                    return Err(Error::ExtrapolationDiverged { gap });
                }
                Ok(est)
            }
        }
    }

    pub fn resolve_real(&self, v: &DVector<f64>) -> Result<DVector<C64>> {
        self.resolve(&complexify(v))
    }

    pub fn resolve_many(&self, vs: &[DVector<C64>]) -> Result<Vec<DVector<C64>>> {
        vs.par_iter().map(|v| self.resolve(v)).collect()
    }
}

/// Both boundary values at one energy.
#[derive(Debug, Clone)]
pub struct DensityPair {
    pub plus: BoundaryResolvent,
    pub minus: BoundaryResolvent,
}

impl DensityPair {
    pub fn new(op: &DiscreteOperator, lambda: f64, method: Method) -> Result<Self> {
        let plus = BoundaryResolvent::new(op, lambda, Branch::Plus, method.clone())?;
        let minus = BoundaryResolvent::new(op, lambda, Branch::Minus, method)?;
        Ok(Self { plus, minus })
    }

    pub fn lambda(&self) -> f64 {
        self.plus.lambda()
    }

    /// `(1/2 pi i) [R(lambda + i0) - R(lambda - i0)] v`.
    pub fn apply(&self, v: &DVector<C64>) -> Result<DVector<C64>> {
        let a = self.plus.resolve(v)?;
        let b = self.minus.resolve(v)?;
        Ok((a - b) / C64::new(0.0, 2.0 * PI))
    }

    /// Density applied to a real vector; real by conjugate symmetry.
    pub fn apply_real(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.plus.resolve_real(v)?;
        Ok(a.map(|c| c.im / PI))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// `sigma_rank / sigma_{rank+1}`; infinite when nothing follows.
    pub gap: f64,
    pub probe_count: usize,
}

/// Numerical rank of the density restricted to the span of `probes`.
pub fn density_rank(pair: &DensityPair, probes: &[DVector<f64>], threshold: f64) -> Result<RankReport> {
    let h = pair.plus.operator().h();
    let count = probes.len();
    let pm = DMatrix::from_fn(probes.first().map_or(0, |p| p.len()), count, |i, j| C64::new(probes[j][i], 0.0));
    let psv = singular_values(&pm);
    let prank = numerical_rank(&psv, 1e-10);
    if prank < count {
        return Err(Error::ProbeDeficient { rank: prank, count });
    }
    let images = probes.par_iter().map(|p| pair.apply_real(p)).collect::<Result<Vec<_>>>()?;
    let dim = images[0].len();
    let scale = h.sqrt();
    let m = DMatrix::from_fn(dim, count, |i, j| C64::new(images[j][i] * scale, 0.0));
    let sv = singular_values(&m);
    let rank = numerical_rank(&sv, threshold);
    let gap = if rank == 0 {
        0.0
    } else if rank < sv.len() && sv[rank] > 0.0 {
        sv[rank - 1] / sv[rank]
    } else {
        f64::INFINITY
    };
    Ok(RankReport { rank, singular_values: sv, gap, probe_count: count })
}

/// Gaussian probes of width `5h` at equally spaced centers inside `region`,
/// cycling through the angular modes `modes` (all modes when empty).
pub fn standard_probes(op: &DiscreteOperator, count: usize, region: (f64, f64), modes: &[usize]) -> Vec<DVector<f64>> {
    let lay = &op.layout;
    let all: Vec<usize> = (0..lay.n_modes()).collect();
    let modes = if modes.is_empty() { &all[..] } else { modes };
    let nm = modes.len();
    let width = 5.0 * lay.h();
    let per_mode = count.div_ceil(nm).max(1);
    (0..count)
        .map(|i| {
            let k = modes[i % nm];
            let slot = i / nm;
            let t = if per_mode == 1 { 0.5 } else { slot as f64 / (per_mode - 1) as f64 };
            let c = region.0 + t * (region.1 - region.0);
            lay.state_in_mode(k, |z| (-((z - c) / width).powi(2)).exp())
        })
        .collect()
}

/// Angular modes with a propagating channel at `lambda` (`j^2 < lambda`).
pub fn open_modes(op: &DiscreteOperator, lambda: f64) -> Vec<usize> {
    op.layout
        .modes
        .iter()
        .enumerate()
        .filter(|(_, m)| ((m.frequency() * m.frequency()) as f64) < lambda)
        .map(|(k, _)| k)
        .collect()
}

/// `Q_ij = <psi_i, R psi_j>`.
pub fn reduced_q(spec: &SpectralData, br: &BoundaryResolvent) -> Result<DMatrix<C64>> {
    let n = spec.multiplicity;
    let cols = spec.eigvecs.iter().map(|v| br.resolve_real(v)).collect::<Result<Vec<_>>>()?;
    let h = spec.h;
    Ok(DMatrix::from_fn(n, n, |i, j| inner(h, &complexify(&spec.eigvecs[i]), &cols[j])))
}

/// Eigenvalues of a small complex matrix.
pub fn small_eigenvalues(m: &DMatrix<C64>) -> Vec<C64> {
    match m.nrows() {
        0 => Vec::new(),
        1 => vec![m[(0, 0)]],
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = (tr * tr - det * 4.0).sqrt();
            vec![(tr + disc) * 0.5, (tr - disc) * 0.5]
        }
        _ => m.clone().schur().eigenvalues().map(|e| e.iter().copied().collect()).unwrap_or_default(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionReport {
    pub lambda: f64,
    pub is_eigenvalue: bool,
    pub q_eigengap: f64,
    pub q_eigenvalues: Vec<(f64, f64)>,
}

/// Distance of the spectrum of `Q(lambda + i0, W)` to 1; `op` is `Hbar + W`.
pub fn eigenvalue_criterion(
    spec: &SpectralData,
    op: &DiscreteOperator,
    lambda: f64,
    tol: f64,
) -> Result<CriterionReport> {
    let br = BoundaryResolvent::new(op, lambda, Branch::Plus, Method::RadiationBC)?;
    let q = reduced_q(spec, &br)?;
    let ev = small_eigenvalues(&q);
    let gap = ev.iter().map(|e| (C64::new(1.0, 0.0) - e).norm()).fold(f64::INFINITY, f64::min);
    Ok(CriterionReport {
        lambda,
        is_eigenvalue: gap < tol,
        q_eigengap: gap,
        q_eigenvalues: ev.iter().map(|e| (e.re, e.im)).collect(),
    })
}

/// `||delta_W v - (I - R^-_W W) delta_0 (I - W R^+_W) v|| / ||v||`.
///
/// `hbar` is the unperturbed `Hbar`, `w` the nodal values of `W`.
pub fn perturbation_identity_residual(
    hbar: &DiscreteOperator,
    w: &DVector<f64>,
    lambda: f64,
    v: &DVector<C64>,
    method: Method,
) -> Result<f64> {
    let lay = hbar.layout.clone();
    let h = hbar.h();
    let pert = hbar.add_multiplication(w)?;
    let d0 = DensityPair::new(hbar, lambda, method.clone())?;
    let dw = DensityPair::new(&pert, lambda, method)?;
    let lhs = dw.apply(v)?;
    let rp = dw.plus.resolve(v)?;
    let inner_v = v - lay.multiply_complex(w, &rp);
    let mid = d0.apply(&inner_v)?;
    let wm = lay.multiply_complex(w, &mid);
    let rhs = &mid - dw.minus.resolve(&wm)?;
    let denom = crate::linalg::norm(h, v).max(f64::MIN_POSITIVE);
    Ok(crate::linalg::norm(h, &(lhs - rhs)) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{build_operator, Boundary, Grid1D, ModelKind, ModelSpec, PotentialSpec};

    fn free_line(half: f64, n: usize) -> DiscreteOperator {
        let model = ModelSpec {
            kind: ModelKind::FourthOrderLine,
            potential: PotentialSpec::SechPair { a: 0.0, b: 0.0 },
            angular_cutoff: 0,
            angular_index: 1,
        };
        build_operator(&model, &Grid1D::symmetric(half, n).unwrap(), Boundary::Dirichlet).unwrap()
    }

    #[test]
    fn branches_are_conjugate_for_real_data() {
        let op = free_line(10.0, 401);
        let v = DVector::from_fn(op.dim(), |i, _| (-(i as f64 - 200.0).powi(2) / 50.0).exp());
        let p = BoundaryResolvent::new(&op, 1.0, Branch::Plus, Method::RadiationBC).unwrap();
        let m = BoundaryResolvent::new(&op, 1.0, Branch::Minus, Method::RadiationBC).unwrap();
        let a = p.resolve_real(&v).unwrap();
        let b = m.resolve_real(&v).unwrap();
        assert!((a - b.map(|c| c.conj())).norm() < 1e-10);
    }

    #[test]
    fn density_is_positive_on_real_vectors() {
        let op = free_line(10.0, 401);
        let pair = DensityPair::new(&op, 0.8, Method::RadiationBC).unwrap();
        for c in [-2.0, 0.0, 3.0] {
            let v = op.layout.state_in_mode(0, |x| (-(x - c) * (x - c)).exp() * (1.0 + x));
            let d = pair.apply_real(&v).unwrap();
            assert!(d.dot(&v) * op.h() > -1e-12);
        }
    }

    #[test]
    fn epsilon_and_radiation_agree_on_free_line() {
        let op = free_line(10.0, 401);
        let v = op.layout.state_in_mode(0, |x| (-x * x).exp());
        let a = BoundaryResolvent::new(&op, 1.0, Branch::Plus, Method::RadiationBC)
            .unwrap()
            .resolve_real(&v)
            .unwrap();
        let b = BoundaryResolvent::new(&op, 1.0, Branch::Plus, Method::default_epsilon())
            .unwrap()
            .resolve_real(&v)
            .unwrap();
        assert!((&a - &b).norm() / a.norm() < 1e-6);
    }

    #[test]
    fn duplicate_probes_are_rejected() {
        let op = free_line(10.0, 201);
        let pair = DensityPair::new(&op, 1.0, Method::RadiationBC).unwrap();
        let p = op.layout.state_in_mode(0, |x| (-x * x).exp());
        let r = density_rank(&pair, &[p.clone(), p], 1e-6);
        assert!(matches!(r, Err(Error::ProbeDeficient { .. })));
    }

    #[test]
    fn two_by_two_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(2.0, 0.0)]);
        let mut ev: Vec<f64> = small_eigenvalues(&m).iter().map(|e| e.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }
}

//! Embedded eigenvalue search, the projection `P0` and `Hbar = H + P0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lanczos::eigenpairs_in_interval;
use crate::linalg::{norm_real, pivot_rows, singular_values, numerical_rank};
use crate::operator::{Boundary, DiscreteOperator, ModelKind, PerturbationBasis};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralOptions {
    /// Another localized eigenvalue closer than this is an error.
    pub isolation_radius: f64,
    /// Largest allowed `|psi|` on the outer edge strip.
    pub edge_threshold: f64,
    /// Fraction of longitudinal points on each side forming the edge strip.
    pub edge_fraction: f64,
    /// Relative tolerance for merging eigenvalues into one cluster.
    pub cluster_tol: f64,
    /// Rotation angle inside a two-dimensional eigenspace applied after
    /// canonicalization; selects `psi_1`.
    pub rotation: f64,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            isolation_radius: 0.2,
            edge_threshold: 1e-8,
            edge_fraction: 0.02,
            cluster_tol: 1e-9,
            rotation: 0.0,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub lambda0: f64,
    /// Real eigenbasis, orthonormal in the grid inner product.
    pub eigvecs: Vec<DVector<f64>>,
    pub multiplicity: usize,
    /// `||(H - lambda0) psi_i||` for each basis vector.
    pub residuals: Vec<f64>,
    pub edge_amplitude: f64,
    pub continuum_edge: f64,
    pub isolation_radius: f64,
    /// Other edge-localized eigenvalues found in the search window.
    pub other_localized: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda0: f64,
    pub multiplicity: usize,
    pub residuals: Vec<f64>,
    pub edge_amplitude: f64,
    pub gram_error: f64,
    pub other_localized: Vec<f64>,
}

impl SpectralData {
    pub fn psi1(&self) -> &DVector<f64> {
        &self.eigvecs[0]
    }

    /// Largest entry of `G - I`, `G` the Gram matrix of the eigenbasis.
    pub fn gram_error(&self) -> f64 {
        let n = self.eigvecs.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let g = self.h * self.eigvecs[i].dot(&self.eigvecs[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    pub fn summary(&self) -> SpectralSummary {
        SpectralSummary {
            lambda0: self.lambda0,
            multiplicity: self.multiplicity,
            residuals: self.residuals.clone(),
            edge_amplitude: self.edge_amplitude,
            gram_error: self.gram_error(),
            other_localized: self.other_localized.clone(),
        }
    }
}

/// Largest `|v|` over the outer `fraction` of longitudinal points.
pub fn edge_amplitude(op: &DiscreteOperator, v: &DVector<f64>, fraction: f64) -> f64 {
    let lay = &op.layout;
    let nz = lay.nz();
    let nm = lay.n_modes();
    let strip = ((fraction * nz as f64).ceil() as usize).max(1);
    let mut worst: f64 = 0.0;
    for iz in (0..strip).chain(nz - strip..nz) {
        for k in 0..nm {
            worst = worst.max(v[iz * nm + k].abs());
        }
    }
    worst
}

/// Puts an orthonormal basis of one eigenspace into a reproducible form:
/// pivoted rows fix the basis, the largest component of each vector is made
/// positive, and an optional rotation mixes the first two vectors.
pub fn canonicalize(vecs: &[DVector<f64>], h: f64, rotation: f64) -> Vec<DVector<f64>> {
    let n = vecs.len();
    if n == 0 {
        return Vec::new();
    }
    let rows = pivot_rows(vecs, 1e-8);
    // coefficient matrix C (n x n): columns of V C vanish on earlier pivot rows
    let v_rows = DMatrix::from_fn(n, n, |i, j| vecs[j][rows[i]]);
    let mut coeffs: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        // direction maximizing the component at pivot row i among those
        // orthogonal to earlier choices
        let mut a = v_rows.row(i).transpose();
        for c in &coeffs {
            let d = c.dot(&a);
            a -= c * d;
        }
        let na = a.norm();
        if na == 0.0 {
            break;
        }
        coeffs.push(a / na);
    }
    let mut out: Vec<DVector<f64>> = coeffs
        .iter()
        .map(|c| {
            let mut v = DVector::zeros(vecs[0].len());
            for (k, x) in vecs.iter().enumerate() {
                v.axpy(c[k], x, 1.0);
            }
            let nv = (h * v.norm_squared()).sqrt();
            v / nv
        })
        .collect();
    if n >= 2 && rotation != 0.0 {
        let (s, c) = rotation.sin_cos();
        let a = &out[0] * c + &out[1] * s;
        let b = &out[1] * c - &out[0] * s;
        out[0] = a;
        out[1] = b;
    }
    for v in out.iter_mut() {
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
    }
    out
}

/// All edge-localized eigenpairs in `window` of a Dirichlet operator, as one
/// isolated cluster.
///
/// When the operator carries a rank-`n` term, eigenvectors of the local part
/// are kept only if they also satisfy the full eigen-equation; this is exact
/// when the low-rank factors are themselves eigenvectors of the local part.
pub fn find_embedded_eigenpairs(
    op: &DiscreteOperator,
    window: (f64, f64),
    opts: &SpectralOptions,
) -> Result<SpectralData> {
    if op.bc != Boundary::Dirichlet {
        return Err(Error::InvalidModel("eigenpair search needs Dirichlet boundary rows".into()));
    }
    let (lo, hi) = window;
    let continuum_edge = 0.0;
    if !(lo >= continuum_edge) {
        return Err(Error::InvalidModel(format!(
            "window ({lo}, {hi}) must lie above the continuum edge {continuum_edge}"
        )));
    }
    let h = op.h();
    let pairs = eigenpairs_in_interval(op.interior(), lo, hi, opts.seed)?;
    let scale = h.sqrt();
    let mut localized: Vec<(f64, DVector<f64>, f64)> = Vec::new();
    for p in pairs {
        let psi = &p.vector / scale;
        let edge = edge_amplitude(op, &psi, opts.edge_fraction);
        if edge >= opts.edge_threshold {
            continue;
        }
        if !op.low_rank().is_empty() {
            let r = norm_real(h, &(op.apply(&psi) - &psi * p.value));
            if r > 1e-6 {
                continue;
            }
        }
        localized.push((p.value, psi, edge));
    }
    if localized.is_empty() {
        return Err(Error::EmbeddedNotFound { lo, hi });
    }
    // clusters of (numerically) equal eigenvalues
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..localized.len() {
        let v = localized[i].0;
        match clusters
            .iter_mut()
            .find(|c| (localized[c[0]].0 - v).abs() <= opts.cluster_tol * v.abs().max(1.0))
        {
            Some(c) => c.push(i),
            None => clusters.push(vec![i]),
        }
    }
    let center = 0.5 * (lo + hi);
    let best = clusters
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (localized[a.1[0]].0 - center).abs();
            let db = (localized[b.1[0]].0 - center).abs();
            da.partial_cmp(&db).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let members = &clusters[best];
    let lambda0 = members.iter().map(|&i| localized[i].0).sum::<f64>() / members.len() as f64;
    let mut other_localized = Vec::new();
    for (ci, c) in clusters.iter().enumerate() {
        if ci == best {
            continue;
        }
        let other = localized[c[0]].0;
        if (other - lambda0).abs() < opts.isolation_radius {
            return Err(Error::WindowNotIsolated { lambda0, other });
        }
        other_localized.push(other);
    }
    let raw: Vec<DVector<f64>> = members.iter().map(|&i| localized[i].1.clone()).collect();
    let eigvecs = canonicalize(&raw, h, opts.rotation);
    let residuals = eigvecs
        .iter()
        .map(|v| norm_real(h, &(op.apply_local(v) - v * lambda0)))
        .collect();
    let edge = eigvecs.iter().map(|v| edge_amplitude(op, v, opts.edge_fraction)).fold(0.0, f64::max);
    Ok(SpectralData {
        lambda0,
        multiplicity: eigvecs.len(),
        eigvecs,
        residuals,
        edge_amplitude: edge,
        continuum_edge,
        isolation_radius: opts.isolation_radius,
        other_localized,
        h,
    })
}

/// `Hbar = H + P0`.
pub fn make_hbar(op: &DiscreteOperator, spec: &SpectralData) -> Result<DiscreteOperator> {
    op.with_low_rank(spec.eigvecs.clone())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Inputs for the optional checks that need more than the eigen-data.
#[derive(Debug, Clone, Default)]
pub struct HypothesisInputs<'a> {
    pub basis: Option<&'a PerturbationBasis>,
    /// First-order Fermi matrix and the rank it should have.
    pub jacobian: Option<(&'a DMatrix<f64>, usize)>,
    pub tol_eig: Option<f64>,
}

pub fn check_hypotheses(
    spec: &SpectralData,
    op: &DiscreteOperator,
    inputs: &HypothesisInputs<'_>,
) -> HypothesisReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, value: f64, detail: String| {
        checks.push(HypothesisCheck { name: name.to_string(), passed, value, detail });
    };
    let asym = op.interior().asymmetry();
    push("symmetry", asym == 0.0, asym, "max |M - M^T| of the Dirichlet matrix".into());
    if let Some(basis) = inputs.basis {
        match basis.validate(&op.layout) {
            Ok(()) => push("reality", true, 0.0, "all perturbation elements real".into()),
            Err(e) => push("reality", false, 1.0, e.to_string()),
        }
        if op.layout.kind == ModelKind::CylinderEvenSector {
            let odd = basis.theta_oddness(&op.layout);
            push("theta_even", odd < 1e-12, odd, "max |W(z,theta) - W(z,-theta)|".into());
        }
        let p = basis.len();
        let r = basis.gram_rank();
        push("basis_independent", r == p, r as f64, format!("Gram rank {r} of {p}"));
    }
    push(
        "embedded",
        spec.lambda0 > spec.continuum_edge,
        spec.lambda0 - spec.continuum_edge,
        format!("lambda0 = {} above continuum edge {}", spec.lambda0, spec.continuum_edge),
    );
    push(
        "edge_decay",
        spec.edge_amplitude < 1e-8,
        spec.edge_amplitude,
        "max |psi| on the outer edge strip".into(),
    );
    let nearest = spec
        .other_localized
        .iter()
        .map(|o| (o - spec.lambda0).abs())
        .fold(f64::INFINITY, f64::min);
    push(
        "isolation",
        nearest >= spec.isolation_radius,
        nearest,
        format!("nearest other localized eigenvalue (radius {})", spec.isolation_radius),
    );
    let tol = inputs.tol_eig.unwrap_or(1e-6);
    let worst = spec.residuals.iter().cloned().fold(0.0, f64::max);
    push("eigen_residual", worst <= tol, worst, format!("max ||(H - lambda0) psi|| vs {tol:e}"));
    let g = spec.gram_error();
    push("orthonormal", g <= 1e-12, g, "max |G - I|".into());
    if let Some((jac, expected)) = inputs.jacobian {
        let jc = jac.map(|x| crate::linalg::C64::new(x, 0.0));
        let sv = singular_values(&jc);
        let rank = numerical_rank(&sv, 1e-6);
        push(
            "surjectivity",
            rank == expected,
            rank as f64,
            format!("rank of first-order Fermi matrix {rank}, need {expected}"),
        );
    }
    HypothesisReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{build_operator, Grid1D, ModelSpec, PotentialSpec};

    fn example_line(n: usize) -> DiscreteOperator {
        let model = ModelSpec {
            kind: ModelKind::FourthOrderLine,
            potential: PotentialSpec::LatticeSech,
            angular_cutoff: 0,
            angular_index: 1,
        };
        build_operator(&model, &Grid1D::symmetric(20.0, n).unwrap(), Boundary::Dirichlet).unwrap()
    }

    #[test]
    fn finds_sech_eigenpair() {
        let op = example_line(1001);
        let spec = find_embedded_eigenpairs(&op, (0.5, 1.5), &SpectralOptions::default()).unwrap();
        assert_eq!(spec.multiplicity, 1);
        assert!((spec.lambda0 - 1.0).abs() < 1e-2);
        assert!(spec.gram_error() < 1e-12);
        assert!(spec.residuals[0] < 1e-6);
    }

    #[test]
    fn free_line_has_no_embedded_state() {
        let model = ModelSpec {
            kind: ModelKind::FourthOrderLine,
            potential: PotentialSpec::SechPair { a: 0.0, b: 0.0 },
            angular_cutoff: 0,
            angular_index: 1,
        };
        let op = build_operator(&model, &Grid1D::symmetric(20.0, 801).unwrap(), Boundary::Dirichlet).unwrap();
        let r = find_embedded_eigenpairs(&op, (0.5, 1.5), &SpectralOptions::default());
        assert!(matches!(r, Err(Error::EmbeddedNotFound { .. })));
    }

    #[test]
    fn hbar_moves_the_eigenvalue_out() {
        let op = example_line(801);
        let spec = find_embedded_eigenpairs(&op, (0.5, 1.5), &SpectralOptions::default()).unwrap();
        let hbar = make_hbar(&op, &spec).unwrap();
        let psi = spec.psi1();
        let r = hbar.apply(psi) - psi * (spec.lambda0 + 1.0);
        assert!(norm_real(spec.h, &r) < 1e-6);
        let again = find_embedded_eigenpairs(&hbar, (0.5, 1.5), &SpectralOptions::default());
        assert!(matches!(again, Err(Error::EmbeddedNotFound { .. })));
    }

    #[test]
    fn canonical_form_picks_max_row() {
        let a = DVector::from_vec(vec![0.0, 0.6, 0.8, 0.0]);
        let b = DVector::from_vec(vec![0.6, 0.0, 0.0, -0.8]);
        let mix1 = (&a + &b) / 2f64.sqrt();
        let mix2 = (&a - &b) / 2f64.sqrt();
        let out = canonicalize(&[mix1, mix2], 1.0, 0.0);
        // row 2 and row 3 tie in norm; the lower index wins
        assert!((out[0].clone() - a).norm() < 1e-12);
        assert!((out[1].clone() + b).norm() < 1e-12);
    }
}

//! Explicit perturbations that keep the embedded eigenvalue: pick a compactly
//! supported `u` orthogonal to the eigenspace and set
//! `W = (H - lambda0) u / (psi_1 - u)` on its support.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermi::FermiSetup;
use crate::linalg::{complexify, norm, norm_real};
use crate::operator::{Branch, PerturbationBasis};
use crate::problem::EmbeddedProblem;
use crate::resolvent::{BoundaryResolvent, Method};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstructOptions {
    /// Center of the ball `B` (longitudinal coordinate).
    pub center: f64,
    /// Radius of `B`.
    pub radius: f64,
    /// Size of `u` relative to `psi_1`.
    pub scale: f64,
    /// Rescales `u` to this grid norm after orthogonalization.
    #[serde(default)]
    pub u_norm: Option<f64>,
    /// Center offset of the profile of `u`, as a fraction of the inner radius.
    #[serde(default = "default_offset")]
    pub shape_offset: f64,
    /// Half-width of the profile of `u`, as a fraction of the inner radius.
    #[serde(default = "default_width")]
    pub shape_width: f64,
}

fn default_offset() -> f64 {
    0.3
}

fn default_width() -> f64 {
    0.6
}

impl Default for ConstructOptions {
    fn default() -> Self {
        Self { center: 0.0, radius: 2.0, scale: 0.1, u_norm: None, shape_offset: 0.3, shape_width: 0.6 }
    }
}

#[derive(Debug, Clone)]
pub struct ConstructedW {
    /// Nodal values of `W`.
    pub w: DVector<f64>,
    pub u: DVector<f64>,
    /// `psi_1 - u`, the eigenvector of `H + W`.
    pub eigvec: DVector<f64>,
    /// `||(H + W - lambda0)(psi_1 - u)||`.
    pub residual: f64,
    /// `||R_W(lambda0) psi_1 - (psi_1 - u)||`.
    pub resolvent_identity: f64,
    /// `||R_W(lambda0) W psi_1 - u||`.
    pub wpsi_identity: f64,
    /// `lambda(W) - lambda0` from the implicit eigenvalue equation.
    pub lambda_shift: f64,
    pub max_abs_w: f64,
    /// Largest `|<psi_i, u>|`.
    pub overlap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstructSummary {
    pub residual: f64,
    pub resolvent_identity: f64,
    pub wpsi_identity: f64,
    pub lambda_shift: f64,
    pub max_abs_w: f64,
    pub overlap: f64,
}

impl ConstructedW {
    pub fn summary(&self) -> ConstructSummary {
        ConstructSummary {
            residual: self.residual,
            resolvent_identity: self.resolvent_identity,
            wpsi_identity: self.wpsi_identity,
            lambda_shift: self.lambda_shift,
            max_abs_w: self.max_abs_w,
            overlap: self.overlap,
        }
    }
}

impl ConstructOptions {
    /// Seeded random profile inside the ball with `||u|| = u_norm`.
    pub fn random(seed: u64, center: f64, radius: f64, u_norm: f64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let shape_width = rng.random_range(0.3..0.6);
        let shape_offset = rng.random_range(-(1.0 - shape_width)..(1.0 - shape_width));
        Self { center, radius, scale: 1.0, u_norm: Some(u_norm), shape_offset, shape_width }
    }
}

/// Smooth bump `exp(1 - 1/(1 - s^2))`, `s = (z - c)/rho`, zero for `|s| >= 1`.
fn compact_bump(z: f64, c: f64, rho: f64) -> f64 {
    let s = (z - c) / rho;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

pub fn construct_w(problem: &EmbeddedProblem, opts: &ConstructOptions) -> Result<ConstructedW> {
    let op = &problem.h_op;
    let lay = &op.layout;
    let h = op.h();
    let spec = &problem.spec;
    let psi1 = spec.psi1();
    let lambda0 = spec.lambda0;
    // inner radius leaves room for the stencil
    let reach = if lay.kind == crate::operator::ModelKind::FourthOrderLine { 2.0 } else { 1.0 };
    let rho = opts.radius - (reach + 1.0) * h;
    if !(rho > 4.0 * h) {
        return Err(Error::InvalidModel(format!("ball radius {} too small for the grid", opts.radius)));
    }
    let chi = |z: f64| compact_bump(z, opts.center, rho);
    let zs = lay.grid.points();
    let nm = lay.n_modes();
    let nz = lay.nz();
    let masked = |v: &DVector<f64>, f: &dyn Fn(f64) -> f64| {
        DVector::from_fn(v.len(), |i, _| v[i] * f(zs[i / nm]))
    };
    // raw u: a shifted bump times psi_1 keeps the angular profile of psi_1
    if !(opts.shape_width > 0.0 && opts.shape_offset.abs() + opts.shape_width <= 1.0) {
        return Err(Error::SupportViolation(format!(
            "profile offset {} and width {} leave the ball",
            opts.shape_offset, opts.shape_width
        )));
    }
    let shape = |z: f64| compact_bump(z, opts.center + opts.shape_offset * rho, opts.shape_width * rho);
    let raw = masked(psi1, &shape) * opts.scale;
    // remove the eigenspace components with chi-weighted copies of the psi_i
    let n = spec.multiplicity;
    let chipsi: Vec<DVector<f64>> = spec.eigvecs.iter().map(|p| masked(p, &chi)).collect();
    let gram = nalgebra::DMatrix::from_fn(n, n, |i, k| h * spec.eigvecs[i].dot(&chipsi[k]));
    let rhs = DVector::from_fn(n, |i, _| h * spec.eigvecs[i].dot(&raw));
    let alpha = gram.lu().solve(&rhs).ok_or(Error::SingularMatrix { pivot: 0 })?;
    let mut u = raw;
    for (a, cp) in alpha.iter().zip(&chipsi) {
        u.axpy(-a, cp, 1.0);
    }
    if let Some(target) = opts.u_norm {
        let nu = norm_real(h, &u);
        if nu > 0.0 {
            u *= target / nu;
        }
    }
    let overlap = spec.eigvecs.iter().map(|p| (h * p.dot(&u)).abs()).fold(0.0, f64::max);
    if overlap > 1e-12 * norm_real(h, &u).max(1.0) {
        return Err(Error::NotOrthogonal { overlap });
    }
    // W at the nodes
    let mut num = op.apply_local(&u);
    num.axpy(-lambda0, &u, 1.0);
    let num_nodes = lay.synthesize(&num);
    let den_nodes = lay.synthesize(&(psi1 - &u));
    let nq = lay.n_theta();
    let num_scale = num_nodes.amax().max(f64::MIN_POSITIVE);
    let den_scale = den_nodes.amax();
    let mut w = DVector::zeros(lay.nodal_dim());
    for iz in 0..nz {
        for q in 0..nq {
            let i = iz * nq + q;
            if num_nodes[i].abs() <= 1e-14 * num_scale {
                continue;
            }
            if (zs[iz] - opts.center).abs() > opts.radius {
                return Err(Error::SupportViolation(format!("(H - lambda0) u nonzero at z = {}", zs[iz])));
            }
            if den_nodes[i].abs() < 1e-8 * den_scale {
                return Err(Error::ZeroDivisor { index: i });
            }
            w[i] = num_nodes[i] / den_nodes[i];
        }
    }
    let eigvec = psi1 - &u;
    let h_w = op.add_multiplication(&w)?;
    let mut r = h_w.apply_local(&eigvec);
    r.axpy(-lambda0, &eigvec, 1.0);
    let residual = norm_real(h, &r);

    let hbar_w = problem.hbar.add_multiplication(&w)?;
    let br = BoundaryResolvent::new(&hbar_w, lambda0, Branch::Plus, Method::RadiationBC)?;
    let rp = br.resolve_real(psi1)?;
    let resolvent_identity = norm(h, &(rp - complexify(&eigvec)));
    let rw = br.resolve(&complexify(&lay.multiply(&w, psi1)))?;
    let wpsi_identity = norm(h, &(rw - complexify(&u)));

    let basis = PerturbationBasis::new(vec!["constructed".into()], vec![w.clone()]);
    let setup = FermiSetup { spec, hbar: &problem.hbar, basis: &basis, window: problem.window };
    let ls = setup.solve_lambda(&DVector::from_element(1, 1.0), lambda0)?;
    Ok(ConstructedW {
        max_abs_w: w.amax(),
        w,
        u,
        eigvec,
        residual,
        resolvent_identity,
        wpsi_identity,
        lambda_shift: ls.lambda_of_w - lambda0,
        overlap,
    })
}

//! Stock models, grids and perturbation bases used by the CLI scenarios,
//! the tests and the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::operator::{Angular, Bump, Grid1D, Layout, ModelKind, ModelSpec, PerturbationBasis, PotentialSpec};

/// Depth `nu (nu + 1)` of the `sech^2` well with `nu = 0.8`, whose single
/// bound state sits at `-nu^2 = -0.64`.
pub const CYLINDER_WELL_DEPTH: f64 = 1.44;

/// Fourth-order line whose sampled `sech x` is an exact eigenvector.
pub fn line_model() -> ModelSpec {
    ModelSpec {
        kind: ModelKind::FourthOrderLine,
        potential: PotentialSpec::LatticeSech,
        angular_cutoff: 0,
        angular_index: 1,
    }
}

/// Fourth-order line with the sampled continuum potential `20 sech^2 - 24 sech^4`.
pub fn sampled_line_model() -> ModelSpec {
    ModelSpec {
        kind: ModelKind::FourthOrderLine,
        potential: PotentialSpec::SechPair { a: 20.0, b: -24.0 },
        angular_cutoff: 0,
        angular_index: 1,
    }
}

pub fn free_line_model() -> ModelSpec {
    ModelSpec {
        kind: ModelKind::FourthOrderLine,
        potential: PotentialSpec::SechPair { a: 0.0, b: 0.0 },
        angular_cutoff: 0,
        angular_index: 1,
    }
}

/// `[-40, 40]` with 2001 points (`h = 0.04`).
pub fn line_grid() -> Grid1D {
    Grid1D { x_min: -40.0, x_max: 40.0, n_points: 2001 }
}

/// Cylinder with the `sech^2` well, embedded state in angular mode `n`,
/// modes up to `n + 2`.
pub fn cylinder_model(kind: ModelKind, n: usize) -> ModelSpec {
    ModelSpec {
        kind,
        potential: PotentialSpec::SechSquaredWell { v0: CYLINDER_WELL_DEPTH },
        angular_cutoff: n + 2,
        angular_index: n,
    }
}

/// `[-30, 30]` with 1201 points (`h = 0.05`).
pub fn cylinder_grid() -> Grid1D {
    Grid1D { x_min: -30.0, x_max: 30.0, n_points: 1201 }
}

/// `p` Gaussian bumps of width 1 with centers spread over `[-3, 3]`.
pub fn line_bumps(p: usize) -> Vec<Bump> {
    (0..p)
        .map(|k| {
            let t = if p == 1 { 0.5 } else { k as f64 / (p - 1) as f64 };
            Bump::new(-3.0 + 6.0 * t + 0.137, 1.0)
        })
        .collect()
}

/// Bumps coupling angular mode `n` to the open modes below it. In the full
/// sector a `sin 2n theta` bump is included so that the two degenerate
/// eigenvectors are coupled as well.
pub fn cylinder_bumps(kind: ModelKind, n: usize, p: usize) -> Vec<Bump> {
    let mut angulars: Vec<Angular> = (1..=2 * n).map(Angular::Cos).collect();
    if kind == ModelKind::CylinderFull {
        angulars.insert(1.min(angulars.len()), Angular::Sin(2 * n));
    }
    (0..p)
        .map(|k| {
            let t = if p == 1 { 0.5 } else { k as f64 / (p - 1) as f64 };
            Bump::new(-2.5 + 5.0 * t + 0.211, 1.0).with_angular(angulars[k % angulars.len()])
        })
        .collect()
}

/// Bumps with seeded random centers in `region` and widths in `[0.5, 1.5]`.
pub fn random_bumps(seed: u64, p: usize, region: (f64, f64), angular: &[Angular]) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..p)
        .map(|k| {
            let c = rng.random_range(region.0..region.1);
            let w = rng.random_range(0.5..1.5);
            let a = if angular.is_empty() { Angular::Const } else { angular[k % angular.len()] };
            Bump::new(c, w).with_angular(a)
        })
        .collect()
}

pub fn basis_from_bumps(model: &ModelSpec, grid: &Grid1D, bumps: &[Bump]) -> Result<PerturbationBasis> {
    let layout = Layout::new(model, *grid)?;
    Ok(PerturbationBasis::from_bumps(&layout, bumps))
}

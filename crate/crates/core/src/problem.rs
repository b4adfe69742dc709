//! One operator with an embedded eigenvalue, its perturbation basis and the
//! objects every downstream computation reuses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermi::{build_frame, FermiFrame, FermiSetup, FermiValue};
use crate::operator::{build_operator, Boundary, DiscreteOperator, Grid1D, ModelKind, ModelSpec, PerturbationBasis};
use crate::resolvent::{density_rank, open_modes, standard_probes, DensityPair, Method, RankReport};
use crate::spectral::{find_embedded_eigenpairs, make_hbar, SpectralData, SpectralOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemOptions {
    /// Interval searched for the embedded eigenvalue; model default when absent.
    pub search_window: Option<(f64, f64)>,
    /// Half-width `delta_1` of the window `I` around `lambda0`; half the
    /// distance to the nearest threshold when absent.
    pub window_radius: Option<f64>,
    pub spectral: SpectralOptions,
    /// Number of candidate probes; `4 * open channels + 2` when absent.
    pub probe_count: Option<usize>,
    pub probe_region: (f64, f64),
    /// Relative singular-value threshold for the density rank.
    pub rank_threshold: f64,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        Self {
            search_window: None,
            window_radius: None,
            spectral: SpectralOptions::default(),
            probe_count: None,
            probe_region: (-6.0, 6.0),
            rank_threshold: 1e-6,
        }
    }
}

/// Default search interval for the embedded eigenvalue.
pub fn default_search_window(model: &ModelSpec) -> (f64, f64) {
    match model.kind {
        ModelKind::FourthOrderLine => (0.5, 1.5),
        _ => {
            let n = model.angular_index as f64;
            (((n - 1.0) * (n - 1.0)).max(0.0) + 1e-6, n * n - 1e-6)
        }
    }
}

/// Half the distance from `lambda0` to the nearest threshold `j^2` (`0` on the line).
pub fn default_window_radius(model: &ModelSpec, lambda0: f64) -> f64 {
    let mut d = lambda0.abs();
    if model.is_cylinder() {
        for j in 0..=model.angular_cutoff {
            d = d.min((lambda0 - (j * j) as f64).abs());
        }
    }
    0.5 * d
}

pub struct EmbeddedProblem {
    pub model: ModelSpec,
    pub grid: Grid1D,
    /// `H` with Dirichlet rows.
    pub h_op: DiscreteOperator,
    /// `Hbar = H + P0`.
    pub hbar: DiscreteOperator,
    pub spec: SpectralData,
    pub window: (f64, f64),
    pub basis: PerturbationBasis,
    /// Density of `Hbar` at `lambda0`.
    pub pair0: DensityPair,
    pub rank: RankReport,
    pub frame: FermiFrame,
}

impl EmbeddedProblem {
    pub fn new(model: &ModelSpec, grid: &Grid1D, basis: PerturbationBasis, opts: &ProblemOptions) -> Result<Self> {
        let h_op = build_operator(model, grid, Boundary::Dirichlet)?;
        basis.validate(&h_op.layout)?;
        if model.kind == ModelKind::CylinderEvenSector {
            let odd = basis.theta_oddness(&h_op.layout);
            if odd > 1e-12 {
                return Err(Error::InvalidModel(format!("perturbation not even in theta ({odd:e})")));
            }
        }
        let search = opts.search_window.unwrap_or_else(|| default_search_window(model));
        let spec = find_embedded_eigenpairs(&h_op, search, &opts.spectral)?;
        let lambda0 = spec.lambda0;
        let mut radius = opts.window_radius.unwrap_or_else(|| default_window_radius(model, lambda0));
        for o in &spec.other_localized {
            radius = radius.min(0.5 * (o - lambda0).abs());
        }
        let window = (lambda0 - radius, lambda0 + radius);
        let hbar = make_hbar(&h_op, &spec)?;
        let pair0 = DensityPair::new(&hbar, lambda0, Method::RadiationBC)?;
        let open = open_modes(&hbar, lambda0);
        let count = opts.probe_count.unwrap_or(4 * open.len() + 2);
        let probes = standard_probes(&hbar, count, opts.probe_region, &open);
        let rank = density_rank(&pair0, &probes, opts.rank_threshold)?;
        if rank.rank == 0 {
            return Err(Error::RankCollapse { rank: 0, required: 1 });
        }
        let frame = build_frame(&pair0, &probes, rank.rank)?;
        Ok(Self { model: model.clone(), grid: *grid, h_op, hbar, spec, window, basis, pair0, rank, frame })
    }

    /// Number of Fermi conditions `m + n - 1`.
    pub fn codim(&self) -> usize {
        self.frame.m + self.spec.multiplicity - 1
    }

    pub fn setup(&self) -> FermiSetup<'_> {
        FermiSetup { spec: &self.spec, hbar: &self.hbar, basis: &self.basis, window: self.window }
    }

    pub fn fermi_map(&self, coeffs: &DVector<f64>) -> Result<FermiValue> {
        self.setup().fermi_map(&self.frame, coeffs)
    }

    pub fn jacobian(&self) -> Result<DMatrix<f64>> {
        self.setup().fermi_jacobian(&self.frame, &self.pair0)
    }

    /// `H + W` with Dirichlet rows.
    pub fn perturbed_h(&self, coeffs: &DVector<f64>) -> Result<DiscreteOperator> {
        self.h_op.add_multiplication(&self.basis.combine(coeffs)?)
    }

    /// `Hbar + W`.
    pub fn perturbed_hbar(&self, coeffs: &DVector<f64>) -> Result<DiscreteOperator> {
        self.hbar.add_multiplication(&self.basis.combine(coeffs)?)
    }
}

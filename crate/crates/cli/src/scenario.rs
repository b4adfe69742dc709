//! Scenario files: model, grid, perturbation basis, task and tolerances.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use embedlab_core::models::{basis_from_bumps, random_bumps};
use embedlab_core::{Angular, Bump, Grid1D, ModelSpec, PerturbationBasis, ProblemOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Tolerance keys a scenario may set.
pub const TOLERANCE_KEYS: &[&str] = &["manifold", "eigen", "rank_threshold"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model: ModelSpec,
    pub grid: Grid1D,
    #[serde(default)]
    pub basis: Option<BasisSource>,
    pub task: Task,
    #[serde(default)]
    pub options: ProblemOptions,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source")]
pub enum BasisSource {
    Bumps { bumps: Vec<Bump> },
    /// Seeded random bumps; the seed is the scenario seed.
    RandomBumps {
        count: usize,
        region: (f64, f64),
        #[serde(default)]
        angular: Vec<Angular>,
    },
    Inline { basis: PerturbationBasis },
    /// JSON file holding a `PerturbationBasis`, relative to the scenario file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Task {
    Spectrum,
    DeltaRank {
        /// Energy; the embedded eigenvalue of the model when absent.
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default = "default_probes")]
        probes: usize,
        #[serde(default = "default_region")]
        region: (f64, f64),
        /// Use `H` instead of `Hbar` (models without an embedded eigenvalue).
        #[serde(default)]
        bare: bool,
    },
    FermiJacobian {
        #[serde(default = "default_fd_step")]
        fd_step: f64,
    },
    SolveManifold {
        #[serde(default = "default_xi_norm")]
        xi_norm: f64,
    },
    Trace {
        #[serde(default)]
        direction: usize,
        #[serde(default = "default_trace_step")]
        step: f64,
        #[serde(default = "default_trace_steps")]
        steps: usize,
    },
    ConstructW {
        #[serde(default)]
        center: f64,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_u_norm")]
        u_norm: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    OffManifold {
        #[serde(default = "default_magnitudes")]
        magnitudes: Vec<f64>,
        #[serde(default = "default_scan")]
        scan_points: usize,
    },
    HypothesisCheck,
}

fn default_probes() -> usize {
    6
}
fn default_region() -> (f64, f64) {
    (-6.0, 6.0)
}
fn default_fd_step() -> f64 {
    1e-5
}
fn default_xi_norm() -> f64 {
    1e-3
}
fn default_trace_step() -> f64 {
    1e-4
}
fn default_trace_steps() -> usize {
    10
}
fn default_radius() -> f64 {
    2.0
}
fn default_u_norm() -> f64 {
    1e-3
}
fn default_samples() -> usize {
    5
}
fn default_magnitudes() -> Vec<f64> {
    vec![1e-2, 2e-2]
}
fn default_scan() -> usize {
    40
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Spectrum => "Spectrum",
            Task::DeltaRank { .. } => "DeltaRank",
            Task::FermiJacobian { .. } => "FermiJacobian",
            Task::SolveManifold { .. } => "SolveManifold",
            Task::Trace { .. } => "Trace",
            Task::ConstructW { .. } => "ConstructW",
            Task::OffManifold { .. } => "OffManifold",
            Task::HypothesisCheck => "HypothesisCheck",
        }
    }

    /// Whether the task needs a perturbation basis.
    pub fn needs_basis(&self) -> bool {
        matches!(
            self,
            Task::FermiJacobian { .. } | Task::SolveManifold { .. } | Task::Trace { .. } | Task::OffManifold { .. }
        )
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("scenario JSON: {e}")))
    }

    /// Checks everything that can be checked without numerics.
    pub fn validate(&self, base: Option<&Path>) -> Result<(), CliError> {
        self.grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for key in self.tolerances.keys() {
            if !TOLERANCE_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown tolerance key '{key}' (allowed: {})",
                    TOLERANCE_KEYS.join(", ")
                )));
            }
        }
        for (key, v) in &self.tolerances {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("tolerance '{key}' must be positive")));
            }
        }
        if self.task.needs_basis() && self.basis.is_none() {
            return Err(CliError::Config(format!("task {} needs a basis", self.task.name())));
        }
        if let Some(BasisSource::File { path }) = &self.basis {
            let full = resolve(base, path);
            if !full.exists() {
                return Err(CliError::Config(format!("basis file {} not found", full.display())));
            }
        }
        match &self.task {
            Task::DeltaRank { probes, region, .. } => {
                if *probes == 0 || !(region.1 > region.0) {
                    return Err(CliError::Config("DeltaRank needs probes > 0 and a non-empty region".into()));
                }
            }
            Task::Trace { steps, step, .. } => {
                if *steps == 0 || !(step.is_finite()) {
                    return Err(CliError::Config("Trace needs steps > 0 and a finite step".into()));
                }
            }
            Task::OffManifold { magnitudes, scan_points } => {
                if magnitudes.is_empty() || *scan_points < 3 {
                    return Err(CliError::Config("OffManifold needs magnitudes and >= 3 scan points".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn tolerance(&self, key: &str, default: f64) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(default)
    }

    pub fn build_basis(&self, base: Option<&Path>) -> Result<Option<PerturbationBasis>, CliError> {
        let num = |e: embedlab_core::Error| CliError::Numerical(e);
        let Some(src) = &self.basis else { return Ok(None) };
        let basis = match src {
            BasisSource::Bumps { bumps } => basis_from_bumps(&self.model, &self.grid, bumps).map_err(num)?,
            BasisSource::RandomBumps { count, region, angular } => {
                let bumps = random_bumps(self.seed, *count, *region, angular);
                basis_from_bumps(&self.model, &self.grid, &bumps).map_err(num)?
            }
            BasisSource::Inline { basis } => basis.clone(),
            BasisSource::File { path } => {
                let full = resolve(base, path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Config(format!("basis file {}: {e}", full.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("basis file {}: {e}", full.display())))?
            }
        };
        Ok(Some(basis))
    }
}

fn resolve(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}

pub struct Bundled {
    pub name: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

macro_rules! bundled {
    ($name:literal, $desc:literal) => {
        Bundled { name: $name, description: $desc, text: include_str!(concat!("../scenarios/", $name, ".json")) }
    };
}

pub const BUNDLED: &[Bundled] = &[
    bundled!("line_spectrum", "fourth-order line, sampled 20 sech^2 - 24 sech^4: embedded eigenvalue near 1 and its eigenvector"),
    bundled!("free_delta_rank", "free fourth-order line: rank of the spectral density at lambda = 1"),
    bundled!("line_delta_rank", "line model: density rank of Hbar at the embedded eigenvalue"),
    bundled!("cylinder_delta_rank", "cylinder, even sector, angular index 2: density rank 2n = 4"),
    bundled!("line_fermi_jacobian", "line model: first-order Fermi matrix for six bumps against finite differences"),
    bundled!("line_manifold", "line model: corrector solves along every kernel direction"),
    bundled!("line_trace", "line model: continuation along one kernel direction"),
    bundled!("line_construct", "line model: explicit perturbations that keep the eigenvalue"),
    bundled!("cylinder_construct", "cylinder, even sector: explicit perturbations that keep the eigenvalue"),
    bundled!("line_off_manifold", "line model: Q-criterion gap along normal directions"),
    bundled!("cylinder_degenerate", "full cylinder, angular index 1: degenerate eigenvalue, three Fermi conditions"),
    bundled!("line_hypotheses", "line model: hypothesis checks on the operator, basis and Fermi matrix"),
];

pub fn find_bundled(name: &str) -> Option<&'static Bundled> {
    BUNDLED.iter().find(|b| b.name == name)
}

/// Bundled names closest to `name` by edit distance.
pub fn suggestions(name: &str) -> Vec<&'static str> {
    let mut scored: Vec<(usize, &'static str)> = BUNDLED.iter().map(|b| (edit_distance(name, b.name), b.name)).collect();
    scored.sort();
    scored.into_iter().take(3).map(|(_, n)| n).collect()
}

fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1];
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != *cb);
            cur.push(sub.min(prev[j + 1] + 1).min(cur[j] + 1));
        }
        prev = cur;
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse_and_validate() {
        for b in BUNDLED {
            let s = Scenario::parse(b.text).unwrap_or_else(|e| panic!("{}: {e}", b.name));
            assert_eq!(s.name, b.name);
            s.validate(None).unwrap_or_else(|e| panic!("{}: {e}", b.name));
        }
    }

    #[test]
    fn suggestions_rank_by_edit_distance() {
        assert_eq!(suggestions("line_spectrun")[0], "line_spectrum");
        assert_eq!(edit_distance("kitten", "sitting"), 3);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{ "model": { "kind": "FourthOrderLine", "potential": { "form": "LatticeSech" } },
            "grid": { "x_min": -1.0, "x_max": 1.0, "n_points": 11 },
            "task": { "kind": "Spectrum" }, "colour": 1 }"#;
        assert!(matches!(Scenario::parse(text), Err(CliError::Config(_))));
    }
}

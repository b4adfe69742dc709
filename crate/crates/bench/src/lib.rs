//! Benchmark fixtures.

use embedlab_core::models::{basis_from_bumps, line_bumps, line_grid, line_model};
use embedlab_core::{EmbeddedProblem, ProblemOptions, Result};

/// Line model with `p` bumps, as used by the Fermi-map benchmarks.
pub fn line_problem(p: usize) -> Result<EmbeddedProblem> {
    let model = line_model();
    let grid = line_grid();
    let basis = basis_from_bumps(&model, &grid, &line_bumps(p))?;
    EmbeddedProblem::new(&model, &grid, basis, &ProblemOptions::default())
}

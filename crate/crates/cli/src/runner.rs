//! Runs one scenario task and collects the JSON results and CSV tables.

use std::path::Path;

use embedlab_core::construct::{construct_w, ConstructOptions};
use embedlab_core::export::{Cell, Table};
use embedlab_core::fermi::entrywise_relative_error;
use embedlab_core::linalg::{numerical_rank, singular_values, C64};
use embedlab_core::manifold::{normal_direction, normal_scan, solve_eta, split_basis, trace_manifold, ManifoldOptions};
use embedlab_core::problem::default_search_window;
use embedlab_core::resolvent::{density_rank, open_modes, standard_probes};
use embedlab_core::spectral::{check_hypotheses, find_embedded_eigenpairs, make_hbar, HypothesisInputs};
use embedlab_core::{
    build_operator, Boundary, DMatrix, DVector, DensityPair, EmbeddedProblem, Method, PerturbationBasis,
};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::scenario::{Scenario, Task};

/// Relative singular-value cut for the rank of the first-order Fermi matrix.
const JACOBIAN_RANK_TOL: f64 = 1e-6;
/// Relative cut for the kernel/transverse split.
const SPLIT_TOL: f64 = 1e-8;

pub struct Outcome {
    pub results: Value,
    pub tables: Vec<(String, Table)>,
}

pub fn run(scenario: &Scenario, base: Option<&Path>) -> Result<Outcome, CliError> {
    let basis = scenario.build_basis(base)?;
    match &scenario.task {
        Task::Spectrum => spectrum(scenario),
        Task::DeltaRank { lambda, probes, region, bare } => delta_rank(scenario, *lambda, *probes, *region, *bare),
        Task::FermiJacobian { fd_step } => fermi_jacobian(&problem(scenario, basis)?, *fd_step),
        Task::SolveManifold { xi_norm } => solve_manifold(scenario, &problem(scenario, basis)?, *xi_norm),
        Task::Trace { direction, step, steps } => {
            trace(scenario, &problem(scenario, basis)?, *direction, *step, *steps)
        }
        Task::ConstructW { center, radius, u_norm, samples } => {
            let basis = basis.unwrap_or_else(|| PerturbationBasis::new(Vec::new(), Vec::new()));
            construct(scenario, &problem(scenario, Some(basis))?, *center, *radius, *u_norm, *samples)
        }
        Task::OffManifold { magnitudes, scan_points } => {
            off_manifold(&problem(scenario, basis)?, magnitudes, *scan_points)
        }
        Task::HypothesisCheck => hypotheses(scenario, basis),
    }
}

fn problem(scenario: &Scenario, basis: Option<PerturbationBasis>) -> Result<EmbeddedProblem, CliError> {
    let basis = basis.ok_or_else(|| CliError::Config(format!("task {} needs a basis", scenario.task.name())))?;
    let mut opts = scenario.options.clone();
    if let Some(t) = scenario.tolerances.get("rank_threshold") {
        opts.rank_threshold = *t;
    }
    Ok(EmbeddedProblem::new(&scenario.model, &scenario.grid, basis, &opts)?)
}

fn manifold_options(scenario: &Scenario) -> ManifoldOptions {
    let mut opts = ManifoldOptions::default();
    opts.tol = scenario.tolerance("manifold", opts.tol);
    opts
}

fn spectrum(scenario: &Scenario) -> Result<Outcome, CliError> {
    let op = build_operator(&scenario.model, &scenario.grid, Boundary::Dirichlet)?;
    let window = scenario.options.search_window.unwrap_or_else(|| default_search_window(&scenario.model));
    let spec = find_embedded_eigenpairs(&op, window, &scenario.options.spectral)?;
    let lay = &op.layout;
    let mut header = vec!["index".to_string(), "z".into(), "mode".into()];
    header.extend((1..=spec.multiplicity).map(|i| format!("psi_{i}")));
    let mut table = Table::new(header);
    for i in 0..lay.dim() {
        let iz = i / lay.n_modes();
        let mut row: Vec<Cell> = vec![i.into(), lay.grid.point(iz).into(), format!("{:?}", lay.modes[i % lay.n_modes()]).into()];
        row.extend(spec.eigvecs.iter().map(|v| Cell::from(v[i])));
        table.push(row);
    }
    Ok(Outcome {
        results: json!({ "search_window": window, "spectrum": spec.summary() }),
        tables: vec![("eigenvectors".into(), table)],
    })
}

fn delta_rank(
    scenario: &Scenario,
    lambda: Option<f64>,
    count: usize,
    region: (f64, f64),
    bare: bool,
) -> Result<Outcome, CliError> {
    let op = build_operator(&scenario.model, &scenario.grid, Boundary::Dirichlet)?;
    let mut spectrum = Value::Null;
    let (op, lambda) = if bare {
        let lambda = lambda.ok_or_else(|| CliError::Config("DeltaRank with bare = true needs lambda".into()))?;
        (op, lambda)
    } else {
        let window = scenario.options.search_window.unwrap_or_else(|| default_search_window(&scenario.model));
        let spec = find_embedded_eigenpairs(&op, window, &scenario.options.spectral)?;
        spectrum = serde_json::to_value(spec.summary()).map_err(json_err)?;
        let lambda = lambda.unwrap_or(spec.lambda0);
        (make_hbar(&op, &spec)?, lambda)
    };
    let pair = DensityPair::new(&op, lambda, Method::RadiationBC)?;
    let open = open_modes(&op, lambda);
    let probes = standard_probes(&op, count, region, &open);
    let threshold = scenario.tolerance("rank_threshold", scenario.options.rank_threshold);
    let rank = density_rank(&pair, &probes, threshold)?;
    let mut table = Table::new(["index", "singular_value"]);
    for (i, s) in rank.singular_values.iter().enumerate() {
        table.push(vec![i.into(), (*s).into()]);
    }
    Ok(Outcome {
        results: json!({
            "lambda": lambda,
            "operator": if bare { "H" } else { "Hbar" },
            "open_modes": open.len(),
            "rank": rank,
            "spectrum": spectrum,
        }),
        tables: vec![("singular_values".into(), table)],
    })
}

fn jacobian_rank(j: &DMatrix<f64>) -> (usize, Vec<f64>) {
    let sv = singular_values(&j.map(|x| C64::new(x, 0.0)));
    (numerical_rank(&sv, JACOBIAN_RANK_TOL), sv)
}

fn problem_summary(pb: &EmbeddedProblem) -> Value {
    json!({
        "spectrum": pb.spec.summary(),
        "window": pb.window,
        "density_rank": pb.rank,
        "frame": pb.frame.summary(),
        "codim": pb.codim(),
        "basis_size": pb.basis.len(),
    })
}

fn fermi_jacobian(pb: &EmbeddedProblem, fd_step: f64) -> Result<Outcome, CliError> {
    let j = pb.jacobian()?;
    let zero = DVector::zeros(pb.basis.len());
    let fd = pb.setup().fermi_jacobian_fd(&pb.frame, &zero, fd_step)?;
    let err = entrywise_relative_error(&j, &fd, 1e-6);
    let (rank, sv) = jacobian_rank(&j);
    let mut table = Table::new(["row", "col", "analytic", "finite_difference"]);
    for r in 0..j.nrows() {
        for c in 0..j.ncols() {
            table.push(vec![r.into(), c.into(), j[(r, c)].into(), fd[(r, c)].into()]);
        }
    }
    Ok(Outcome {
        results: json!({
            "problem": problem_summary(pb),
            "jacobian": {
                "rows": j.nrows(),
                "cols": j.ncols(),
                "rank": rank,
                "singular_values": sv,
                "fd_step": fd_step,
                "fd_relative_error": err,
            },
        }),
        tables: vec![("jacobian".into(), table)],
    })
}

fn point_table(points: &[embedlab_core::ManifoldPoint]) -> Table {
    let mut table = Table::new([
        "index",
        "lambda",
        "fermi_norm",
        "eigen_residual",
        "q_gap",
        "eigvec_imag",
        "iterations",
        "refreshes",
        "coeffs",
    ]);
    for (i, p) in points.iter().enumerate() {
        let coeffs: Vec<String> = p.coeffs.iter().map(|c| Cell::from(*c).render()).collect();
        table.push(vec![
            i.into(),
            p.lambda.into(),
            p.fermi_norm.into(),
            p.eigen_residual.into(),
            p.q_gap.into(),
            p.eigvec_imag.into(),
            p.iterations.into(),
            p.refreshes.into(),
            coeffs.join(";").into(),
        ]);
    }
    table
}

fn solve_manifold(scenario: &Scenario, pb: &EmbeddedProblem, xi_norm: f64) -> Result<Outcome, CliError> {
    let j = pb.jacobian()?;
    let split = split_basis(&j, SPLIT_TOL)?;
    let opts = manifold_options(scenario);
    let mut points = Vec::new();
    for k in 0..split.tangent_dim() {
        let mut xi = DVector::zeros(split.tangent_dim());
        xi[k] = xi_norm;
        points.push(solve_eta(pb, &split, &xi, &DVector::zeros(split.codim()), &opts)?);
    }
    let worst = |f: fn(&embedlab_core::ManifoldPoint) -> f64| points.iter().map(f).fold(0.0, f64::max);
    let summary = json!({
        "max_fermi_norm": worst(|p| p.fermi_norm),
        "max_eigen_residual": worst(|p| p.eigen_residual),
        "max_q_gap": worst(|p| p.q_gap),
    });
    Ok(Outcome {
        results: json!({
            "problem": problem_summary(pb),
            "tangent_dim": split.tangent_dim(),
            "xi_norm": xi_norm,
            "tol": opts.tol,
            "summary": summary,
            "points": points,
        }),
        tables: vec![("manifold_points".into(), point_table(&points))],
    })
}

fn trace(scenario: &Scenario, pb: &EmbeddedProblem, direction: usize, step: f64, steps: usize) -> Result<Outcome, CliError> {
    let j = pb.jacobian()?;
    let split = split_basis(&j, SPLIT_TOL)?;
    if direction >= split.tangent_dim() {
        return Err(CliError::Config(format!(
            "trace direction {direction} out of range (kernel dimension {})",
            split.tangent_dim()
        )));
    }
    let mut dir = DVector::zeros(split.tangent_dim());
    dir[direction] = 1.0;
    let tr = trace_manifold(pb, &split, &dir, step, steps, &manifold_options(scenario));
    let table = point_table(&tr.points);
    Ok(Outcome {
        results: json!({ "problem": problem_summary(pb), "direction": direction, "step": step, "trace": tr }),
        tables: vec![("trace".into(), table)],
    })
}

fn construct(
    scenario: &Scenario,
    pb: &EmbeddedProblem,
    center: f64,
    radius: f64,
    u_norm: f64,
    samples: usize,
) -> Result<Outcome, CliError> {
    let mut table = Table::new([
        "sample",
        "shape_offset",
        "shape_width",
        "residual",
        "resolvent_identity",
        "wpsi_identity",
        "lambda_shift",
        "max_abs_w",
        "overlap",
    ]);
    let mut profile = Table::new(["index", "w", "u"]);
    let mut summaries = Vec::new();
    for k in 0..samples {
        let opts = ConstructOptions::random(scenario.seed.wrapping_add(k as u64), center, radius, u_norm);
        let c = construct_w(pb, &opts)?;
        let s = c.summary();
        table.push(vec![
            k.into(),
            opts.shape_offset.into(),
            opts.shape_width.into(),
            s.residual.into(),
            s.resolvent_identity.into(),
            s.wpsi_identity.into(),
            s.lambda_shift.into(),
            s.max_abs_w.into(),
            s.overlap.into(),
        ]);
        if k == 0 {
            for i in 0..c.w.len().max(c.u.len()) {
                let w = c.w.get(i).copied().unwrap_or(0.0);
                let u = c.u.get(i).copied().unwrap_or(0.0);
                profile.push(vec![i.into(), w.into(), u.into()]);
            }
        }
        summaries.push(json!({ "options": opts, "result": s }));
    }
    let worst = |key: &str| {
        summaries.iter().map(|s| s["result"][key].as_f64().unwrap_or(f64::NAN).abs()).fold(0.0, f64::max)
    };
    let summary = json!({
        "max_residual": worst("residual"),
        "max_resolvent_identity": worst("resolvent_identity"),
        "max_wpsi_identity": worst("wpsi_identity"),
        "max_abs_lambda_shift": worst("lambda_shift"),
    });
    Ok(Outcome {
        results: json!({ "spectrum": pb.spec.summary(), "summary": summary, "samples": summaries }),
        tables: vec![("construct".into(), table), ("construct_profile".into(), profile)],
    })
}

fn off_manifold(pb: &EmbeddedProblem, magnitudes: &[f64], scan_points: usize) -> Result<Outcome, CliError> {
    let j = pb.jacobian()?;
    let split = split_basis(&j, SPLIT_TOL)?;
    let base = DVector::zeros(pb.basis.len());
    let mut table = Table::new(["normal", "magnitude", "min_gap", "argmin_lambda"]);
    let mut scans = Vec::new();
    for k in 0..split.codim() {
        let dir = normal_direction(&split, k);
        let scan = normal_scan(pb, &base, &dir, magnitudes, scan_points)?;
        for (c, r) in &scan {
            table.push(vec![k.into(), (*c).into(), r.min_gap.into(), r.argmin_lambda.into()]);
        }
        let entries: Vec<Value> = scan.iter().map(|(c, r)| json!({ "magnitude": c, "report": r })).collect();
        scans.push(json!({ "normal": k, "scan": entries }));
    }
    Ok(Outcome {
        results: json!({ "problem": problem_summary(pb), "normals": scans }),
        tables: vec![("off_manifold".into(), table)],
    })
}

fn hypotheses(scenario: &Scenario, basis: Option<PerturbationBasis>) -> Result<Outcome, CliError> {
    let tol_eig = scenario.tolerances.get("eigen").copied();
    let (report, extra) = match basis {
        Some(basis) => {
            let pb = problem(scenario, Some(basis))?;
            let j = pb.jacobian()?;
            let inputs = HypothesisInputs { basis: Some(&pb.basis), jacobian: Some((&j, pb.codim())), tol_eig };
            (check_hypotheses(&pb.spec, &pb.h_op, &inputs), problem_summary(&pb))
        }
        None => {
            let op = build_operator(&scenario.model, &scenario.grid, Boundary::Dirichlet)?;
            let window = scenario.options.search_window.unwrap_or_else(|| default_search_window(&scenario.model));
            let spec = find_embedded_eigenpairs(&op, window, &scenario.options.spectral)?;
            let inputs = HypothesisInputs { tol_eig, ..Default::default() };
            (check_hypotheses(&spec, &op, &inputs), json!({ "spectrum": spec.summary() }))
        }
    };
    let mut table = Table::new(["name", "passed", "value", "detail"]);
    for c in &report.checks {
        table.push(vec![c.name.clone().into(), c.passed.into(), c.value.into(), c.detail.clone().into()]);
    }
    Ok(Outcome {
        results: json!({ "all_passed": report.all_passed(), "checks": report.checks, "problem": extra }),
        tables: vec![("hypotheses".into(), table)],
    })
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Numerical(e.into())
}

use embedlab_core::construct::{construct_w, ConstructOptions};
use embedlab_core::fermi::FermiSetup;
use embedlab_core::linalg::complexify;
use embedlab_core::manifold::*;
use embedlab_core::models::*;
use embedlab_core::spectral::{check_hypotheses, HypothesisInputs};
use embedlab_core::*;
use nalgebra::DVector;

fn line(p: usize) -> EmbeddedProblem {
    let model = line_model();
    let grid = line_grid();
    let basis = basis_from_bumps(&model, &grid, &line_bumps(p)).unwrap();
    EmbeddedProblem::new(&model, &grid, basis, &ProblemOptions::default()).unwrap()
}

#[test]
fn line_eigenvalue_matches_lattice_formula() {
    let pb = line(2);
    let exact = lattice_sech_eigenvalue(pb.grid.h());
    assert!((pb.spec.lambda0 - exact).abs() < 1e-9);
    assert_eq!(pb.spec.multiplicity, 1);
    assert!(pb.frame.biorthogonality_error() < 1e-12);
}

#[test]
fn zero_perturbation_is_a_fixed_point() {
    let pb = line(6);
    let v = pb.fermi_map(&DVector::zeros(6)).unwrap();
    assert!(v.norm() < 1e-14);
    assert!((v.lambda.lambda_of_w - pb.spec.lambda0).abs() < 1e-14);
    assert!((v.lambda.a_value - 1.0).abs() < 1e-12);
    assert!((v.lambda.derivative_check - 1.0).abs() < 1e-6);
}

#[test]
fn solve_eta_at_origin_returns_origin() {
    let pb = line(6);
    let split = split_basis(&pb.jacobian().unwrap(), 1e-8).unwrap();
    assert_eq!(split.tangent_dim() + split.codim(), 6);
    let p = solve_eta(&pb, &split, &DVector::zeros(4), &DVector::zeros(2), &ManifoldOptions::default()).unwrap();
    assert!(p.eta.iter().all(|e| e.abs() < 1e-14));
    assert!((p.lambda - pb.spec.lambda0).abs() < 1e-14);
}

#[test]
fn far_outside_the_chart_fails() {
    let pb = line(6);
    let split = split_basis(&pb.jacobian().unwrap(), 1e-8).unwrap();
    let xi = DVector::from_element(4, 5.0);
    let r = solve_eta(&pb, &split, &xi, &DVector::zeros(2), &ManifoldOptions::default());
    assert!(matches!(
        r,
        Err(Error::NoConvergence { .. }) | Err(Error::LeftWindow { .. }) | Err(Error::OutsideWindow { .. })
    ));
}

#[test]
fn traced_chain_is_continuous_and_consistent() {
    let pb = line(6);
    let split = split_basis(&pb.jacobian().unwrap(), 1e-8).unwrap();
    let mut dir = DVector::zeros(4);
    dir[1] = 1.0;
    let step = 1e-4;
    let fwd = trace_manifold(&pb, &split, &dir, step, 10, &ManifoldOptions::default());
    assert!(fwd.complete, "{:?}", fwd.error);
    assert_eq!(fwd.points.len(), 10);
    let phi_max = pb.spec.psi1().amax();
    let mut prev = pb.spec.lambda0;
    let setup = pb.setup();
    for p in &fwd.points {
        assert!(p.fermi_norm <= 1e-10);
        assert!(p.eigen_residual <= 1e-7);
        assert!((p.lambda - prev).abs() < 10.0 * step * phi_max * phi_max);
        prev = p.lambda;
        let fresh = setup.solve_lambda(&DVector::from_vec(p.coeffs.clone()), pb.spec.lambda0).unwrap();
        assert!((fresh.lambda_of_w - p.lambda).abs() < 1e-10);
    }
    let back = trace_manifold(&pb, &split, &(-&dir), step, 3, &ManifoldOptions::default());
    assert!(back.complete);
    // the kernel direction is a chart coordinate: -xi is solved independently
    assert!(back.points[0].xi[1] < 0.0);
}

#[test]
fn zero_direction_gives_identical_points() {
    let pb = line(6);
    let split = split_basis(&pb.jacobian().unwrap(), 1e-8).unwrap();
    let t = trace_manifold(&pb, &split, &DVector::zeros(4), 1e-4, 3, &ManifoldOptions::default());
    assert!(t.complete);
    for p in &t.points {
        assert!((p.lambda - pb.spec.lambda0).abs() < 1e-14);
    }
}

#[test]
fn on_manifold_eigenvector_is_real_up_to_phase() {
    let pb = line(6);
    let split = split_basis(&pb.jacobian().unwrap(), 1e-8).unwrap();
    let mut xi = DVector::zeros(4);
    xi[0] = 1e-3;
    let p = solve_eta(&pb, &split, &xi, &DVector::zeros(2), &ManifoldOptions::default()).unwrap();
    assert!(p.eigvec_imag < 1e-8);
    assert!(p.q_gap < 1e-6);
}

#[test]
fn kernel_point_keeps_zero_gap_and_normal_point_opens_it() {
    let pb = line(6);
    let split = split_basis(&pb.jacobian().unwrap(), 1e-8).unwrap();
    let mut xi = DVector::zeros(4);
    xi[2] = 1e-3;
    let p = solve_eta(&pb, &split, &xi, &DVector::zeros(2), &ManifoldOptions::default()).unwrap();
    let c = DVector::from_vec(p.coeffs.clone());
    let on = off_manifold_probe(&pb, &c, 20).unwrap();
    assert!(on.min_gap < 1e-6);
    let off = normal_scan(&pb, &c, &normal_direction(&split, 0), &[1e-2], 20).unwrap();
    assert!(off[0].1.min_gap > 1e2 * on.min_gap);
}

#[test]
fn zero_u_gives_zero_w() {
    let pb = line(1);
    let opts = ConstructOptions { scale: 0.0, ..Default::default() };
    let c = construct_w(&pb, &opts).unwrap();
    assert_eq!(c.max_abs_w, 0.0);
    assert!(c.residual < 1e-9);
    assert_eq!(c.lambda_shift, 0.0);
}

#[test]
fn constructed_w_is_a_fermi_zero() {
    let pb = line(1);
    let c = construct_w(&pb, &ConstructOptions::random(3, 0.5, 2.0, 1e-3)).unwrap();
    let basis = PerturbationBasis::new(vec!["w".into()], vec![c.w.clone()]);
    let setup = FermiSetup { spec: &pb.spec, hbar: &pb.hbar, basis: &basis, window: pb.window };
    let one = DVector::from_element(1, 1.0);
    let v = setup.fermi_map(&pb.frame, &one).unwrap();
    assert!(v.norm() < 1e-10, "{:?}", v.components);
    let crit = resolvent::eigenvalue_criterion(&pb.spec, &pb.hbar.add_multiplication(&c.w).unwrap(), pb.spec.lambda0, 1e-6).unwrap();
    assert!(crit.is_eigenvalue);
}

#[test]
fn construction_rejects_a_ball_outside_the_grid_resolution() {
    let pb = line(1);
    let opts = ConstructOptions { radius: 0.1, ..Default::default() };
    assert!(matches!(construct_w(&pb, &opts), Err(Error::InvalidModel(_))));
}

#[test]
fn hypotheses_hold_for_line_model() {
    let pb = line(6);
    let j = pb.jacobian().unwrap();
    let report = check_hypotheses(
        &pb.spec,
        &pb.h_op,
        &HypothesisInputs { basis: Some(&pb.basis), jacobian: Some((&j, 2)), tol_eig: None },
    );
    assert!(report.all_passed(), "{:?}", report.checks);
}

#[test]
fn hypotheses_flag_sampled_potential_edge_decay() {
    let model = sampled_line_model();
    let grid = Grid1D::symmetric(20.0, 1001).unwrap();
    let op = build_operator(&model, &grid, Boundary::Dirichlet).unwrap();
    let opts = SpectralOptions { edge_threshold: 1e-3, ..Default::default() };
    let spec = spectral::find_embedded_eigenpairs(&op, (0.5, 1.5), &opts).unwrap();
    let report = check_hypotheses(&spec, &op, &HypothesisInputs { basis: None, jacobian: None, tol_eig: None });
    assert!(!report.get("edge_decay").unwrap().passed);
}

#[test]
fn cylinder_even_sector_codimension() {
    for n in [1, 2] {
        let kind = ModelKind::CylinderEvenSector;
        let model = cylinder_model(kind, n);
        let grid = cylinder_grid();
        let basis = basis_from_bumps(&model, &grid, &cylinder_bumps(kind, n, 4 * n)).unwrap();
        let pb = EmbeddedProblem::new(&model, &grid, basis, &ProblemOptions::default()).unwrap();
        assert!((pb.spec.lambda0 - ((n * n) as f64 - 0.64)).abs() < 1e-2);
        assert_eq!(pb.codim(), 2 * n);
        let split = split_basis(&pb.jacobian().unwrap(), 1e-8).unwrap();
        assert_eq!(split.codim(), 2 * n);
    }
}

#[test]
fn errors_are_typed() {
    let model = free_line_model();
    let grid = Grid1D::symmetric(10.0, 201).unwrap();
    let op = build_operator(&model, &grid, Boundary::Dirichlet).unwrap();
    assert!(matches!(
        BoundaryResolvent::new(&op, -0.5, Branch::Plus, Method::RadiationBC),
        Err(Error::NoPropagatingChannel(_))
    ));
    let cyl = cylinder_model(ModelKind::CylinderEvenSector, 1);
    let cop = build_operator(&cyl, &cylinder_grid(), Boundary::Dirichlet).unwrap();
    assert!(matches!(
        BoundaryResolvent::new(&cop, 1.0, Branch::Plus, Method::RadiationBC),
        Err(Error::ChannelThreshold { .. })
    ));
    let wide = ModelSpec { potential: PotentialSpec::SechSquaredWell { v0: 1.0 }, ..cyl };
    assert!(matches!(
        build_operator(&wide, &Grid1D::symmetric(3.0, 61).unwrap(), Boundary::Dirichlet),
        Err(Error::PotentialNotDecaying { .. })
    ));
    let mut basis = PerturbationBasis::from_bumps(&op.layout, &[Bump::new(0.0, 1.0)]);
    basis.imag = Some(vec![vec![1e-3; op.layout.nodal_dim()]]);
    assert!(matches!(apply_perturbation(&op, &basis, &DVector::from_element(1, 1.0)), Err(Error::NonRealPerturbation(_))));
    let v = complexify(&DVector::zeros(5));
    let br = BoundaryResolvent::new(&op, 1.0, Branch::Plus, Method::RadiationBC).unwrap();
    assert!(matches!(br.resolve(&v), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn rank_deficient_jacobian_is_rejected() {
    let j = nalgebra::DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
    assert!(matches!(split_basis(&j, 1e-8), Err(Error::RankDeficient { rank: 1, expected: 2 })));
}

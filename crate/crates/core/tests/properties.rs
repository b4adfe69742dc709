use embedlab_core::linalg::{complexify, extrapolate_to_zero, inner, BandMatrix, C64};
use embedlab_core::models::*;
use embedlab_core::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn free_line(n: usize) -> DiscreteOperator {
    build_operator(&free_line_model(), &Grid1D::symmetric(10.0, n).unwrap(), Boundary::Dirichlet).unwrap()
}

fn gaussian(op: &DiscreteOperator, c: f64, w: f64, k: usize) -> DVector<f64> {
    op.layout.state_in_mode(k, |x| (-((x - c) / w).powi(2)).exp())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn banded_lu_agrees_with_dense(n in 8usize..40, kl in 0usize..4, ku in 0usize..4, seed in any::<u64>()) {
        let mut m = BandMatrix::<f64>::zeros(n, kl, ku);
        let mut s = seed | 1;
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                m.set(i, j, (s % 1000) as f64 / 1000.0 - 0.5);
            }
            m.add(i, i, 4.0);
        }
        let dense = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
        let b = DVector::from_fn(n, |i, _| (i as f64 * 0.37).cos());
        let x = m.lu().unwrap().solve(&b);
        let xd = dense.lu().solve(&b).unwrap();
        prop_assert!((x - xd).amax() < 1e-10);
    }

    #[test]
    fn neville_is_exact_on_polynomials(c0 in -5.0f64..5.0, c1 in -5.0f64..5.0, c2 in -5.0f64..5.0) {
        let eps: Vec<f64> = (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect();
        let vals: Vec<DVector<C64>> = eps
            .iter()
            .map(|e| DVector::from_element(1, C64::new(c0 + c1 * e + c2 * e * e, 0.0)))
            .collect();
        let (est, _) = extrapolate_to_zero(&eps, &vals);
        prop_assert!((est[0].re - c0).abs() < 1e-10 * (1.0 + c0.abs()));
    }

    #[test]
    fn boundary_values_are_conjugate(c in -3.0f64..3.0, w in 0.3f64..2.0, lambda in 0.2f64..3.0) {
        let op = free_line(401);
        let v = gaussian(&op, c, w, 0);
        let p = BoundaryResolvent::new(&op, lambda, Branch::Plus, Method::RadiationBC).unwrap().resolve_real(&v).unwrap();
        let m = BoundaryResolvent::new(&op, lambda, Branch::Minus, Method::RadiationBC).unwrap().resolve_real(&v).unwrap();
        prop_assert!((p - m.map(|z| z.conj())).norm() < 1e-9 * (1.0 + v.norm()));
    }

    #[test]
    fn density_is_positive_semidefinite(c in -3.0f64..3.0, w in 0.3f64..2.0, lambda in 0.2f64..3.0) {
        let op = free_line(401);
        let pair = DensityPair::new(&op, lambda, Method::RadiationBC).unwrap();
        let v = gaussian(&op, c, w, 0);
        let d = pair.apply_real(&v).unwrap();
        prop_assert!(op.h() * d.dot(&v) >= -1e-12);
    }

    #[test]
    fn resolvent_inverts_the_shifted_operator(c in -3.0f64..3.0, lambda in 0.2f64..3.0) {
        let op = free_line(401);
        let v = complexify(&gaussian(&op, c, 1.0, 0));
        let br = BoundaryResolvent::new(&op, lambda, Branch::Plus, Method::RadiationBC).unwrap();
        let u = br.resolve(&v).unwrap();
        let back = op.apply_shifted_radiation(C64::new(lambda, 0.0), Branch::Plus, &u);
        prop_assert!((back - &v).norm() < 1e-8 * v.norm());
    }

    #[test]
    fn collocation_round_trip_is_identity(seed in any::<u64>()) {
        let model = cylinder_model(ModelKind::CylinderFull, 1);
        let lay = Layout::new(&model, Grid1D::symmetric(5.0, 33).unwrap()).unwrap();
        let v = DVector::from_fn(lay.dim(), |i, _| ((i as u64).wrapping_mul(seed | 1) % 97) as f64 / 97.0);
        let back = lay.analyze(&lay.synthesize(&v));
        prop_assert!((back - v).amax() < 1e-12);
    }

    #[test]
    fn multiplication_is_symmetric(seed in 0u64..1000) {
        let model = cylinder_model(ModelKind::CylinderEvenSector, 1);
        let grid = Grid1D::symmetric(15.0, 61).unwrap();
        let op = build_operator(&model, &grid, Boundary::Dirichlet).unwrap();
        let bumps = random_bumps(seed, 1, (-2.0, 2.0), &[Angular::Cos(1)]);
        let basis = PerturbationBasis::from_bumps(&op.layout, &bumps);
        let pert = op.add_multiplication(&basis.element(0)).unwrap();
        prop_assert!(pert.interior().asymmetry() < 1e-14);
    }
}

#[test]
fn inner_product_is_conjugate_linear_in_first_slot() {
    let a = DVector::from_vec(vec![C64::new(1.0, 2.0), C64::new(0.5, -1.0)]);
    let b = DVector::from_vec(vec![C64::new(-1.0, 0.5), C64::new(2.0, 2.0)]);
    let i = C64::new(0.0, 1.0);
    let lhs = inner(0.1, &(&a * i), &b);
    assert!((lhs - inner(0.1, &a, &b) * (-i)).norm() < 1e-15);
}

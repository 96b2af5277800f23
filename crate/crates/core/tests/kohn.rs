use kohn_mesh::kohn::{first_order_s, linear_solve, phase_distance, solve_real, KohnError};
use kohn_mesh::physics::PROTON_MASS;
use kohn_mesh::{
    APolicy, Basis, ChannelState, HamiltonianParts, KohnProblem, MeshSpec, QuadratureConfig,
    SparseSymmetric, Symmetry, ThreeBodySystem,
};
use num_complex::Complex64;

fn setup(system: ThreeBodySystem, spec: MeshSpec) -> (Basis, HamiltonianParts) {
    let basis = Basis::new(spec).unwrap();
    let parts = HamiltonianParts::assemble(&basis, &system).unwrap();
    (basis, parts)
}

/// Symmetric indefinite test matrix: a 1D Laplacian shifted into its spectrum.
fn shifted_laplacian(n: usize, shift: f64) -> SparseSymmetric {
    let rows = (0..n)
        .map(|i| {
            let mut r = vec![(i as u32, 2.0 - shift)];
            if i > 0 {
                r.insert(0, (i as u32 - 1, -1.0));
            }
            r
        })
        .collect();
    SparseSymmetric::from_rows(rows)
}

#[test]
fn indefinite_solve_meets_residual_target() {
    let a = shifted_laplacian(60, 1.3);
    let b: Vec<Complex64> = (0..60)
        .map(|i| Complex64::new((i as f64).sin(), (0.3 * i as f64).cos()))
        .collect();
    let sol = linear_solve(&a, std::slice::from_ref(&b)).unwrap();
    assert!(sol.residual < 1e-12, "{}", sol.residual);
    let ax = a.matvec(&sol.x[0]);
    for (u, v) in ax.iter().zip(&b) {
        assert!((u - v).norm() < 1e-11);
    }
    let bad = solve_real(&a, &[vec![1.0; 59]]);
    assert!(matches!(bad, Err(KohnError::Dimension { .. })));
}

#[test]
fn vanishing_denominator_is_an_anomaly() {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    // m22 - ω2·ℋ⁻¹ω2 = 1 - 1.
    let r = first_order_s(one, one, &[one], &[z], &[one]);
    assert!(matches!(r, Err(KohnError::Anomaly { .. })));
}

#[test]
fn converged_mesh_gives_a_nearly_unitary_s() {
    let system = ThreeBodySystem::hydrogen_infinite();
    for symmetry in [Symmetry::Singlet, Symmetry::Triplet] {
        let (basis, parts) = setup(system, MeshSpec::new(10, 20, 1.0, 1.3, symmetry));
        let problem = KohnProblem {
            basis: &basis,
            system,
            parts: &parts,
            quadrature: QuadratureConfig::default(),
        };
        let ch = ChannelState::from_k(&system, 0.3, symmetry, APolicy::EqualsK).unwrap();
        let p = problem.solve(&ch).unwrap();
        assert!(p.solver_residual < 1e-10, "{}", p.solver_residual);
        assert!(p.unitarity_defect < 1e-6, "{}", p.unitarity_defect);
        // The second-order correction improves unitarity over S̄.
        let bar_defect = (1.0 - p.s_bar.norm_sqr()).abs();
        assert!(
            p.unitarity_defect < bar_defect,
            "{} vs {bar_defect}",
            p.unitarity_defect
        );
        assert!(phase_distance(p.delta, 0.5 * p.s.arg()) < 1e-15);
    }
}

#[test]
fn phase_shift_is_stationary_in_the_regularization() {
    let system = ThreeBodySystem::hydrogen_infinite();
    let (basis, parts) = setup(system, MeshSpec::new(10, 20, 1.0, 1.3, Symmetry::Singlet));
    let problem = KohnProblem {
        basis: &basis,
        system,
        parts: &parts,
        quadrature: QuadratureConfig::default(),
    };
    let k = 0.3;
    let channels: Vec<ChannelState> = [k, 0.8 * k, 1.25 * k]
        .iter()
        .map(|&a| ChannelState::from_k(&system, k, Symmetry::Singlet, APolicy::Fixed(a)).unwrap())
        .collect();
    let points: Vec<_> = problem
        .solve_all(&channels)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    for p in &points[1..] {
        assert!(
            phase_distance(p.delta, points[0].delta) < 1e-5,
            "{} vs {}",
            p.delta,
            points[0].delta
        );
    }
}

#[test]
fn heavy_nucleus_phase_matches_fixed_nucleus() {
    let spec = MeshSpec::new(6, 12, 1.0, 1.3, Symmetry::Triplet);
    let fixed = ThreeBodySystem::hydrogen_infinite();
    let heavy = ThreeBodySystem::hydrogen(1e9);
    let mut deltas = Vec::new();
    for system in [fixed, heavy] {
        let (basis, parts) = setup(system, spec);
        let problem = KohnProblem {
            basis: &basis,
            system,
            parts: &parts,
            quadrature: QuadratureConfig::default(),
        };
        let ch = ChannelState::from_k(&system, 0.4, Symmetry::Triplet, APolicy::EqualsK).unwrap();
        deltas.push(problem.solve(&ch).unwrap().delta);
    }
    assert!(phase_distance(deltas[0], deltas[1]) < 1e-6, "{deltas:?}");
}

#[test]
fn sweep_is_ordered_continuous_and_keeps_failures() {
    let system = ThreeBodySystem::hydrogen(PROTON_MASS);
    let (basis, parts) = setup(system, MeshSpec::new(5, 10, 1.0, 1.3, Symmetry::Singlet));
    let problem = KohnProblem {
        basis: &basis,
        system,
        parts: &parts,
        quadrature: QuadratureConfig::default(),
    };
    assert!(problem.sweep(&[], APolicy::EqualsK, None).is_empty());
    let energies = [-0.40, -0.45, 0.3, -0.49, -0.48];
    let out = problem.sweep(&energies, APolicy::EqualsK, Some(1));
    let es: Vec<f64> = out.iter().map(|(e, _)| *e).collect();
    assert_eq!(es, vec![-0.49, -0.48, -0.45, -0.40, 0.3]);
    assert!(matches!(out[4].1, Err(KohnError::Physics(_))));
    let deltas: Vec<f64> = out[..4]
        .iter()
        .map(|(_, r)| r.as_ref().unwrap().delta)
        .collect();
    assert!(
        (deltas[0] - std::f64::consts::PI).abs() < std::f64::consts::FRAC_PI_2,
        "{deltas:?}"
    );
    for w in deltas.windows(2) {
        assert!(
            (w[1] - w[0]).abs() < std::f64::consts::FRAC_PI_2,
            "{deltas:?}"
        );
    }
}

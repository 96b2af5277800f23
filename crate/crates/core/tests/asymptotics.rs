mod common;

use approx::assert_relative_eq;
use kohn_mesh::asymptotics::{asymptotic_elements, hybrid_vectors, hybrid_with};
use kohn_mesh::physics::PROTON_MASS as PROTON;
use kohn_mesh::{
    APolicy, Basis, ChannelFunctions, ChannelState, MeshSpec, PerimetricPoint, QuadratureConfig,
    Symmetry, ThreeBodySystem,
};
use num_complex::Complex64;

fn functions(system: &ThreeBodySystem, k: f64, symmetry: Symmetry) -> ChannelFunctions {
    let ch = ChannelState::from_k(system, k, symmetry, APolicy::EqualsK).unwrap();
    ChannelFunctions::new(system, ch).unwrap()
}

/// `(H - E) Ω` from Cartesian second differences of the particle positions.
fn fd_residual(
    system: &ThreeBodySystem,
    cf: &ChannelFunctions,
    lambda: u8,
    pt: &PerimetricPoint,
) -> Complex64 {
    let pos = common::embed(pt);
    let f = |p: &[[f64; 3]; 3]| cf.omega_value(lambda, &common::perimetric_of(p)).unwrap();
    let centre = f(&pos);
    let inv_m = [system.inv_m1(), 1.0 / system.m2, 1.0 / system.m3];
    let step = 2e-3;
    let mut kinetic = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        if inv_m[i] == 0.0 {
            continue;
        }
        for c in 0..3 {
            let mut plus = pos;
            let mut minus = pos;
            plus[i][c] += step;
            minus[i][c] -= step;
            // Fourth-order stencil.
            let mut plus2 = pos;
            let mut minus2 = pos;
            plus2[i][c] += 2.0 * step;
            minus2[i][c] -= 2.0 * step;
            let lap = (-f(&plus2) + f(&plus) * 16.0 - centre * 30.0 + f(&minus) * 16.0
                - f(&minus2))
                / (12.0 * step * step);
            kinetic -= lap * (0.5 * inv_m[i]);
        }
    }
    let v = system.z1 * system.z2 / pt.r12()
        + system.z1 * system.z3 / pt.r13()
        + system.z2 * system.z3 / pt.r23();
    kinetic + centre * (v - cf.channel.energy)
}

#[test]
fn closed_form_residual_matches_finite_differences() {
    let points = [
        PerimetricPoint::new(0.7, 1.9, 2.6),
        PerimetricPoint::new(1.5, 0.4, 3.1),
        PerimetricPoint::new(2.2, 3.0, 0.9),
    ];
    for system in [
        ThreeBodySystem::hydrogen_infinite(),
        ThreeBodySystem::hydrogen(PROTON),
    ] {
        for symmetry in [Symmetry::Singlet, Symmetry::Triplet] {
            for k in [0.2, 0.7] {
                let cf = functions(&system, k, symmetry);
                for pt in &points {
                    for lambda in [1, 2] {
                        let want = fd_residual(&system, &cf, lambda, pt);
                        let got = cf.residual_on_omega(lambda, pt).unwrap();
                        let scale = cf.omega_value(lambda, pt).unwrap().norm();
                        assert!(
                            (got - want).norm() < 1e-8 * scale.max(1e-3),
                            "{symmetry:?} k={k} λ={lambda} {pt:?}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn fixed_nucleus_direct_integrals_in_closed_form() {
    let system = ThreeBodySystem::hydrogen_infinite();
    for k in [0.1, 0.45, 0.8] {
        let cf = functions(&system, k, Symmetry::Singlet);
        let a = cf.a();
        let d = cf.direct_integrals(&QuadratureConfig::default()).unwrap();
        let k2 = k * k;
        // V̄ = -e^{-2x}(1 + 1/x).
        let ss = -(0.25 * (1.0 + k2).ln() + k2 / (4.0 * (1.0 + k2)));
        assert_relative_eq!(d.ss, ss, max_relative = 1e-11);
        let c = 2.0 + a;
        let sc = -0.5
            * ((k).atan() - (2.0 * k / c).atan() + 2.0 * k / (4.0 + 4.0 * k2)
                - 2.0 * k / (c * c + 4.0 * k2));
        assert_relative_eq!(d.sc, sc, max_relative = 1e-11);
        assert_relative_eq!(d.sh, k / 2.0, max_relative = 1e-12);
    }
}

#[test]
fn normalization_and_antisymmetry_identities() {
    for (system, tol) in [
        (ThreeBodySystem::hydrogen_infinite(), 1e-10),
        (ThreeBodySystem::hydrogen(PROTON), 1e-6),
    ] {
        for symmetry in [Symmetry::Singlet, Symmetry::Triplet] {
            for k in [0.1, 0.4, 0.8] {
                let ch = ChannelState::from_k(&system, k, symmetry, APolicy::EqualsK).unwrap();
                let el = asymptotic_elements(&system, &ch, &QuadratureConfig::default()).unwrap();
                let defect = (el.get(1, 2) - el.get(2, 1) - Complex64::i()).norm();
                assert!(defect < tol, "k={k} {symmetry:?}: {defect}");
                assert!(el.normalization_defect < tol);
                assert!(el.antisymmetry_defect < tol);
                assert!(el.error < 1e-8, "quadrature error {}", el.error);
            }
        }
    }
}

#[test]
fn heavy_nucleus_approaches_fixed_nucleus() {
    let heavy = ThreeBodySystem::hydrogen(1e9);
    let fixed = ThreeBodySystem::hydrogen_infinite();
    let config = QuadratureConfig::default();
    for symmetry in [Symmetry::Singlet, Symmetry::Triplet] {
        let basis = Basis::new(MeshSpec::new(4, 8, 1.0, 1.3, symmetry)).unwrap();
        let k = 0.3;
        let ch_h = ChannelState::from_k(&heavy, k, symmetry, APolicy::EqualsK).unwrap();
        let ch_f = ChannelState::from_k(&fixed, k, symmetry, APolicy::EqualsK).unwrap();
        let eh = asymptotic_elements(&heavy, &ch_h, &config).unwrap();
        let ef = asymptotic_elements(&fixed, &ch_f, &config).unwrap();
        for (a, b) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            assert!((eh.get(a, b) - ef.get(a, b)).norm() < 1e-6, "M{a}{b}");
        }
        let hh = hybrid_vectors(&basis, &heavy, &ch_h, &config).unwrap();
        let hf = hybrid_vectors(&basis, &fixed, &ch_f, &config).unwrap();
        for (x, y) in hh
            .sine
            .iter()
            .zip(&hf.sine)
            .chain(hh.cosine.iter().zip(&hf.cosine))
        {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn hybrid_vectors_are_self_converged() {
    let system = ThreeBodySystem::hydrogen_infinite();
    let basis = Basis::new(MeshSpec::new(10, 20, 1.0, 1.3, Symmetry::Singlet)).unwrap();
    let ch = ChannelState::from_k(&system, 0.2, Symmetry::Singlet, APolicy::EqualsK).unwrap();
    let config = QuadratureConfig::default();
    let hv = hybrid_vectors(&basis, &system, &ch, &config).unwrap();
    assert!(hv.error < 1e-10, "{}", hv.error);
    let fine = QuadratureConfig {
        tensor_factor: 2.5,
        ..config
    };
    let cf = ChannelFunctions::new(&system, ch).unwrap();
    let (s, c) = hybrid_with(&basis, &cf, &fine).unwrap();
    let diff = s
        .iter()
        .zip(&hv.sine)
        .chain(c.iter().zip(&hv.cosine))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-10, "{diff}");
}

#[test]
fn finite_mass_hybrid_vectors_agree_with_a_finer_rule() {
    let system = ThreeBodySystem::hydrogen(PROTON);
    let config = QuadratureConfig::default();
    let fine = QuadratureConfig {
        panel_order: 16,
        grading_ratio: 3.0,
        floor: 1e-12,
        ..config
    };
    for symmetry in [Symmetry::Singlet, Symmetry::Triplet] {
        let basis = Basis::new(MeshSpec::new(4, 8, 1.2, 1.4, symmetry)).unwrap();
        let ch = ChannelState::from_k(&system, 0.5, symmetry, APolicy::EqualsK).unwrap();
        let cf = ChannelFunctions::new(&system, ch).unwrap();
        let (s0, c0) = hybrid_with(&basis, &cf, &config).unwrap();
        let (s1, c1) = hybrid_with(&basis, &cf, &fine).unwrap();
        let scale = s1.iter().chain(&c1).fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in s0.iter().zip(&s1).chain(c0.iter().zip(&c1)) {
            assert!((a - b).abs() < 1e-11 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn omega_symmetry_under_electron_exchange() {
    for symmetry in [Symmetry::Singlet, Symmetry::Triplet] {
        let cf = functions(&ThreeBodySystem::hydrogen(PROTON), 0.35, symmetry);
        let pt = PerimetricPoint::new(0.9, 1.4, 2.3);
        for lambda in [1, 2] {
            let a = cf.omega_value(lambda, &pt).unwrap();
            let b = cf.omega_value(lambda, &pt.swap_yz()).unwrap();
            assert!((a - b * symmetry.sign()).norm() < 1e-14 * a.norm());
        }
    }
}

use std::f64::consts::PI;

use anharmonic::airy::airy_point;
use anharmonic::model::{sector_bound, validate_spec, Boundary};
use anharmonic::quad::{integrate_ray, DEFAULT_DECAY_THRESHOLD};
use anharmonic::semigroup::threshold_candidates;
use anharmonic::spectra::{
    eigenpairs, harmonic_eigenrecords, kappa_airy_full_line, kappa_galerkin, kappa_harmonic_exact, build_matrix,
    DiscretizationConfig,
};
use anharmonic::{Complex64, ErrorKind};

// mpmath airyaizero(1) and airyaizero(1, derivative=1)
const AI_ZERO_1: f64 = -2.338_107_410_459_767;
const AIP_ZERO_1: f64 = -1.018_792_971_647_471;

#[test]
fn first_airy_points() {
    assert!((airy_point(1, Boundary::Dirichlet).unwrap().mu - AI_ZERO_1).abs() < 1e-13);
    assert!((airy_point(1, Boundary::Neumann).unwrap().mu - AIP_ZERO_1).abs() < 1e-13);
}

#[test]
fn sector_bounds() {
    assert!((sector_bound(1.0) - 3.0 * PI / 4.0).abs() < 1e-15);
    assert!((sector_bound(2.0) - PI).abs() < 1e-15);
    assert!((sector_bound(4.0) - 3.0 * PI / 4.0).abs() < 1e-15);
    assert_eq!(validate_spec(2.0, PI).unwrap_err().kind(), ErrorKind::Validation);
    assert_eq!(validate_spec(3.0, 0.1).unwrap_err().kind(), ErrorKind::Validation);
}

#[test]
fn galerkin_reproduces_the_rotated_harmonic_spectrum() {
    let spec = validate_spec(2.0, 0.4).unwrap();
    let cfg = DiscretizationConfig::default().with_basis_size(120);
    let got = eigenpairs(&build_matrix(&spec, &cfg).unwrap(), 6).unwrap();
    let exact = harmonic_eigenrecords(0.4, 6).unwrap();
    for (g, e) in got.iter().zip(&exact) {
        assert_eq!(g.n, e.n);
        assert!((g.lambda - e.lambda).norm() < 1e-9 * e.lambda.norm());
        let dilation = Complex64::from_polar((2 * g.n - 1) as f64, 0.2);
        assert!((e.lambda - dilation).norm() < 1e-12 * dilation.norm());
    }
}

#[test]
fn harmonic_kappa_two_routes() {
    let spec = validate_spec(2.0, 0.9).unwrap();
    let cfg = DiscretizationConfig::default().with_basis_size(200);
    for n in [1, 4, 8] {
        let exact = kappa_harmonic_exact(0.9, n).unwrap();
        let galerkin = kappa_galerkin(&spec, &cfg, n).unwrap();
        assert!((galerkin.kappa / exact.kappa - 1.0).abs() < 1e-7, "n = {n}");
    }
}

#[test]
fn airy_kappa_reference() {
    // independent mpmath evaluation of the full-line Airy index at θ = π/3
    for (n, v) in [(1, 1.117_901_951_74), (2, 1.398_529_527_47)] {
        let k = kappa_airy_full_line(PI / 3.0, n).unwrap().kappa;
        assert!((k - v).abs() < 1e-9 * v);
    }
}

#[test]
fn exponential_on_a_ray() {
    let r = integrate_ray(|x| Complex64::new((-2.0 * x).exp(), 0.0), 1e-13, DEFAULT_DECAY_THRESHOLD).unwrap();
    assert!((r.value.re - 0.5).abs() < 1e-13);
}

#[test]
fn threshold_candidates_differ_by_two() {
    let [t, half] = threshold_candidates(0.6).unwrap();
    assert!(t > 0.0 && (t - 2.0 * half).abs() < 1e-15);
}

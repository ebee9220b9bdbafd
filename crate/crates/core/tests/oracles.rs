//! Closed-form values the estimators must reproduce.

use std::sync::Arc;

use nalgebra::DMatrix;

use lipnorm::certify::{verify, Problem};
use lipnorm::config::Config;
use lipnorm::free_space::{ae_dual_norm, molecule, FreeVector};
use lipnorm::lipmap::LipschitzMap;
use lipnorm::operator::{LinearOperator, Space};
use lipnorm::spaces::{Exponent, FinNormedSpace, PointedMetricSpace};
use lipnorm::tensor::{CrossKind, TensorElement, TensorTerm};
use lipnorm::{summing, Error};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

fn line(n: usize) -> Arc<PointedMetricSpace> {
    Arc::new(PointedMetricSpace::integer_line(n))
}

fn checked(problem: &Problem) -> lipnorm::NormEstimate {
    let est = problem.estimate(&Config::default()).unwrap();
    assert!(verify(problem, &est).unwrap().passed);
    est
}

#[test]
fn molecule_norm_is_distance() {
    let x = line(3);
    let m = molecule(&x, 1, 3).unwrap();
    let est = checked(&Problem::AeNorm(m.clone()));
    assert!(est.exact && close(est.upper, 2.0, 1e-12));
    let (dual, _) = ae_dual_norm(&x, &m.coeffs).unwrap();
    assert!(close(dual, 2.0, 1e-12));
}

#[test]
fn point_masses_on_the_line() {
    // δ(1) + δ(2) + δ(3) costs 1 + 2 + 3 to move to the base
    let x = line(3);
    let v = FreeVector::new(x.clone(), vec![1.0, 1.0, 1.0]).unwrap();
    let est = checked(&Problem::AeNorm(v));
    assert!(close(est.upper, 6.0, 1e-12) && est.exact);
}

#[test]
fn cancelling_masses_travel_the_gap() {
    // δ(3) − δ(1) on the line: one unit of mass moves distance 2
    let x = line(3);
    let v = FreeVector::new(x, vec![-1.0, 0.0, 1.0]).unwrap();
    assert!(close(checked(&Problem::AeNorm(v)).upper, 2.0, 1e-12));
}

#[test]
fn lipschitz_constant_of_an_isometry() {
    let pts = vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![1.0, 0.0]];
    let t = LipschitzMap::inclusion(&pts, FinNormedSpace::euclidean(2)).unwrap();
    let est = checked(&Problem::Lip(t.clone()));
    assert!(close(est.upper, 1.0, 1e-12));
    let op = checked(&Problem::Op(t.linearize()));
    assert!(close(op.upper, 1.0, 1e-12) && op.exact);
}

#[test]
fn identity_on_l2_is_sqrt_n_summing() {
    let e = FinNormedSpace::euclidean(3);
    let u = LinearOperator::new(Space::Ell(e), Space::Ell(e), DMatrix::identity(3, 3)).unwrap();
    let est = checked(&Problem::Pi(u, Exponent::two()));
    assert!(est.lower <= 3f64.sqrt() + 1e-9 && est.upper >= 3f64.sqrt() - 1e-9);
    assert!(close(est.upper, 3f64.sqrt(), 1e-9));
}

#[test]
fn identity_on_l1_is_sqrt_n_two_summing_up_to_grothendieck() {
    // ℓ_1^2 → ℓ_2^2 identity: Π_2 = ‖id‖_HS over basis-only witnesses is √2
    // and the Pietsch bound comes from the four sign vectors
    let u = LinearOperator::new(
        Space::Ell(FinNormedSpace::new(2, Exponent::one()).unwrap()),
        Space::Ell(FinNormedSpace::euclidean(2)),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let est = checked(&Problem::Pi(u, Exponent::two()));
    assert!(est.exact, "{est:?}");
    assert!(est.upper >= 1.0 - 1e-9 && est.upper <= 2f64.sqrt() + 1e-9);
}

#[test]
fn single_term_tensors_are_cross_values() {
    let x = line(2);
    let e = FinNormedSpace::euclidean(2);
    let u = TensorElement::new(x, e, vec![TensorTerm { x: 2, y: 0, e: vec![3.0, 4.0] }]).unwrap();
    for kind in CrossKind::ALL {
        let est = checked(&Problem::Cross {
            kind,
            tensor: u.clone(),
            p: Exponent::two(),
        });
        assert!(close(est.lower, 10.0, 1e-6) && close(est.upper, 10.0, 1e-6), "{kind:?}: {est:?}");
    }
}

#[test]
fn zero_operands_are_exactly_zero() {
    let x = line(2);
    let t = LipschitzMap::zero(x.clone(), FinNormedSpace::euclidean(2));
    for problem in [
        Problem::Lip(t.clone()),
        Problem::pi_sl(&t, Exponent::two()),
        Problem::pi_l(&t, Exponent::two()),
        Problem::AeNorm(FreeVector::zero(x)),
    ] {
        let est = checked(&problem);
        assert_eq!((est.lower, est.upper), (0.0, 0.0));
    }
}

#[test]
fn line_scan_grows_like_sqrt_n() {
    let cfg = Config::default();
    for n in 1..=4 {
        let t = lipnorm::harness::line_embedding(n).unwrap();
        let sl = summing::strictly_lip_p_summing_norm(&t, Exponent::two(), &cfg).unwrap();
        let l = summing::lip_p_summing_norm(&t, Exponent::two(), &cfg).unwrap();
        assert!(close(sl.lower, (n as f64).sqrt(), 1e-6), "n={n}: {sl:?}");
        assert!(close(l.upper, 1.0, 1e-6), "n={n}: {l:?}");
    }
}

#[test]
fn lipschitz_summing_capacity_is_reported() {
    let t = LipschitzMap::zero(line(12), FinNormedSpace::euclidean(1));
    let t = LipschitzMap::new(t.domain.clone(), t.codomain, (0..13).map(|i| vec![i as f64]).collect()).unwrap();
    let err = summing::lip_p_summing_norm(&t, Exponent::two(), &Config::default()).unwrap_err();
    assert!(matches!(err, Error::Capacity { .. }), "{err:?}");
}

#[test]
fn non_pointed_maps_are_rejected() {
    let r = LipschitzMap::new(line(1), FinNormedSpace::euclidean(1), vec![vec![1.0], vec![0.0]]);
    assert_eq!(r.unwrap_err(), Error::NotPointed);
}

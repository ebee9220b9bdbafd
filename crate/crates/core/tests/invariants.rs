use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lipnorm::certify::{verify, Problem};
use lipnorm::config::Config;
use lipnorm::free_space::{ae_dual_norm, FreeVector};
use lipnorm::harness::random_two_term;
use lipnorm::lipmap::LipschitzMap;
use lipnorm::spaces::{random_repaired_metric, Exponent, FinNormedSpace};
use lipnorm::tensor::CrossKind;

fn space(seed: u64, n: usize) -> Arc<lipnorm::spaces::PointedMetricSpace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Arc::new(random_repaired_metric(n, &mut rng).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn primal_and_dual_free_norms_agree(seed in any::<u64>(), n in 2usize..9, raw in prop::collection::vec(-5.0f64..5.0, 8)) {
        let x = space(seed, n);
        let coeffs = raw[..n - 1].to_vec();
        let m = FreeVector::new(x.clone(), coeffs.clone()).unwrap();
        let est = m.ae_norm().unwrap();
        let (dual, _) = ae_dual_norm(&x, &coeffs).unwrap();
        prop_assert!((est.upper - dual).abs() <= 1e-9 * (1.0 + dual));
    }

    #[test]
    fn free_norm_is_a_seminorm(seed in any::<u64>(), a in prop::collection::vec(-3.0f64..3.0, 4), b in prop::collection::vec(-3.0f64..3.0, 4), s in -4.0f64..4.0) {
        let x = space(seed, 5);
        let u = FreeVector::new(x.clone(), a).unwrap();
        let v = FreeVector::new(x, b).unwrap();
        let nu = u.ae_norm().unwrap().upper;
        let nv = v.ae_norm().unwrap().upper;
        let nsum = u.add(&v).unwrap().ae_norm().unwrap().upper;
        prop_assert!(nsum <= nu + nv + 1e-9);
        let ns = u.scale(s).ae_norm().unwrap().upper;
        prop_assert!((ns - s.abs() * nu).abs() <= 1e-9 * (1.0 + ns));
    }

    #[test]
    fn linearization_is_isometric(seed in any::<u64>(), n in 2usize..8, dim in 1usize..4, vals in prop::collection::vec(-2.0f64..2.0, 24)) {
        let x = space(seed, n);
        let e = FinNormedSpace::new(dim, Exponent::Infinity).unwrap();
        let mut values = vec![vec![0.0; dim]; n];
        for i in 1..n {
            values[i] = vals[(i - 1) * dim..i * dim].to_vec();
        }
        let t = LipschitzMap::new(x, e, values).unwrap();
        let op = Problem::Op(t.linearize()).estimate(&Config::default()).unwrap();
        prop_assert!(op.exact);
        prop_assert!((op.upper - t.lip_constant()).abs() <= 1e-9 * (1.0 + op.upper));
    }

    #[test]
    fn summing_norms_are_ordered(seed in any::<u64>(), vals in prop::collection::vec(-2.0f64..2.0, 6)) {
        // Lip ≤ Π_2^L ≤ Π_2^SL for every map
        let x = space(seed, 4);
        let e = FinNormedSpace::euclidean(2);
        let mut values = vec![vec![0.0; 2]; 4];
        for i in 1..4 {
            values[i] = vals[(i - 1) * 2..i * 2].to_vec();
        }
        let t = LipschitzMap::new(x, e, values).unwrap();
        let cfg = Config::default();
        let l = Problem::pi_l(&t, Exponent::two()).estimate(&cfg).unwrap();
        let sl = Problem::pi_sl(&t, Exponent::two()).estimate(&cfg).unwrap();
        prop_assert!(t.lip_constant() <= l.upper + 1e-9);
        prop_assert!(l.lower <= sl.upper + 1e-9);
    }

    #[test]
    fn cross_norms_are_ordered_and_certified(seed in any::<u64>()) {
        // ε^L ≤ every other cross-norm ≤ π^L
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_two_term(&mut rng, FinNormedSpace::euclidean(2)).unwrap();
        let cfg = Config::default();
        let mut ests = Vec::new();
        for kind in CrossKind::ALL {
            let problem = Problem::Cross { kind, tensor: u.clone(), p: Exponent::two() };
            let est = problem.estimate(&cfg).unwrap();
            prop_assert!(verify(&problem, &est).unwrap().passed);
            ests.push((kind, est));
        }
        let eps = ests.iter().find(|(k, _)| *k == CrossKind::InjL).unwrap().1.clone();
        let pi = ests.iter().find(|(k, _)| *k == CrossKind::ProjL).unwrap().1.clone();
        for (k, e) in &ests {
            prop_assert!(eps.lower <= e.upper + 1e-6, "{:?}", k);
            prop_assert!(e.lower <= pi.upper + 1e-6, "{:?}", k);
        }
    }
}

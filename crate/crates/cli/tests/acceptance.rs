//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! with the measured numbers, then asserts.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use lipnorm::certify::Problem;
use lipnorm::config::Config;
use lipnorm::free_space::{ae_dual_norm, FreeVector};
use lipnorm::harness::{self, HarnessReport, Suite, Verdict};
use lipnorm::io;
use lipnorm::lipmap::LipschitzMap;
use lipnorm::search::gaussian_vec;
use lipnorm::spaces::{random_euclidean_metric, random_repaired_metric, Exponent, FinNormedSpace, PointedMetricSpace};
use lipnorm::tensor::{CrossKind, TensorElement, TensorTerm};

const SEED: u64 = 0xC0FFEE;
const EXACT_TOL: f64 = 1e-9;
const CROSS_TOL: f64 = 1e-6;
const RATIO_SHARE: f64 = 0.9;
const UPPER_SLACK: f64 = 1e-6;
const WIDTH_SHARE: f64 = 0.05;
const RESIDUAL_TOL: f64 = 1e-9;

fn report(n: u32, ok: bool, detail: String) {
    // written to the handle directly so libtest does not capture it
    let line = format!("criterion {n}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(SEED ^ salt)
}

fn random_space(rng: &mut ChaCha8Rng, n: usize) -> Arc<PointedMetricSpace> {
    Arc::new(if rng.random::<bool>() {
        let k = rng.random_range(1..=3);
        random_euclidean_metric(n, k, rng).unwrap()
    } else {
        random_repaired_metric(n, rng).unwrap()
    })
}

fn random_exponent(rng: &mut ChaCha8Rng) -> Exponent {
    [Exponent::one(), Exponent::two(), Exponent::Infinity, Exponent::Finite(3.0)][rng.random_range(0..4)]
}

fn random_map(rng: &mut ChaCha8Rng, space: Arc<PointedMetricSpace>, e: FinNormedSpace) -> LipschitzMap {
    let values = (0..space.len())
        .map(|i| if i == space.base() { vec![0.0; e.dim] } else { gaussian_vec(rng, e.dim) })
        .collect();
    LipschitzMap::new(space, e, values).unwrap()
}

fn suite(s: Suite) -> (HarnessReport, Duration) {
    let t = Instant::now();
    let r = harness::run(&[s], None, &Config::with_seed(SEED)).unwrap();
    (r, t.elapsed())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

#[test]
fn criterion_1_free_norm_duality() {
    let mut rng = rng(1);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let x = random_space(&mut rng, n);
        let coeffs = gaussian_vec(&mut rng, x.free_dim());
        let primal = FreeVector::new(x.clone(), coeffs.clone()).unwrap().ae_norm().unwrap();
        let (dual, _) = ae_dual_norm(&x, &coeffs).unwrap();
        worst = worst.max(rel(primal.upper, dual)).max(rel(primal.lower, dual));
    }
    let el = t.elapsed();
    let ok = worst <= EXACT_TOL && el < Duration::from_secs(10);
    report(1, ok, format!("100 spaces, max relative gap {worst:.2e}, {el:.2?}"));
    assert!(ok);
}

#[test]
fn criterion_2_linearization_isometry() {
    let mut rng = rng(2);
    let cfg = Config::with_seed(SEED);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut all_exact = true;
    for _ in 0..200 {
        let n = rng.random_range(2..=10);
        let x = random_space(&mut rng, n);
        let e = FinNormedSpace::new(rng.random_range(1..=4), random_exponent(&mut rng)).unwrap();
        let map = random_map(&mut rng, x, e);
        let op = Problem::Op(map.linearize()).estimate(&cfg).unwrap();
        all_exact &= op.exact;
        worst = worst.max(rel(op.upper, map.lip_constant())).max(rel(op.lower, map.lip_constant()));
    }
    let el = t.elapsed();
    let ok = all_exact && worst <= EXACT_TOL && el < Duration::from_secs(10);
    report(2, ok, format!("200 maps, max relative gap {worst:.2e}, all exact {all_exact}, {el:.2?}"));
    assert!(ok);
}

#[test]
fn criterion_3_cross_norm_axiom() {
    let mut rng = rng(3);
    let cfg = Config::with_seed(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=6);
        let x = random_space(&mut rng, n);
        let e = FinNormedSpace::new(rng.random_range(1..=3), random_exponent(&mut rng)).unwrap();
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        let v = gaussian_vec(&mut rng, e.dim);
        let target = x.dist(a, b) * e.norm(&v);
        let u = TensorElement::new(x, e, vec![TensorTerm { x: a, y: b, e: v }]).unwrap();
        let p = [Exponent::two(), Exponent::Finite(1.5), Exponent::Finite(3.0)][rng.random_range(0..3)];
        for kind in CrossKind::ALL {
            let est = Problem::Cross {
                kind,
                tensor: u.clone(),
                p,
            }
            .estimate(&cfg)
            .unwrap();
            worst = worst.max(rel(est.lower, target)).max(rel(est.upper, target));
        }
    }
    let ok = worst <= CROSS_TOL;
    report(3, ok, format!("50 tensors x 6 norms, max relative deviation {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_4_pairing_ratio() {
    let (r, el) = suite(Suite::Thm35);
    let s = r.suite(Suite::Thm35).unwrap();
    let mut bad = 0;
    let mut min_share = f64::INFINITY;
    for c in &s.reports {
        let pi = c.bracket("pi").unwrap();
        let ratio = c.bracket("pairing").map_or(0.0, |e| e.lower);
        if pi.lower > 0.0 {
            min_share = min_share.min(ratio / pi.lower);
        }
        if ratio < RATIO_SHARE * pi.lower || ratio > pi.upper + UPPER_SLACK {
            bad += 1;
        }
    }
    let ok = s.reports.len() == 30 && bad == 0 && el < Duration::from_secs(300);
    report(4, ok, format!("30 instances, {bad} outside [0.9 lower, upper], min ratio/lower {min_share:.9}, {el:.2?}"));
    assert!(ok);
}

#[test]
fn criterion_5_mu_and_g_coincide() {
    let (r, el) = suite(Suite::Cor314);
    let s = r.suite(Suite::Cor314).unwrap();
    let mut bad = 0;
    let mut widest: f64 = 0.0;
    for c in &s.reports {
        let mu = c.bracket("mu").unwrap();
        let g = c.bracket("gpL").unwrap();
        widest = widest.max(mu.relative_width()).max(g.relative_width());
        if !mu.overlaps(g, UPPER_SLACK) || mu.relative_width() > WIDTH_SHARE || g.relative_width() > WIDTH_SHARE {
            bad += 1;
        }
    }
    let ok = s.reports.len() == 30 && bad == 0 && el < Duration::from_secs(300);
    report(5, ok, format!("30 tensors, {bad} failing, widest bracket {widest:.2e}, {el:.2?}"));
    assert!(ok);
}

#[test]
fn criterion_6_linear_maps_on_subsets() {
    let (r, _) = suite(Suite::Prop38);
    let s = r.suite(Suite::Prop38).unwrap();
    let count = |check: &str| {
        let all: Vec<_> = s.reports.iter().filter(|c| c.check == check).collect();
        (all.iter().filter(|c| c.verdict == Verdict::Pass).count(), all.len())
    };
    let (ideal_ok, ideal_n) = count("prop38-ideal");
    let (overlap_ok, overlap_n) = count("prop38-overlap");
    let ok = ideal_n == 30 && ideal_ok == ideal_n && overlap_ok == overlap_n;
    report(
        6,
        ok,
        format!("ideal inequality {ideal_ok}/{ideal_n}, three-way bracket overlap {overlap_ok}/{overlap_n}"),
    );
    assert!(ok);
}

#[test]
fn criterion_7_line_scan() {
    let (r, el) = suite(Suite::Cor37);
    let s = r.suite(Suite::Cor37).unwrap();
    let sl: Vec<f64> = s.reports.iter().map(|c| c.bracket("pisl").unwrap().lower).collect();
    let l: Vec<f64> = s.reports.iter().map(|c| c.bracket("pil").unwrap().upper).collect();
    let increasing = sl.windows(2).all(|w| w[1] > w[0]);
    let capped = l.iter().all(|v| *v < harness::LINE_CAP);
    let ok = sl.len() == 5 && increasing && sl[3] > 1.8 && capped && el < Duration::from_secs(300);
    report(7, ok, format!("sl lower {sl:.6?}, l upper {l:.6?}, cap {}, {el:.2?}", harness::LINE_CAP));
    assert!(ok);
}

fn run_bin(args: &[&str], files: &[&Path]) -> (Option<i32>, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_lipnorm"))
        .env_remove("LIPNORM_SEED")
        .args(args)
        .args(files)
        .output()
        .unwrap();
    (out.status.code(), out.stdout)
}

#[test]
fn criterion_8_certificates_reverify() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng(8);
    let mut outputs: Vec<Vec<u8>> = Vec::new();
    for i in 0..8 {
        let n = rng.random_range(2..=5);
        let x = random_space(&mut rng, n);
        let e = FinNormedSpace::new(rng.random_range(1..=3), random_exponent(&mut rng)).unwrap();
        let map = random_map(&mut rng, x.clone(), e);
        let mp = dir.path().join(format!("map{i}.json"));
        std::fs::write(&mp, io::map_json(&map).to_string()).unwrap();
        let p = ["2", "1.5", "3"][i % 3];
        outputs.push(run_bin(&["lip"], &[&mp]).1);
        for kind in ["op", "pi", "dp", "pisl", "pil", "dpl"] {
            outputs.push(run_bin(&["norm", "--kind", kind, "--p", p], &[&mp]).1);
        }
        let v = FreeVector::new(x.clone(), gaussian_vec(&mut rng, x.free_dim())).unwrap();
        let vp = dir.path().join(format!("vec{i}.json"));
        std::fs::write(&vp, io::vector_json(&v).to_string()).unwrap();
        let sp = dir.path().join(format!("space{i}.json"));
        std::fs::write(&sp, io::space_json(&x).to_string()).unwrap();
        outputs.push(run_bin(&["aenorm"], &[&sp, &vp]).1);
        let u = harness::random_two_term(&mut rng, e).unwrap();
        let tp = dir.path().join(format!("tensor{i}.json"));
        std::fs::write(&tp, io::tensor_json(&u).to_string()).unwrap();
        for kind in CrossKind::ALL {
            outputs.push(run_bin(&["crossnorm", "--kind", kind.name(), "--p", p], &[&tp]).1);
        }
    }
    outputs.push(run_bin(&["check", "--suite", "all", "--seed", "8"], &[]).1);

    let (mut total, mut passed, mut worst) = (0usize, 0usize, 0.0f64);
    for (i, out) in outputs.iter().enumerate() {
        let p = dir.path().join(format!("out{i}.json"));
        std::fs::write(&p, out).unwrap();
        let (_, cert) = run_bin(&["certify"], &[&p]);
        let v: Value = serde_json::from_slice(&cert).unwrap_or_else(|_| panic!("certify failed on output {i}"));
        for r in v["results"].as_array().unwrap() {
            let ver = &r["verification"];
            total += 1;
            passed += ver["passed"].as_bool().unwrap() as usize;
            worst = worst
                .max(ver["lower_residual"].as_f64().unwrap())
                .max(ver["upper_residual"].as_f64().unwrap());
        }
    }
    let ok = total > 0 && passed == total && worst < RESIDUAL_TOL;
    report(8, ok, format!("{passed}/{total} certificates re-verified, max residual {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_9_reports_are_reproducible() {
    let args = ["check", "--suite", "all", "--seed", "9"];
    let (code_a, a) = run_bin(&args, &[]);
    let (code_b, b) = run_bin(&[&args[..], &["--threads", "1"]].concat(), &[]);
    let ok = !a.is_empty() && a == b && code_a == code_b;
    report(9, ok, format!("{} bytes, identical {}, exit codes {code_a:?}/{code_b:?}", a.len(), a == b));
    assert!(ok);
}

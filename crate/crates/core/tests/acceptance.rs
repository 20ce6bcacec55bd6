//! Nine criteria, each printing a PASS/FAIL line with its runtime. Runs
//! without the libtest harness so the lines are never captured.

mod common;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{max_diff, mix, oracle_abs, oracle_bayesian, oracle_haar, oracle_markovian, random_kraus, CM};
use kraus_feedback::channels::{build_ad_optimal_decomposition, build_qutrit_dephasing, KrausSet};
use kraus_feedback::experiments::{
    grid, run_ad_advantage, run_dephasing_null, run_prop1_rank2, run_qubit_conjecture, AdAdvantageConfig,
    ConjectureConfig, DephasingConfig, Prop1Config,
};
use kraus_feedback::fidelity::{
    bayesian_terms, fidelity_bayesian, fidelity_from_definition, fidelity_markovian, fidelity_one_step,
    markovian_terms, EvalOptions, FeedbackPlan, Strategy as Feedback,
};
use kraus_feedback::linalg::{
    haar_random_unitary, matrix_abs, polar_decompose, trace_sq_identity_check, unitarity_error, RngSeed,
};
use kraus_feedback::optimizer::{euler3, optimize_single_step, OptimizerConfig, Parametrization};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (fn() -> Outcome, u64, &'static str);

const LAMBDAS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn real(rows: [[f64; 2]; 2]) -> CM {
    DMatrix::from_fn(2, 2, |i, j| c(rows[i][j]))
}

/// Rank-three qubit channel: `sqrt(l) |0><0|`, `sqrt(l) |0><1|`, `sqrt(1-l) I`.
fn rank_three(lambda: f64) -> KrausSet {
    let a = lambda.sqrt();
    let b = (1.0 - lambda).sqrt();
    KrausSet::new(vec![real([[a, 0.0], [0.0, 0.0]]), real([[0.0, a], [0.0, 0.0]]), real([[b, 0.0], [0.0, b]])])
        .unwrap()
}

fn brute() -> EvalOptions {
    EvalOptions::default()
}

fn library_pair(steps: Vec<KrausSet>) -> (f64, f64) {
    let plan = FeedbackPlan::new(Feedback::Markovian, steps).unwrap();
    (
        fidelity_markovian(&plan, &brute()).unwrap().unclamped,
        fidelity_bayesian(&plan, &brute()).unwrap().unclamped,
    )
}

fn criterion_1() -> Outcome {
    let mut worst_opt = 0.0f64;
    let mut worst_n = 0.0f64;
    for lambda in LAMBDAS {
        let set = rank_three(lambda);
        let cfg = OptimizerConfig::grid(Parametrization::Euler3).with_refine(true);
        let best = optimize_single_step(&set, &cfg).map_err(|e| e.to_string())?;
        let f1 = 0.5 + (1.0 - lambda).sqrt() / 2.0;
        let gap = (best.best_value - f1).abs();
        ensure(gap < 1e-6, || format!("lambda {lambda}: optimized F1 {} vs {f1}", best.best_value))?;
        ensure(oracle_markovian(&[&best.best_set]) <= f1 + 1e-9, || format!("lambda {lambda}: optimum exceeds {f1}"))?;
        worst_opt = worst_opt.max(gap);

        let t13 = -0.5 * lambda.sqrt().asin();
        for t23 in [0.0, FRAC_PI_2] {
            let mixed = mix(&set, &euler3(t13, t23));
            for n in 1..=6 {
                let want = 0.5 + (1.0 - lambda).powf(n as f64 / 2.0) / 2.0;
                let copies: Vec<&KrausSet> = vec![&mixed; n];
                let (om, ob) = (oracle_markovian(&copies), oracle_bayesian(&copies));
                let (lm, lb) = library_pair(vec![mixed.clone(); n]);
                for (label, v) in [("oracle F", om), ("oracle F'", ob), ("F", lm), ("F'", lb)] {
                    let err = (v - want).abs();
                    ensure(err < 1e-9, || format!("lambda {lambda}, theta23 {t23}, n {n}: {label} = {v} vs {want}"))?;
                    worst_n = worst_n.max(err);
                }
            }
        }
    }
    Ok(format!("max optimized F1 error {worst_opt:.2e}; max F_n/F'_n error {worst_n:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for lambda in LAMBDAS {
        let want = 0.5 + (1.0 - lambda) / 2.0;
        let f = fidelity_one_step(&rank_three(lambda)).unclamped;
        ensure((f - want).abs() < 1e-12, || format!("lambda {lambda}: F1 {f} vs {want}"))?;
        worst = worst.max((f - want).abs());
    }
    Ok(format!("max error {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let t = run_prop1_rank2(&Prop1Config { angle_step: PI / 20.0 }).map_err(|e| e.to_string())?;
    ensure(t.rows.len() == 441, || format!("{} grid points", t.rows.len()))?;
    let tol = PI / 1e4;
    let mut worst = 0.0f64;
    for r in &t.rows {
        let (theta, phi) = (r.params[0], r.params[1]);
        let alpha = r.extras[0].rem_euclid(PI);
        let on_axis = [0.0, FRAC_PI_2, PI].iter().any(|a| (alpha - a).abs() <= tol + 1e-12);
        ensure(on_axis, || format!("theta {theta}, phi {phi}: alpha* = {alpha}"))?;
        let canonical = KrausSet::new(vec![
            real([[theta.cos(), 0.0], [0.0, phi.cos()]]),
            real([[0.0, phi.sin()], [theta.sin(), 0.0]]),
        ])
        .unwrap();
        let reference = oracle_markovian(&[&canonical]);
        let best = r.f_markov.ok_or("missing value")?;
        ensure((best - reference).abs() < 1e-9, || format!("theta {theta}, phi {phi}: {best} vs {reference}"))?;
        worst = worst.max((best - reference).abs());
    }
    Ok(format!("441 points on axis; max |best - canonical F1| {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = f64::INFINITY;
    for k in 0..200 {
        let d = 2 + k % 2;
        let m = 1 + (k / 2) % 4;
        let n = 1 + (k / 8) % 4;
        let set = random_kraus(d, m, &mut rng);
        let steps: Vec<KrausSet> = (0..n).map(|_| mix(&set, &oracle_haar(m, &mut rng))).collect();
        let (f, fb) = library_pair(steps);
        ensure(fb >= f - 1e-10, || format!("plan {k} (d {d}, m {m}, n {n}): F' {fb} < F {f}"))?;
        worst = worst.min(fb - f);
    }
    Ok(format!("200 plans; min F' - F = {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let gammas = grid(0.1, 3.0, 0.1).map_err(|e| e.to_string())?;
    ensure(gammas.len() == 30, || format!("{} gamma values", gammas.len()))?;
    let t = run_dephasing_null(&DephasingConfig { gammas: gammas.clone(), n_max: 6 }).map_err(|e| e.to_string())?;
    ensure(t.rows.len() == 180, || format!("{} rows", t.rows.len()))?;
    let gap = t.rows.iter().map(|r| r.diff.unwrap().abs()).fold(0.0, f64::max);
    ensure(gap < 1e-9, || format!("max |F' - F| = {gap:e}"))?;
    let mut commutator = 0.0f64;
    for &gamma in &gammas {
        let set = build_qutrit_dephasing(gamma).map_err(|e| e.to_string())?;
        let abs: Vec<CM> = set.operators().iter().map(oracle_abs).collect();
        for a in &abs {
            for b in &abs {
                commutator = commutator.max(max_diff(&(a * b), &(b * a)));
            }
        }
    }
    ensure(commutator < 1e-12, || format!("max commutator entry {commutator:e}"))?;
    Ok(format!("max |F' - F| {gap:.2e}; max commutator {commutator:.2e}"))
}

fn criterion_6() -> Outcome {
    let n_max = 8;
    let t = run_ad_advantage(&AdAdvantageConfig { p_step: 0.05, n_max }).map_err(|e| e.to_string())?;
    ensure(t.rows.len() == 21 * n_max, || format!("{} rows", t.rows.len()))?;
    let diff = |p: f64, n: usize| {
        t.rows.iter().find(|r| (r.params[0] - p).abs() < 1e-12 && r.n == n).and_then(|r| r.diff).unwrap()
    };
    let ps = grid(0.0, 1.0, 0.05).unwrap();

    let min = t.rows.iter().map(|r| r.diff.unwrap()).fold(f64::INFINITY, f64::min);
    ensure(min >= -1e-10, || format!("(a) min difference {min:e}"))?;

    let mut zero = 0.0f64;
    for &p in &ps {
        zero = zero.max(diff(p, 1).abs());
    }
    for n in 1..=n_max {
        zero = zero.max(diff(0.0, n).abs()).max(diff(1.0, n).abs());
    }
    ensure(zero <= 1e-9, || format!("(b) max |difference| at n=1 or p in {{0,1}}: {zero:e}"))?;

    for n in 2..=n_max {
        let peak = ps.iter().map(|&p| diff(p, n)).fold(f64::NEG_INFINITY, f64::max);
        ensure(peak > 1e-6, || format!("(c) n {n}: max difference {peak:e}"))?;
    }

    let counts: Vec<usize> = (1..=n_max).map(|n| ps.iter().filter(|&&p| diff(p, n) > 1e-4).count()).collect();
    ensure(counts.windows(2).all(|w| w[1] >= w[0]), || format!("(d) counts {counts:?}"))?;

    // spot-check the table against the independent oracle
    for &p in &[0.2, 0.5, 0.85] {
        let set = build_ad_optimal_decomposition(p).map_err(|e| e.to_string())?;
        for n in 1..=3 {
            let copies: Vec<&KrausSet> = vec![&set; n];
            let want = oracle_bayesian(&copies) - oracle_markovian(&copies);
            ensure((diff(p, n) - want).abs() < 1e-10, || format!("p {p}, n {n}: {} vs oracle {want}", diff(p, n)))?;
        }
    }
    Ok(format!("min difference {min:.2e}; counts above 1e-4 per n {counts:?}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let d = 1 + k % 3;
        let m = (1 + (k / 3) % 4).min(d * d);
        let n = 1 + k % 2;
        let set = random_kraus(d, m, &mut rng);
        let steps: Vec<KrausSet> = (0..n).map(|_| mix(&set, &oracle_haar(m, &mut rng))).collect();
        let plan = FeedbackPlan::new(Feedback::Markovian, steps).unwrap();
        let (f, fb) = library_pair(plan.decompositions().to_vec());
        let dm = fidelity_from_definition(&markovian_terms(&plan).unwrap(), d).unwrap();
        let db = fidelity_from_definition(&bayesian_terms(&plan).unwrap(), d).unwrap();
        let refs: Vec<&KrausSet> = plan.decompositions().iter().collect();
        for (label, a, b) in
            [("F", f, dm), ("F'", fb, db), ("oracle F", f, oracle_markovian(&refs)), ("oracle F'", fb, oracle_bayesian(&refs))]
        {
            ensure((a - b).abs() < 1e-10, || format!("channel {k}: {label} {a} vs {b}"))?;
            worst = worst.max((a - b).abs());
        }
    }
    let mut transfer = 0.0f64;
    for k in 0..20 {
        let d = 2 + k % 2;
        let set = random_kraus(d, 2 + k % 3, &mut rng);
        for n in 1..=6 {
            let plan = FeedbackPlan::stationary(Feedback::Markovian, set.clone(), n).unwrap();
            let b = fidelity_markovian(&plan, &brute()).unwrap().unclamped;
            let t = fidelity_markovian(&plan, &EvalOptions::transfer()).unwrap().unclamped;
            ensure((b - t).abs() < 1e-10, || format!("channel {k}, n {n}: brute {b} vs transfer {t}"))?;
            transfer = transfer.max((b - t).abs());
        }
    }
    Ok(format!("definition max error {worst:.2e}; transfer max error {transfer:.2e}"))
}

fn criterion_8() -> Outcome {
    let cfg = ConjectureConfig {
        lambdas: vec![0.25, 0.5, 0.75],
        angles: vec![FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4],
        optimizer: OptimizerConfig::haar(10_000, RngSeed(8)).with_refine(true),
        steps: 2,
        shard: None,
    };
    let t = run_qubit_conjecture(&cfg).map_err(|e| e.to_string())?;
    ensure(t.rows.len() >= 200, || format!("only {} points", t.rows.len()))?;
    let gap = t.rows.iter().map(|r| (r.f_bayes.unwrap() - r.f_markov.unwrap()).abs()).fold(0.0, f64::max);
    ensure(gap < 2e-3, || format!("max |max F'_2 - max F_2| = {gap:e}"))?;
    ensure(t.rows.iter().all(|r| r.f_markov.unwrap() <= 1.0 + 1e-12), || "fidelity above one".into())?;
    Ok(format!("{} points; max gap {gap:.2e}", t.rows.len()))
}

fn matrix(d: usize) -> impl Strategy<Value = CM> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d * d)
        .prop_map(move |v| DMatrix::from_iterator(d, d, v.into_iter().map(|(re, im)| Complex64::new(re, im))))
}

fn min_eigenvalue(h: &CM) -> f64 {
    let d = h.nrows();
    let embed = DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let z = h[(i % d, j % d)];
        match (i < d, j < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let sym = (&embed + embed.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn criterion_9() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 200, failure_persistence: None, ..Config::default() });
    let square = (1usize..=4).prop_flat_map(matrix);

    runner
        .run(&square, |m| {
            let f = polar_decompose(&m).unwrap();
            prop_assert!(max_diff(&(&f.unitary_part * &f.absolute_part), &m) < 1e-10);
            prop_assert!(unitarity_error(&f.unitary_part) < 1e-10);
            Ok(())
        })
        .map_err(|e| format!("polar reconstruction: {e}"))?;

    runner
        .run(&square, |m| {
            let a = matrix_abs(&m).unwrap();
            prop_assert!(min_eigenvalue(&a) > -1e-10);
            prop_assert!(max_diff(&(&a * &a), &(m.adjoint() * &m)) < 1e-10);
            Ok(())
        })
        .map_err(|e| format!("abs PSD: {e}"))?;

    runner
        .run(&(square, any::<u64>()), |(m, seed)| {
            let u = haar_random_unitary(m.nrows(), &mut RngSeed(seed).stream(0)).unwrap();
            prop_assert!(max_diff(&matrix_abs(&(&u * &m)).unwrap(), &matrix_abs(&m).unwrap()) < 1e-10);
            Ok(())
        })
        .map_err(|e| format!("unitary absorption: {e}"))?;

    runner
        .run(&matrix(2), |m| {
            let (lhs, rhs) = trace_sq_identity_check(&m).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
            // (tr|M|)^2 = tr(M^dag M) + 2 |det M|, against the oracle
            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm();
            let fro: f64 = m.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((fro + 2.0 * det - common::oracle_trace_norm(&m).powi(2)).abs() < 1e-12);
            Ok(())
        })
        .map_err(|e| format!("2x2 trace identity: {e}"))?;

    let mut worst = 0.0f64;
    for d in 1..=4 {
        let seed = RngSeed(9000 + d as u64);
        let mean = (0..10_000u64)
            .map(|i| haar_random_unitary(d, &mut seed.stream(i)).unwrap()[(0, 0)].norm_sqr())
            .sum::<f64>()
            / 1e4;
        let err = (mean - 1.0 / d as f64).abs();
        ensure(err < 0.02, || format!("Haar d {d}: mean |U00|^2 = {mean}"))?;
        worst = worst.max(err);
    }
    Ok(format!("4 kernel properties x 200 cases; Haar mean max error {worst:.2e}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (criterion_1, 10, "rank-three closed forms"),
        (criterion_2, 10, "canonical single-step formula"),
        (criterion_3, 30, "rank-two rotation sweep"),
        (criterion_4, 60, "Bayesian dominance"),
        (criterion_5, 20, "dephasing null result"),
        (criterion_6, 120, "amplitude-damping advantage"),
        (criterion_7, 60, "definition and transfer oracles"),
        (criterion_8, 600, "qubit conjecture grid"),
        (criterion_9, 60, "kernel identities"),
    ];
    let mut failed = Vec::new();
    for (i, (run, limit, name)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed < Duration::from_secs(limit) {
                Ok(detail)
            } else {
                Err(format!("{detail}; over the {limit} s budget"))
            }
        });
        let secs = elapsed.as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}, {secs:.2} s): {detail}", i + 1),
            Err(detail) => {
                println!("FAIL criterion {} ({name}, {secs:.2} s): {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 9 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

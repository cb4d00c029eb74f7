//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria that miss their thresholds are reported, not asserted; set
//! `TWOHOP_ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero exit.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use twohop::bench::{fit_dof_slope, run_sweep, Normalizer, Scheme, SweepConfig, SweepRow};
use twohop::channel::{sample_ensemble, ChannelPair, Distribution, EnsembleSpec, Field, SwapVariant};
use twohop::converse::{dof_upper_bound, verify_decomposition, BoundMode};
use twohop::linalg::{solve_sylvester, Matrix, SylvesterProblem};
use twohop::relaying::{check_mimo_topology, KernelLabel, mimo_phase_kernels, scalar_phase_kernels, RelayKernel, PHASE_TOPOLOGIES};
use twohop::schemes::{phase_kernels, three_phase_mimo_rate, simulate_transmission, SimOptions};

const SEED: u64 = 0;
const FIT_WINDOW: (f64, f64) = (50.0, 80.0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

fn sweep(m: usize, field: Field, r: f64, schemes: Vec<Scheme>, p_grid_db: Vec<f64>, n_channels: usize) -> Vec<SweepRow> {
    let distribution = if field == Field::Complex { Distribution::UniformPhase } else { Distribution::GaussianEntries };
    let cfg = SweepConfig {
        ensemble: EnsembleSpec { m, r, seed: SEED, distribution, field },
        schemes,
        p_grid_db,
        n_channels,
        seed: SEED,
        output_path: None,
        refine_budget: 500,
    };
    run_sweep(&cfg).expect("sweep").rows
}

fn slope(rows: &[SweepRow], scheme: &str, norm: Normalizer) -> f64 {
    let rows: Vec<SweepRow> = rows.iter().filter(|r| r.scheme == scheme).cloned().collect();
    fit_dof_slope(&rows, norm, FIT_WINDOW).expect("fit").slope
}

fn slope_criterion(m: usize, field: Field, norm: Normalizer, window: (f64, f64), budget: Duration) -> (bool, String) {
    let t = Instant::now();
    let rows = sweep(m, field, 1.0, vec![Scheme::ThreePhase], grid(FIT_WINDOW.0, FIT_WINDOW.1, 5.0), 20);
    let s = slope(&rows, "three_phase", norm);
    let skips: usize = rows.iter().map(|r| r.skips).max().unwrap_or(0);
    let elapsed = t.elapsed();
    let pass = s >= window.0 && s <= window.1 && elapsed < budget && skips == 0;
    (pass, format!("M={m} {field:?} slope {s:.4} in [{:.2}, {:.2}], skips {skips}, {elapsed:.1?} < {budget:?}", window.0, window.1))
}

fn ac1() -> Outcome {
    let (pass, detail) = slope_criterion(1, Field::Real, Normalizer::HalfLog2, (1.28, 1.34), Duration::from_secs(10));
    Outcome { pass, detail }
}

fn ac2() -> Outcome {
    let (pass, detail) = slope_criterion(2, Field::Real, Normalizer::HalfLog2, (3.20, 3.40), Duration::from_secs(60));
    Outcome { pass, detail }
}

fn ac3() -> Outcome {
    let t = Instant::now();
    let (p1, d1) = slope_criterion(1, Field::Complex, Normalizer::Log2, (1.60, 1.70), Duration::from_secs(120));
    let (p2, d2) = slope_criterion(2, Field::Complex, Normalizer::Log2, (3.55, 3.72), Duration::from_secs(120));
    let elapsed = t.elapsed();
    Outcome { pass: p1 && p2 && elapsed < Duration::from_secs(120), detail: format!("{d1}; {d2}; total {elapsed:.1?}") }
}

fn ac4() -> Outcome {
    let cp = sample_ensemble(&EnsembleSpec {
        m: 1,
        r: 1.0,
        seed: SEED,
        distribution: Distribution::GaussianEntries,
        field: Field::Real,
    })
    .unwrap();
    let fixed = dof_upper_bound(&cp, &[RelayKernel::scalar(0.4, 0.3).unwrap()]).unwrap();
    let rows = sweep(1, Field::Real, 1.0, vec![Scheme::ThreePhase, Scheme::Af], grid(FIT_WINDOW.0, FIT_WINDOW.1, 5.0), 20);
    let s3 = slope(&rows, "three_phase", Normalizer::HalfLog2);
    let saf = slope(&rows, "af", Normalizer::HalfLog2);
    let gap = s3 - saf;
    Outcome {
        pass: fixed.min_bound == 1.0 && gap >= 0.25,
        detail: format!("fixed-kernel min bound {}, slopes three_phase {s3:.4} vs fixed AF {saf:.4}, gap {gap:.4} >= 0.25", fixed.min_bound),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.sample(StandardNormal))
}

fn ac5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut channels = 0;
    let mut i = 0;
    while channels < 10 {
        let cp = sample_ensemble(
            &EnsembleSpec { m: 1, r: 1.0, seed: SEED, distribution: Distribution::GaussianEntries, field: Field::Real }.member(i),
        )
        .unwrap();
        i += 1;
        for l in 1..=3 {
            let kernels: Vec<RelayKernel> = (0..1000)
                .map(|_| RelayKernel::new(random_matrix(&mut rng, l), random_matrix(&mut rng, l), 1.0, KernelLabel::Custom).unwrap())
                .collect();
            worst = worst.max(verify_decomposition(&cp, &kernels, l).unwrap());
        }
        channels += 1;
    }
    Outcome { pass: worst <= 1e-9, detail: format!("max relative residual {worst:.3e} <= 1e-9 over 10 channels x 1000 kernels x l in 1..=3") }
}

fn ac6() -> Outcome {
    let spec = EnsembleSpec { m: 2, r: 1.0, seed: SEED, distribution: Distribution::GaussianEntries, field: Field::Real };
    let total = 1000;
    let mut ok = 0;
    let (mut null_worst, mut pattern_worst): (f64, f64) = (0.0, 0.0);
    let mut failures = Vec::new();
    for i in 0..total {
        let cp = sample_ensemble(&spec.member(i)).unwrap();
        match mimo_phase_kernels(&cp, SwapVariant::RealLastFirst) {
            Ok(kernels) => {
                let mut all = true;
                for (k, &t) in kernels.iter().zip(PHASE_TOPOLOGIES.iter()) {
                    let c = check_mimo_topology(&cp, k, t, SwapVariant::RealLastFirst).unwrap();
                    null_worst = null_worst.max(c.null_residual);
                    pattern_worst = pattern_worst.max(c.leak_pattern_residual);
                    all &= c.passes(2);
                }
                ok += usize::from(all);
            }
            Err(e) => failures.push(format!("#{i}: {e}")),
        }
    }
    let rate = ok as f64 / total as f64;
    let mut detail = format!(
        "success {ok}/{total} ({:.1}%) >= 99.9%, worst null {null_worst:.2e}, worst leak pattern {pattern_worst:.2e} <= 1e-8",
        100.0 * rate
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!(", first failure {f}"));
    }
    Outcome { pass: rate >= 0.999, detail }
}

/// Row-major vectorization: `vec_r(X a) = (I ⊗ aᵀ) vec_r(X)`,
/// `vec_r(b X) = (b ⊗ I) vec_r(X)`.
fn dense_sylvester(a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let n = a.nrows();
    let mut sys = Matrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                sys[(row, i * n + k)] += a[(k, j)];
                sys[(row, k * n + j)] -= b[(i, k)];
            }
        }
    }
    let rhs = DVector::from_iterator(n * n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|ij| c[ij]));
    let x = sys.full_piv_lu().solve(&rhs).expect("dense solve");
    Matrix::from_fn(n, n, |i, j| x[i * n + j])
}

fn ac7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    for t in 0..100 {
        let n = 1 + t % 6;
        let a = random_matrix(&mut rng, n);
        let b = random_matrix(&mut rng, n);
        let c = random_matrix(&mut rng, n);
        let ours = match solve_sylvester(&SylvesterProblem::new(a.clone(), b.clone(), c.clone()).unwrap()) {
            Ok(x) => x,
            Err(_) => continue,
        };
        solved += 1;
        let oracle = dense_sylvester(&a, &b, &c);
        worst = worst.max((&ours - &oracle).norm() / oracle.norm());
    }
    Outcome { pass: solved == 100 && worst <= 1e-10, detail: format!("{solved}/100 solved, max relative deviation {worst:.3e} <= 1e-10") }
}

fn ac8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut violations = 0;
    let (mut max_scalar, mut max_mimo): (f64, f64) = (0.0, 0.0);
    let spec1 = EnsembleSpec { m: 1, r: 1.0, seed: SEED, distribution: Distribution::GaussianEntries, field: Field::Real };
    let spec2 = EnsembleSpec { m: 2, ..spec1 };
    for t in 0..1000u64 {
        let len = rng.random_range(1..=6);
        if t % 2 == 0 {
            let cp = sample_ensemble(&spec1.member(t)).unwrap();
            let l = rng.random_range(1..=3);
            let topo = if l == 1 { scalar_phase_kernels(&cp).ok() } else { None };
            let kernels: Vec<RelayKernel> = (0..len)
                .map(|i| match (&topo, rng.random_range(0..3)) {
                    (Some(k), 0) => k[i % 3].clone(),
                    (_, 1) => {
                        let mut a = random_matrix(&mut rng, l);
                        a.row_mut(0).fill(0.0);
                        RelayKernel::new(a, Matrix::zeros(l, l), 1.0, KernelLabel::Custom).unwrap()
                    }
                    _ => RelayKernel::new(random_matrix(&mut rng, l), random_matrix(&mut rng, l), 1.0, KernelLabel::Custom).unwrap(),
                })
                .collect();
            let r = dof_upper_bound(&cp, &kernels).unwrap();
            let (a, b, c) = r.rank_sums();
            violations += usize::from(r.mode != BoundMode::Scalar || a + b + c != 4 * l * len);
            max_scalar = max_scalar.max(r.min_bound);
        } else {
            let cp = sample_ensemble(&spec2.member(t)).unwrap();
            let topo = mimo_phase_kernels(&cp, SwapVariant::RealLastFirst).ok();
            let kernels: Vec<RelayKernel> = (0..len)
                .map(|i| match (&topo, rng.random_range(0..2)) {
                    (Some(k), 0) => k[i % 3].clone(),
                    _ => RelayKernel::new(random_matrix(&mut rng, 2), random_matrix(&mut rng, 2), 1.0, KernelLabel::Custom).unwrap(),
                })
                .collect();
            let r = dof_upper_bound(&cp, &kernels).unwrap();
            let (a, b, c) = r.rank_sums();
            violations += usize::from(r.mode != BoundMode::Mimo || a + b + c != (6 * 2 - 2) * len);
            max_mimo = max_mimo.max(r.min_bound);
        }
    }
    let pass = violations == 0 && max_scalar <= 4.0 / 3.0 + 1e-12 && max_mimo <= 2.0 * 2.0 - 2.0 / 3.0 + 1e-12;
    Outcome {
        pass,
        detail: format!(
            "identity violations {violations}/1000, max scalar min-bound {max_scalar:.4} <= 4/3, max M=2 min-bound {max_mimo:.4} <= 10/3"
        ),
    }
}

fn ac9() -> Outcome {
    let p = 1e3;
    let n = 1_000_000;
    let mut worst_dev: f64 = 0.0;
    let mut worst_leak: f64 = 0.0;
    let mut worst_power: f64 = 0.0;
    for m in [1, 2] {
        let spec = EnsembleSpec { m, r: 1.0, seed: SEED, distribution: Distribution::GaussianEntries, field: Field::Real };
        for s in 0..10u64 {
            let cp: ChannelPair = sample_ensemble(&spec.member(s)).unwrap();
            let (kernels, plan) = phase_kernels(&cp).unwrap();
            let analytic = three_phase_mimo_rate(&cp, p).unwrap().stream_noise_vars;
            let stats = simulate_transmission(&cp, &kernels, plan, p, n, s, SimOptions::default()).unwrap();
            for (e, a) in stats.empirical_stream_vars.iter().zip(&analytic) {
                worst_dev = worst_dev.max((e - a).abs() / a);
            }
            worst_leak = stats.interference_leakage.iter().fold(worst_leak, |w, &l| w.max(l));
            worst_power = stats.relay_power_used.iter().fold(worst_power, |w, &u| w.max(u / p));
        }
    }
    Outcome {
        pass: worst_dev <= 0.05 && worst_leak <= 1e-5,
        detail: format!(
            "max |empirical - analytic| / analytic {worst_dev:.4} <= 0.05, max leakage {worst_leak:.2e} <= 1e-5, max relay power {worst_power:.3} P"
        ),
    }
}

fn ac10() -> Outcome {
    let rows = sweep(
        1,
        Field::Complex,
        0.5,
        vec![Scheme::Tdma, Scheme::Af, Scheme::ThreePhase, Scheme::ThreePhaseRefined],
        grid(0.0, 80.0, 5.0),
        50,
    );
    let at = |scheme: &str, db: f64| rows.iter().find(|r| r.scheme == scheme && r.p_db == db).unwrap().mean_sum_rate;
    let baseline = |db: f64| at("tdma", db).max(at("af", db));
    let gap = |scheme: &str, db: f64| at(scheme, db) - baseline(db);
    let crossover = grid(0.0, 80.0, 5.0)
        .into_iter()
        .find(|&db| at("three_phase_refined", db) > at("tdma", db))
        .unwrap_or(f64::INFINITY);
    let refined_ok = gap("three_phase_refined", 60.0) > 0.0
        && gap("three_phase_refined", 80.0) > gap("three_phase_refined", 60.0)
        && crossover <= 30.0;
    Outcome {
        pass: refined_ok,
        detail: format!(
            "refined: gap@60 {:.3}, gap@80 {:.3}, crossover vs tdma {crossover} dB <= 30; topology kernels only: gap@60 {:.3}, gap@80 {:.3}",
            gap("three_phase_refined", 60.0),
            gap("three_phase_refined", 80.0),
            gap("three_phase", 60.0),
            gap("three_phase", 80.0),
        ),
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("AC1 scalar real DoF slope", ac1),
        ("AC2 MIMO real DoF slope", ac2),
        ("AC3 complex DoF slopes", ac3),
        ("AC4 fixed-AF ceiling", ac4),
        ("AC5 scalar decomposition identity", ac5),
        ("AC6 topology construction", ac6),
        ("AC7 Sylvester oracle", ac7),
        ("AC8 converse average identities", ac8),
        ("AC9 analytic vs empirical", ac9),
        ("AC10 refined vs AF gap and crossover", ac10),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!("{} {name}: {} [{:.1?}]", if o.pass { "PASS" } else { "FAIL" }, o.detail, t.elapsed());
    }
    println!("acceptance: {}/10 criteria passed", 10 - failed);
    if failed > 0 && std::env::var("TWOHOP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

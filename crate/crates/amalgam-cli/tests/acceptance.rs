//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Criteria 1-6 are property/oracle checks; 7-9 reproduce qualitative
//! orderings on two-moons with fixed seeds (3-seed averages); 10 checks
//! bit-identical reruns of the CLI. Heavy tests serialize on a mutex so the
//! per-criterion wall-clock limits are meaningful.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use amalgam_core::amalgamation::{
    amalgamate_linear, amalgamate_naive, amalgamate_soft, solve_pareto_weights, LogitBundle,
};
use amalgam_core::attack::{
    fgsm, pgd, project_linf, svgd_generate, AttackBudget, Pairing, SvgdConfig,
};
use amalgam_core::data::{gen_two_moons, Dataset, Split};
use amalgam_core::distill::{
    train_ataka, train_cataka, train_natural, train_sat, train_single_teacher_distill,
    Amalgamation, ProbeConfig, TrainConfig,
};
use amalgam_core::metrics::{diversity_report, evaluate, EvalAttack};
use amalgam_core::nn::{
    backward, cross_entropy, input_gradient_ce, kl_div, mse_logits, softmax, Activation, Batch,
    LossKind, Network, NetworkSpec,
};
use amalgam_core::parallel;
use amalgam_core::seed::derive;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

static HEAVY: Mutex<()> = Mutex::new(());

fn pass(n: usize, name: &str) {
    println!("ACCEPTANCE {n} ({name}): PASS");
}

fn check_runtime(n: usize, elapsed: Duration, limit: Duration) {
    assert!(
        elapsed <= limit,
        "criterion {n} exceeded its runtime limit: {elapsed:?} > {limit:?}"
    );
}

// ---------------------------------------------------------------------------
// 1. Gradient oracle
// ---------------------------------------------------------------------------

/// Batch loss recomputed through forward + scalar losses only (independent
/// of the reverse-mode path under test).
fn oracle_loss(net: &Network, batch: &Batch, kind: &LossKind<'_>) -> f64 {
    let mut total = 0.0;
    for (s, (x, &y)) in batch.inputs.iter().zip(&batch.labels).enumerate() {
        let logits = net.forward_one(x).unwrap();
        let probs = softmax(&logits);
        let ce = cross_entropy(&probs, y).unwrap();
        total += match kind {
            LossKind::CrossEntropy => ce,
            LossKind::LogitMatch { alpha, targets } => {
                (1.0 - alpha) * ce + alpha * mse_logits(&logits, &targets[s]).unwrap()
            }
            LossKind::ProbMatch { alpha, targets } => {
                (1.0 - alpha) * ce + alpha * kl_div(&probs, &targets[s]).unwrap()
            }
        };
    }
    total / batch.len() as f64
}

fn rel_close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-8 || diff / analytic.abs().max(numeric.abs()) < 1e-4
}

#[test]
fn criterion_01_gradient_oracle() {
    let start = Instant::now();
    let h = 1e-5;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let depth = rng.gen_range(1..=3usize);
        let input_dim = rng.gen_range(2..=4usize);
        let classes = rng.gen_range(2..=4usize);
        let mut widths: Vec<usize> = (0..depth - 1).map(|_| rng.gen_range(2..=16)).collect();
        widths.push(classes);
        let activation = if rng.gen::<bool>() { Activation::Relu } else { Activation::Tanh };
        let spec = NetworkSpec::new(input_dim, widths, activation, seed).unwrap();
        let net = Network::init(&spec).unwrap();
        let b = rng.gen_range(1..=3usize);
        let inputs: Vec<Vec<f64>> =
            (0..b).map(|_| (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..classes)).collect();
        let batch = Batch::new(inputs, labels).unwrap();
        let logit_targets: Vec<Vec<f64>> =
            (0..b).map(|_| (0..classes).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let prob_targets: Vec<Vec<f64>> = (0..b)
            .map(|_| {
                let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.1..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect()
            })
            .collect();

        let kinds: Vec<LossKind<'_>> = vec![
            LossKind::CrossEntropy,
            LossKind::LogitMatch { alpha: 0.7, targets: &logit_targets },
            LossKind::ProbMatch { alpha: 0.7, targets: &prob_targets },
        ];
        for kind in &kinds {
            let (_, grads) = backward(&net, &batch, kind, true).unwrap();
            // Parameters.
            let mut probe = net.clone();
            let mut flat = Vec::new();
            for lg in &grads.layers {
                flat.extend_from_slice(&lg.weights);
                flat.extend_from_slice(&lg.biases);
            }
            for (i, &analytic) in flat.iter().enumerate() {
                let orig = probe.param(i);
                probe.set_param(i, orig + h);
                let plus = oracle_loss(&probe, &batch, kind);
                probe.set_param(i, orig - h);
                let minus = oracle_loss(&probe, &batch, kind);
                probe.set_param(i, orig);
                let numeric = (plus - minus) / (2.0 * h);
                assert!(
                    rel_close(analytic, numeric),
                    "net {seed} param {i}: {analytic} vs fd {numeric}"
                );
            }
            // Inputs.
            let ig = grads.inputs.as_ref().unwrap();
            let mut inputs = batch.inputs.clone();
            for s in 0..inputs.len() {
                for c in 0..inputs[s].len() {
                    let orig = inputs[s][c];
                    inputs[s][c] = orig + h;
                    let plus = oracle_loss(
                        &net,
                        &Batch::new(inputs.clone(), batch.labels.clone()).unwrap(),
                        kind,
                    );
                    inputs[s][c] = orig - h;
                    let minus = oracle_loss(
                        &net,
                        &Batch::new(inputs.clone(), batch.labels.clone()).unwrap(),
                        kind,
                    );
                    inputs[s][c] = orig;
                    let numeric = (plus - minus) / (2.0 * h);
                    assert!(
                        rel_close(ig[s][c], numeric),
                        "net {seed} input ({s},{c}): {} vs fd {numeric}",
                        ig[s][c]
                    );
                }
            }
        }
    }
    check_runtime(1, start.elapsed(), Duration::from_secs(30));
    pass(1, "gradient oracle");
}

// ---------------------------------------------------------------------------
// 2. Budget exactness
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_budget_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    for case in 0..1000u64 {
        let d = rng.gen_range(1..=4usize);
        let spec = NetworkSpec::new(d, vec![5, 2], Activation::Tanh, case).unwrap();
        let net = Network::init(&spec).unwrap();
        let eps = rng.gen_range(0.0..0.3f64);
        let step = (rng.gen_range(0.001..0.2f64)).min((2.0 * eps).max(0.001));
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y = rng.gen_range(0..2usize);
        let lo = vec![0.0; d];
        let hi = vec![1.0; d];
        let check = |out: &[f64]| {
            for (i, &v) in out.iter().enumerate() {
                assert!((v - x[i]).abs() <= eps, "case {case}: ball violated");
                assert!(v >= lo[i] && v <= hi[i], "case {case}: domain violated");
            }
        };
        match case % 3 {
            0 => check(&fgsm(&net, &x, y, eps, &lo, &hi).unwrap()),
            1 => {
                let budget =
                    AttackBudget::new(eps, step, rng.gen_range(1..6), lo.clone(), hi.clone())
                        .unwrap();
                check(&pgd(&net, &x, y, &budget, true, case).unwrap());
            }
            _ => {
                let budget =
                    AttackBudget::new(eps, step, rng.gen_range(1..4), lo.clone(), hi.clone())
                        .unwrap();
                let cfg = SvgdConfig {
                    n_particles: 2,
                    sigma: 0.5,
                    gamma: 1.0,
                    pairing: Pairing::AveragedEnsemble,
                    init_seed: case,
                };
                let set = svgd_generate(&x, y, std::slice::from_ref(&net), &budget, &cfg).unwrap();
                for p in &set.particles {
                    check(p);
                }
            }
        }
    }
    check_runtime(2, start.elapsed(), Duration::from_secs(30));
    pass(2, "budget exactness");
}

// ---------------------------------------------------------------------------
// 3. Single-particle collapse
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_single_particle_collapse() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3030);
    for case in 0..100u64 {
        let spec = NetworkSpec::new(2, vec![rng.gen_range(4..10), 2], Activation::Tanh, case)
            .unwrap();
        let net = Network::init(&spec).unwrap();
        let eps = rng.gen_range(0.05..0.25f64);
        let step = rng.gen_range(0.01..0.08f64);
        let iters = rng.gen_range(1..10usize);
        let x = vec![rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
        let y = rng.gen_range(0..2usize);
        let budget = AttackBudget::unit(2, eps, step, iters).unwrap();
        let cfg = SvgdConfig {
            n_particles: 1,
            sigma: rng.gen_range(0.1..1.0),
            gamma: rng.gen_range(0.0..3.0),
            pairing: Pairing::PerParticleTeacher,
            init_seed: case,
        };
        let set = svgd_generate(&x, y, std::slice::from_ref(&net), &budget, &cfg).unwrap();

        // Projected unsigned-gradient-ascent replay with the same init draw.
        let mut replay_rng = ChaCha8Rng::seed_from_u64(case);
        let noisy: Vec<f64> = x.iter().map(|&xi| xi + replay_rng.gen_range(-eps..eps)).collect();
        let mut cur = project_linf(&noisy, &x, eps, &budget.domain_lo, &budget.domain_hi);
        for _ in 0..iters {
            let g = input_gradient_ce(&net, &cur, y).unwrap();
            let moved: Vec<f64> = cur.iter().zip(&g).map(|(&c, &gv)| c + step * gv).collect();
            cur = project_linf(&moved, &x, eps, &budget.domain_lo, &budget.domain_hi);
        }
        for (a, b) in set.particles[0].iter().zip(&cur) {
            assert!((a - b).abs() < 1e-10, "case {case}: collapse violated ({a} vs {b})");
        }
    }
    check_runtime(3, start.elapsed(), Duration::from_secs(30));
    pass(3, "single-particle collapse");
}

// ---------------------------------------------------------------------------
// 4. Pareto oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_pareto_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4040);
    let simplex = |rng: &mut ChaCha8Rng, c: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    };
    let objective = |student: &[f64], teachers: &[Vec<f64>], lambda: &[f64]| -> f64 {
        (0..student.len())
            .map(|c| {
                let mix: f64 = lambda.iter().zip(teachers).map(|(&l, t)| l * t[c]).sum();
                (student[c] - mix) * (student[c] - mix)
            })
            .sum()
    };
    for case in 0..50 {
        let student = simplex(&mut rng, 4);
        let teachers: Vec<Vec<f64>> = (0..3).map(|_| simplex(&mut rng, 4)).collect();
        let w = solve_pareto_weights(&student, &teachers).unwrap();
        let solver_obj = objective(&student, &teachers, &w.lambda);

        // Brute-force simplex grid, step 0.01.
        let ticks = 100usize;
        let mut grid_best = f64::INFINITY;
        for i in 0..=ticks {
            for j in 0..=(ticks - i) {
                let k = ticks - i - j;
                let lambda =
                    [i as f64 / 100.0, j as f64 / 100.0, k as f64 / 100.0];
                let obj = objective(&student, &teachers, &lambda);
                if obj < grid_best {
                    grid_best = obj;
                }
            }
        }
        assert!(
            solver_obj <= grid_best + 1e-4,
            "case {case}: solver {solver_obj} vs grid {grid_best}"
        );
    }
    check_runtime(4, start.elapsed(), Duration::from_secs(60));
    pass(4, "pareto oracle");
}

// ---------------------------------------------------------------------------
// 5. Amalgamation algebra
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_amalgamation_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(5050);
    for _ in 0..200 {
        let n = rng.gen_range(1..6usize);
        let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..8.0)).collect();
        let logits: Vec<Vec<f64>> =
            (0..n).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let bundle = LogitBundle {
            probs: logits.iter().map(|z| softmax(z)).collect(),
            logits,
            ce_losses: losses.clone(),
        };
        let beta = rng.gen_range(-3.0..3.0);
        for w in [
            amalgamate_naive(&bundle).weights,
            amalgamate_linear(&bundle).weights,
            amalgamate_soft(&bundle, beta).weights,
        ] {
            assert!(w.lambda.iter().all(|&l| l >= 0.0));
            assert!((w.lambda.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }

        // Soft(beta = 0) is uniform.
        let uniform = amalgamate_soft(&bundle, 0.0).weights.lambda;
        for &l in &uniform {
            assert!((l - 1.0 / n as f64).abs() < 1e-12);
        }

        // Beyond beta = 50/gap the soft argmax matches naive's pick.
        if n >= 2 {
            let mut sorted = losses.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let gap = sorted[0] - sorted[1];
            if gap > 1e-6 {
                let beta = 50.0 / gap;
                let soft = amalgamate_soft(&bundle, beta).weights.lambda;
                let soft_argmax = soft
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                let naive_idx = amalgamate_naive(&bundle)
                    .weights
                    .lambda
                    .iter()
                    .position(|&l| l == 1.0)
                    .unwrap();
                assert_eq!(soft_argmax, naive_idx);
            }
        }
    }

    // Linear on losses (1, 3) gives exactly (0.25, 0.75).
    let bundle = LogitBundle {
        logits: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        probs: vec![softmax(&[1.0, 0.0]), softmax(&[0.0, 1.0])],
        ce_losses: vec![1.0, 3.0],
    };
    assert_eq!(amalgamate_linear(&bundle).weights.lambda, vec![0.25, 0.75]);
    pass(5, "amalgamation algebra");
}

// ---------------------------------------------------------------------------
// Shared two-moons protocol for criteria 6-9
// ---------------------------------------------------------------------------

const MOON_NOISE: f64 = 0.15;
const N_TRAIN: usize = 1200;
const N_TEST: usize = 300;
const SEEDS: [u64; 3] = [11, 22, 33];
const PROBE_RESTARTS: usize = 5;

fn probe_attack() -> [(String, EvalAttack); 1] {
    [(
        "pgd20".to_string(),
        EvalAttack::Pgd {
            budget: AttackBudget::unit(2, 0.15, 0.02, 20).unwrap(),
            random_init: true,
            restarts: PROBE_RESTARTS,
        },
    )]
}

fn moons_for(seed: u64) -> (Dataset, Dataset) {
    let train = gen_two_moons(N_TRAIN, MOON_NOISE, derive(seed, &[0]), Split::Train).unwrap();
    let test = gen_two_moons(N_TEST, MOON_NOISE, derive(seed, &[1]), Split::Test).unwrap();
    (train, test)
}

fn student_spec(seed: u64) -> NetworkSpec {
    NetworkSpec::new(2, vec![32, 32, 2], Activation::Relu, derive(seed, &[2])).unwrap()
}

fn teacher_specs(seed: u64, n: usize) -> Vec<NetworkSpec> {
    (0..n)
        .map(|i| {
            NetworkSpec::new(2, vec![64, 64, 2], Activation::Relu, derive(seed, &[10 + i as u64]))
                .unwrap()
        })
        .collect()
}

/// Shared config for the adversarial trainers (SAT, distillation, ensemble).
fn robust_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        alpha: 0.3,
        beta: 1.0,
        amalgamation: Amalgamation::Soft,
        epochs,
        batch_size: 64,
        lr: 0.05,
        lr_milestones: vec![(epochs * 7 / 10, 10.0), (epochs * 17 / 20, 10.0)],
        momentum: 0.9,
        weight_decay: 0.0002,
        seed,
        budget: AttackBudget::unit(2, 0.15, 0.02, 10).unwrap(),
        svgd: SvgdConfig {
            n_particles: 3,
            sigma: 0.5,
            gamma: 1.0,
            pairing: Pairing::AveragedEnsemble,
            init_seed: 0,
        },
        probe: ProbeConfig {
            budget: AttackBudget::unit(2, 0.15, 0.02, 20).unwrap(),
            size: 64,
        },
    }
}

/// The natural baseline trains to convergence without regularization: its
/// clean optimum, and its most attack-prone honest form.
fn natural_config(seed: u64) -> TrainConfig {
    TrainConfig {
        weight_decay: 0.0,
        lr_milestones: vec![],
        epochs: 300,
        ..robust_config(seed, 300)
    }
}

fn robust_acc(net: &Network, test: &Dataset) -> f64 {
    evaluate(net, test, &probe_attack(), 5).unwrap().attacks[0].1
}

fn avg(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// 6. Diversity ordering
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_diversity_ordering() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();
    parallel::set_threads(2);

    // A trained two-moons teacher triple.
    let (train, test) = moons_for(77);
    let teachers: Vec<Network> = teacher_specs(77, 3)
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let cfg = TrainConfig { seed: derive(77, &[40 + i as u64]), ..robust_config(77, 60) };
            train_sat(spec, &train, &test, &cfg).unwrap().0
        })
        .collect();

    // Matched (eps, step, iters) for both generators.
    let budget = AttackBudget::unit(2, 0.15, 0.02, 20).unwrap();
    let svgd = SvgdConfig {
        n_particles: 3,
        sigma: 0.3,
        gamma: 3.0,
        pairing: Pairing::PerParticleTeacher,
        init_seed: 0,
    };
    let m = 20;
    let mut pgd_dist = 0.0;
    let mut svgd_dist = 0.0;
    let mut pgd_std = 0.0;
    let mut svgd_std = 0.0;
    for s in 0..m {
        let x = &test.features[s];
        let y = test.labels[s];
        let restarts: Vec<Vec<f64>> = (0..3)
            .map(|r| pgd(&teachers[0], x, y, &budget, true, derive(6, &[s as u64, r])).unwrap())
            .collect();
        let rp = diversity_report(&restarts, &teachers[0], y).unwrap();
        let cfg_s = SvgdConfig { init_seed: derive(6, &[100, s as u64]), ..svgd.clone() };
        let set = svgd_generate(x, y, &teachers, &budget, &cfg_s).unwrap();
        let rs = diversity_report(&set.particles, &teachers[0], y).unwrap();
        pgd_dist += rp.dist / m as f64;
        svgd_dist += rs.dist / m as f64;
        pgd_std += rp.std_ce / m as f64;
        svgd_std += rs.std_ce / m as f64;
    }
    println!(
        "criterion 6 detail: dist svgd={svgd_dist:.4} pgd={pgd_dist:.4} (ratio {:.2}); std_ce svgd={svgd_std:.4} pgd={pgd_std:.4}",
        svgd_dist / pgd_dist
    );
    assert!(
        svgd_dist >= 2.0 * pgd_dist,
        "diversity ratio too small: {svgd_dist} vs 2 x {pgd_dist}"
    );
    assert!(svgd_std > pgd_std, "loss-spread ordering violated: {svgd_std} vs {pgd_std}");
    check_runtime(6, start.elapsed(), Duration::from_secs(120));
    pass(6, "diversity ordering (dist >= 2x, std_ce greater)");
}

// ---------------------------------------------------------------------------
// 7. Robustness ordering
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_robustness_ordering() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();
    parallel::set_threads(2);

    let mut nat_r = vec![];
    let mut nat_c = vec![];
    let mut d1_r = vec![];
    let mut atk_r = vec![];
    let mut atk_c = vec![];
    for seed in SEEDS {
        let (train, test) = moons_for(seed);
        let student = student_spec(seed);

        let (nat, _) = train_natural(&student, &train, &test, &natural_config(seed)).unwrap();
        let rep = evaluate(&nat, &test, &probe_attack(), 5).unwrap();
        nat_c.push(rep.clean_acc);
        nat_r.push(rep.attacks[0].1);

        let rc = robust_config(seed, 200);
        let d1 = train_single_teacher_distill(
            &teacher_specs(seed, 1)[0],
            &student,
            &train,
            &test,
            &rc,
        )
        .unwrap();
        d1_r.push(robust_acc(&d1.student, &test));

        let atk = train_ataka(&teacher_specs(seed, 3), &student, &train, &test, &rc).unwrap();
        let rep = evaluate(&atk.student, &test, &probe_attack(), 5).unwrap();
        atk_c.push(rep.clean_acc);
        atk_r.push(rep.attacks[0].1);
    }
    let (nat, d1, atk) = (avg(&nat_r), avg(&d1_r), avg(&atk_r));
    let clean_drop = avg(&nat_c) - avg(&atk_c);
    println!(
        "criterion 7 detail: natural={nat:.3} distill1={d1:.3} ataka={atk:.3} gap={:.3} clean natural={:.3} ataka={:.3} drop={clean_drop:.3}",
        atk - nat,
        avg(&nat_c),
        avg(&atk_c)
    );
    // Collect every sub-criterion verdict before failing so a red run still
    // reports the full picture.
    let mut failures = Vec::new();
    if !(nat < d1) {
        failures.push(format!("ordering violated: natural {nat:.3} !< distill1 {d1:.3}"));
    }
    if !(d1 <= atk) {
        failures.push(format!("ordering violated: distill1 {d1:.3} !<= ataka {atk:.3}"));
    }
    if !(atk - nat >= 0.20) {
        failures.push(format!("ataka gap over natural below 20 points: {:.3}", atk - nat));
    }
    if !(nat <= 0.30) {
        failures.push(format!("natural robust accuracy above 0.30: {nat:.3}"));
    }
    if !(clean_drop <= 0.10) {
        failures.push(format!("clean accuracy drop above 10 points: {clean_drop:.3}"));
    }
    check_runtime(7, start.elapsed(), Duration::from_secs(900));
    assert!(failures.is_empty(), "criterion 7 sub-checks failed: {failures:?}");
    pass(7, "robustness ordering");
}

// ---------------------------------------------------------------------------
// 8. Teacher-count trend
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_teacher_count_trend() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();
    parallel::set_threads(2);

    let mut three = vec![];
    let mut one = vec![];
    for seed in SEEDS {
        let (train, test) = moons_for(seed);
        let student = student_spec(seed);
        let rc = robust_config(seed, 200);
        let atk3 = train_ataka(&teacher_specs(seed, 3), &student, &train, &test, &rc).unwrap();
        three.push(robust_acc(&atk3.student, &test));

        let mut rc1 = robust_config(seed, 200);
        rc1.svgd.n_particles = 1;
        let atk1 = train_ataka(&teacher_specs(seed, 1), &student, &train, &test, &rc1).unwrap();
        one.push(robust_acc(&atk1.student, &test));
    }
    let (a3, a1) = (avg(&three), avg(&one));
    println!("criterion 8 detail: ataka n=3 {a3:.3} vs n=1 {a1:.3}");
    assert!(a3 >= a1, "teacher-count trend violated: {a3} < {a1}");
    check_runtime(8, start.elapsed(), Duration::from_secs(900));
    pass(8, "teacher-count trend");
}

// ---------------------------------------------------------------------------
// 9. Collaborative sanity
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_collaborative_sanity() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();
    parallel::set_threads(2);

    let mut best = vec![];
    let mut max_spread: f64 = 0.0;
    let mut sat = vec![];
    for seed in SEEDS {
        let (train, test) = moons_for(seed);
        let specs: Vec<NetworkSpec> = (0..3)
            .map(|i| {
                NetworkSpec::new(2, vec![32, 32, 2], Activation::Relu, derive(seed, &[30 + i]))
                    .unwrap()
            })
            .collect();
        let rc = robust_config(seed, 200);
        let (students, _) = train_cataka(&specs, &train, &test, &rc).unwrap();
        let robusts: Vec<f64> = students.iter().map(|s| robust_acc(s, &test)).collect();
        let hi = robusts.iter().cloned().fold(f64::MIN, f64::max);
        let lo = robusts.iter().cloned().fold(f64::MAX, f64::min);
        best.push(hi);
        max_spread = max_spread.max(hi - lo);

        let (sat_net, _) = train_sat(&specs[0], &train, &test, &rc).unwrap();
        sat.push(robust_acc(&sat_net, &test));
    }
    let (b, s) = (avg(&best), avg(&sat));
    println!("criterion 9 detail: best cataka={b:.3} sat={s:.3} max per-seed spread={max_spread:.3}");
    assert!(max_spread <= 0.05, "cataka students spread above 5 points: {max_spread}");
    assert!(b >= s, "best cataka student below matched SAT model: {b} vs {s}");
    check_runtime(9, start.elapsed(), Duration::from_secs(900));
    pass(9, "collaborative sanity");
}

// ---------------------------------------------------------------------------
// 10. Determinism of the CLI
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_cli_determinism() {
    let _guard = HEAVY.lock().unwrap();
    let bin = env!("CARGO_BIN_EXE_amalgam");
    let base = std::env::temp_dir().join(format!("amalgam-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&base).unwrap();

    let run = |tag: &str| -> Vec<(String, Vec<u8>)> {
        let out_dir = base.join(tag);
        let config = format!(
            "mode=ataka\nseed=9\nthreads=1\ntrain.epochs=2\ntrain.batch_size=32\n\
             dataset.n_train=64\ndataset.n_test=32\nprobe.size=16\nteachers.n=2\n\
             teacher.widths=16,2\nstudent.widths=8,2\nattack.iters=4\nprobe.iters=5\n\
             output_dir={}\n",
            out_dir.display()
        );
        let cfg_path = base.join(format!("{tag}.cfg"));
        std::fs::write(&cfg_path, config).unwrap();
        let status = std::process::Command::new(bin)
            .args(["run", cfg_path.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success(), "run {tag} failed");
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort_by(|a, b| a.0.cmp(&b.0));
        files
    };

    let first = run("a");
    let second = run("b");
    assert_eq!(first.len(), second.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in first.iter().zip(&second) {
        assert_eq!(name_a, name_b);
        // config-resolved differs only in the output_dir line.
        if name_a == "config-resolved.txt" {
            continue;
        }
        assert_eq!(bytes_a, bytes_b, "file {name_a} differs between reruns");
    }

    // Re-running the resolved config reproduces the same artifacts.
    let resolved = base.join("a").join("config-resolved.txt");
    let rerun_dir = base.join("a");
    let status = std::process::Command::new(bin)
        .args(["run", resolved.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let mut third: Vec<(String, Vec<u8>)> = std::fs::read_dir(&rerun_dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    third.sort_by(|a, b| a.0.cmp(&b.0));
    for ((name_a, bytes_a), (name_c, bytes_c)) in first.iter().zip(&third) {
        assert_eq!(name_a, name_c);
        assert_eq!(bytes_a, bytes_c, "resolved rerun changed {name_a}");
    }

    std::fs::remove_dir_all(&base).ok();
    pass(10, "CLI determinism");
}

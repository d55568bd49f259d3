//! Update-order and gradient-isolation checks for the ensemble trainers.

use amalgam_core::attack::{AttackBudget, Pairing, SvgdConfig};
use amalgam_core::data::{gen_two_moons, Split};
use amalgam_core::distill::{
    bundles_from_sets, cataka_loss, student_supervised_step, supervision_targets,
    svgd_particle_sets, teachers_ce_step, train_ataka, train_cataka, Amalgamation, ProbeConfig,
    Supervision, TrainConfig,
};
use amalgam_core::nn::{softmax, Activation, Network, NetworkSpec, SgdOptimizer};

fn spec(widths: &[usize], seed: u64) -> NetworkSpec {
    NetworkSpec::new(2, widths.to_vec(), Activation::Relu, seed).unwrap()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        alpha: 0.6,
        beta: 1.0,
        amalgamation: Amalgamation::Soft,
        epochs,
        batch_size: 16,
        lr: 0.05,
        lr_milestones: vec![],
        momentum: 0.9,
        weight_decay: 0.0,
        seed: 7,
        budget: AttackBudget::unit(2, 0.1, 0.02, 4).unwrap(),
        svgd: SvgdConfig {
            n_particles: 2,
            sigma: 0.5,
            gamma: 1.0,
            pairing: Pairing::PerParticleTeacher,
            init_seed: 0,
        },
        probe: ProbeConfig { budget: AttackBudget::unit(2, 0.1, 0.02, 4).unwrap(), size: 8 },
    }
}

/// Supervision is taken from the forward pass before any update, so swapping
/// the teacher and student steps inside one batch must not change anything:
/// not the supervision, not the final parameters of either side.
#[test]
fn supervision_is_invariant_to_update_order() {
    let train = gen_two_moons(32, 0.08, 5, Split::Train).unwrap();
    let c = cfg(1);
    let teachers_init: Vec<Network> =
        vec![Network::init(&spec(&[8, 2], 1)).unwrap(), Network::init(&spec(&[8, 2], 2)).unwrap()];
    let student_init = Network::init(&spec(&[4, 2], 3)).unwrap();
    let seeds: Vec<u64> = (0..train.len() as u64).collect();

    let run = |teachers_first: bool| -> (Vec<Network>, Network, Vec<Vec<f64>>) {
        let mut teachers = teachers_init.clone();
        let mut t_opts: Vec<SgdOptimizer> =
            teachers.iter().map(|t| SgdOptimizer::new(t, c.momentum, c.weight_decay)).collect();
        let mut student = student_init.clone();
        let mut s_opt = SgdOptimizer::new(&student, c.momentum, c.weight_decay);

        let sets =
            svgd_particle_sets(&teachers, &train.features, &train.labels, &c.budget, &c.svgd, &seeds)
                .unwrap();
        let bundles = bundles_from_sets(&teachers, &sets, &train.labels).unwrap();
        let (targets, _) = supervision_targets(&bundles, None, c.amalgamation, c.beta).unwrap();

        if teachers_first {
            teachers_ce_step(&mut teachers, &mut t_opts, &sets, &train.labels, c.lr, 1).unwrap();
            student_supervised_step(
                &mut student, &mut s_opt, &train.features, &train.labels, &targets, c.alpha, c.lr, 1,
            )
            .unwrap();
        } else {
            student_supervised_step(
                &mut student, &mut s_opt, &train.features, &train.labels, &targets, c.alpha, c.lr, 1,
            )
            .unwrap();
            teachers_ce_step(&mut teachers, &mut t_opts, &sets, &train.labels, c.lr, 1).unwrap();
        }
        let logged: Vec<Vec<f64>> = targets
            .iter()
            .map(|t| match t {
                Supervision::Logits(v) | Supervision::Probs(v) => v.clone(),
            })
            .collect();
        (teachers, student, logged)
    };

    let (teachers_a, student_a, supervision_a) = run(true);
    let (teachers_b, student_b, supervision_b) = run(false);

    assert_eq!(supervision_a, supervision_b);
    for (ta, tb) in teachers_a.iter().zip(&teachers_b) {
        for i in 0..ta.param_len() {
            assert_eq!(ta.param(i), tb.param(i));
        }
    }
    for i in 0..student_a.param_len() {
        assert_eq!(student_a.param(i), student_b.param(i));
    }

    // Sanity: had the supervision been recomputed after the teacher update,
    // it would have differed.
    let mut teachers = teachers_init.clone();
    let mut t_opts: Vec<SgdOptimizer> =
        teachers.iter().map(|t| SgdOptimizer::new(t, c.momentum, c.weight_decay)).collect();
    let sets =
        svgd_particle_sets(&teachers, &train.features, &train.labels, &c.budget, &c.svgd, &seeds)
            .unwrap();
    let bundles_pre = bundles_from_sets(&teachers, &sets, &train.labels).unwrap();
    teachers_ce_step(&mut teachers, &mut t_opts, &sets, &train.labels, c.lr, 1).unwrap();
    let bundles_post = bundles_from_sets(&teachers, &sets, &train.labels).unwrap();
    let changed = bundles_pre
        .iter()
        .zip(&bundles_post)
        .any(|(a, b)| a.logits != b.logits);
    assert!(changed, "teacher step should move the logits");
}

/// Perturbing student j's parameters moves only term j of the collaborative
/// loss while the shared supervision logits are held constant.
#[test]
fn collaborative_terms_are_isolated_per_student() {
    let students =
        vec![Network::init(&spec(&[6, 2], 10)).unwrap(), Network::init(&spec(&[6, 2], 11)).unwrap()];
    let x0 = vec![0.4, 0.7];
    let x1 = vec![0.6, 0.2];
    let label = 1usize;
    let alpha = 0.5;

    let eval_terms = |nets: &[Network]| -> Vec<f64> {
        let per_student: Vec<(Vec<f64>, Vec<f64>)> = nets
            .iter()
            .zip([&x0, &x1])
            .map(|(n, x)| {
                let z = n.forward_one(x).unwrap();
                (softmax(&z), z)
            })
            .collect();
        // Fixed supervision: the pre-perturbation soft amalgamation.
        let z_common = vec![0.25, -0.4];
        let (_, terms) = cataka_loss(&per_student, label, &z_common, alpha).unwrap();
        terms
    };

    let base = eval_terms(&students);
    let mut perturbed = students.clone();
    let idx = 3;
    let bumped = perturbed[0].param(idx) + 1e-3;
    perturbed[0].set_param(idx, bumped);
    let after = eval_terms(&perturbed);

    assert!((after[1] - base[1]).abs() < 1e-15, "term 1 must not move");
    assert!((after[0] - base[0]).abs() > 1e-12, "term 0 must move");
}

#[test]
fn ensemble_trainers_are_deterministic() {
    let train = gen_two_moons(40, 0.08, 5, Split::Train).unwrap();
    let test = gen_two_moons(20, 0.08, 6, Split::Test).unwrap();
    let c = cfg(2);

    let a = train_ataka(&[spec(&[8, 2], 1), spec(&[8, 2], 2)], &spec(&[4, 2], 3), &train, &test, &c)
        .unwrap();
    let b = train_ataka(&[spec(&[8, 2], 1), spec(&[8, 2], 2)], &spec(&[4, 2], 3), &train, &test, &c)
        .unwrap();
    assert_eq!(a.history.to_csv(0), b.history.to_csv(0));
    for i in 0..a.student.param_len() {
        assert_eq!(a.student.param(i), b.student.param(i));
    }

    let (sa, ha) = train_cataka(&[spec(&[6, 2], 1), spec(&[6, 2], 2)], &train, &test, &c).unwrap();
    let (sb, hb) = train_cataka(&[spec(&[6, 2], 1), spec(&[6, 2], 2)], &train, &test, &c).unwrap();
    assert_eq!(ha.to_csv(0), hb.to_csv(0));
    for (na, nb) in sa.iter().zip(&sb) {
        for i in 0..na.param_len() {
            assert_eq!(na.param(i), nb.param(i));
        }
    }
}

/// Results must not depend on the worker thread count: the parallel maps
/// preserve order and reductions stay sequential.
#[test]
fn thread_count_does_not_change_results() {
    let train = gen_two_moons(32, 0.08, 5, Split::Train).unwrap();
    let test = gen_two_moons(16, 0.08, 6, Split::Test).unwrap();
    let c = cfg(1);

    amalgam_core::parallel::set_threads(1);
    let a = train_ataka(&[spec(&[8, 2], 1), spec(&[8, 2], 2)], &spec(&[4, 2], 3), &train, &test, &c)
        .unwrap();
    amalgam_core::parallel::set_threads(2);
    let b = train_ataka(&[spec(&[8, 2], 1), spec(&[8, 2], 2)], &spec(&[4, 2], 3), &train, &test, &c)
        .unwrap();
    amalgam_core::parallel::set_threads(1);

    assert_eq!(a.history.to_csv(0), b.history.to_csv(0));
    for i in 0..a.student.param_len() {
        assert_eq!(a.student.param(i).to_bits(), b.student.param(i).to_bits());
    }
}

//! Training loops.
//!
//! Five trainers share one loop skeleton: natural (clean CE), SAT (CE on
//! PGD-attacked batches), single-teacher adversarial distillation, the
//! teacher-ensemble amalgamation trainer, and its collaborative all-students
//! variant. All are deterministic under the run seed; every random stream is
//! derived from (seed, role, epoch, sample) so results do not depend on
//! batch order or thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::amalgamation::{
    amalgamate_linear, amalgamate_naive, amalgamate_soft, combine_probs, solve_pareto_weights,
    LogitBundle,
};
use crate::attack::{pgd, pgd_batch, svgd_generate, AttackBudget, ParticleSet, SvgdConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::predict;
use crate::nn::{
    backward, cross_entropy, fmt_f64, kl_div, mse_logits, softmax, Batch, BatchLoss, LossKind,
    Network, NetworkSpec, SgdOptimizer,
};
use crate::parallel;
use crate::seed::{derive, stream};

/// Which amalgamation rule fuses the teacher outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Amalgamation {
    Naive,
    Linear,
    Soft,
    Pareto,
}

impl Amalgamation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Amalgamation::Naive),
            "linear" => Ok(Amalgamation::Linear),
            "soft" => Ok(Amalgamation::Soft),
            "pareto" => Ok(Amalgamation::Pareto),
            other => Err(Error::InvalidConfig(format!("unknown amalgamation `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Amalgamation::Naive => "naive",
            Amalgamation::Linear => "linear",
            Amalgamation::Soft => "soft",
            Amalgamation::Pareto => "pareto",
        }
    }
}

/// Robust-accuracy probe settings (PGD with random init).
#[derive(Clone, Debug)]
pub struct ProbeConfig {
    pub budget: AttackBudget,
    /// Number of test samples probed each epoch (clamped to the test size).
    pub size: usize,
}

/// Everything a trainer needs besides the data and the architectures.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub amalgamation: Amalgamation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// (epoch, divisor) milestones, strictly increasing in epoch; from each
    /// milestone on, the learning rate is divided by the divisor.
    pub lr_milestones: Vec<(usize, f64)>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub budget: AttackBudget,
    pub svgd: SvgdConfig,
    pub probe: ProbeConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must be in [0,1], got {}", self.alpha)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        let mut prev = None;
        for &(epoch, div) in &self.lr_milestones {
            if let Some(p) = prev {
                if epoch <= p {
                    return Err(Error::InvalidConfig("lr milestones must be strictly increasing".into()));
                }
            }
            if !(div > 0.0) {
                return Err(Error::InvalidConfig(format!("milestone divisor must be > 0, got {div}")));
            }
            prev = Some(epoch);
        }
        if self.probe.size == 0 {
            return Err(Error::InvalidConfig("probe.size must be >= 1".into()));
        }
        self.budget.validate()?;
        self.probe.budget.validate()?;
        Ok(())
    }

    /// Learning rate in force at a (1-based) epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mut lr = self.lr;
        for &(m, d) in &self.lr_milestones {
            if epoch >= m {
                lr /= d;
            }
        }
        lr
    }
}

/// Per-epoch training record.
#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub student_loss: f64,
    /// Mean CE component of the student loss.
    pub student_ce: f64,
    /// Mean knowledge-matching component (MSE or KL); zero when unused.
    pub student_kd: f64,
    /// Per-teacher CE (ensemble trainers) or per-student loss terms
    /// (collaborative trainer); empty otherwise.
    pub model_losses: Vec<f64>,
    pub clean_acc: f64,
    pub robust_acc: f64,
    /// Mean amalgamation weight per teacher over the epoch; empty when the
    /// trainer has no amalgamation step.
    pub lambda_mean: Vec<f64>,
}

/// One record per completed epoch.
#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// CSV with columns
    /// `epoch,loss_student,loss_t1..tn,acc_clean,acc_robust,lambda_mean_1..n`.
    pub fn to_csv(&self, seed: u64) -> String {
        let n = self.records.first().map_or(0, |r| r.model_losses.len());
        let k = self.records.first().map_or(0, |r| r.lambda_mean.len());
        let mut out = format!("# seed={seed}\n");
        out.push_str("epoch,loss_student");
        for i in 1..=n {
            out.push_str(&format!(",loss_t{i}"));
        }
        out.push_str(",acc_clean,acc_robust");
        for i in 1..=k {
            out.push_str(&format!(",lambda_mean_{i}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{}", r.epoch, fmt_f64(r.student_loss)));
            for v in &r.model_losses {
                out.push_str(&format!(",{}", fmt_f64(*v)));
            }
            out.push_str(&format!(",{},{}", fmt_f64(r.clean_acc), fmt_f64(r.robust_acc)));
            for v in &r.lambda_mean {
                out.push_str(&format!(",{}", fmt_f64(*v)));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path, seed: u64) -> Result<()> {
        std::fs::write(path, self.to_csv(seed))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scalar loss forms
// ---------------------------------------------------------------------------

/// Student loss of the ensemble trainer:
/// `(1-alpha) CE(p_s, y) + alpha ||z_s - z_t||^2`.
pub fn ataka_student_loss(
    p_s: &[f64],
    z_s: &[f64],
    label: usize,
    z_t: &[f64],
    alpha: f64,
) -> Result<f64> {
    Ok((1.0 - alpha) * cross_entropy(p_s, label)? + alpha * mse_logits(z_s, z_t)?)
}

/// Student loss in probability space:
/// `(1-alpha) CE(p_s, y) + alpha KL(p_s || p_t)`.
pub fn pareto_student_loss(p_s: &[f64], label: usize, p_t: &[f64], alpha: f64) -> Result<f64> {
    Ok((1.0 - alpha) * cross_entropy(p_s, label)? + alpha * kl_div(p_s, p_t)?)
}

/// Collaborative loss: the sum over students of
/// `(1-alpha) CE(p_si, y) + alpha ||z_si - z_common||^2`, with the common
/// logits treated as a constant. Returns the total and each student's term.
pub fn cataka_loss(
    per_student: &[(Vec<f64>, Vec<f64>)],
    label: usize,
    z_common: &[f64],
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    if per_student.is_empty() {
        return Err(Error::InvalidSpec("need at least one student".into()));
    }
    let mut terms = Vec::with_capacity(per_student.len());
    for (p_si, z_si) in per_student {
        terms.push(ataka_student_loss(p_si, z_si, label, z_common, alpha)?);
    }
    Ok((terms.iter().sum(), terms))
}

// ---------------------------------------------------------------------------
// Shared loop machinery
// ---------------------------------------------------------------------------

fn shuffled_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[stream::SHUFFLE, epoch as u64]));
    idx.shuffle(&mut rng);
    idx
}

fn gather(data: &Dataset, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let inputs = idx.iter().map(|&i| data.features[i].clone()).collect();
    let labels = idx.iter().map(|&i| data.labels[i]).collect();
    (inputs, labels)
}

/// Clean accuracy on the full test split plus robust accuracy (PGD probe)
/// on its first `probe.size` samples.
fn epoch_accs(
    net: &Network,
    test: &Dataset,
    probe: &ProbeConfig,
    seed: u64,
    epoch: usize,
) -> Result<(f64, f64)> {
    let clean = crate::metrics::accuracy(net, test)?;
    let m = probe.size.min(test.len());
    let robust_flags = parallel::par_map_range(m, |i| -> Result<bool> {
        let s = derive(seed, &[stream::PROBE, epoch as u64, i as u64]);
        let adv = pgd(net, &test.features[i], test.labels[i], &probe.budget, true, s)?;
        Ok(predict(net, &adv)? == test.labels[i])
    });
    let mut correct = 0usize;
    for f in robust_flags {
        if f? {
            correct += 1;
        }
    }
    Ok((clean, correct as f64 / m as f64))
}

fn check_finite_loss(loss: &BatchLoss, epoch: usize) -> Result<()> {
    if !loss.total.is_finite() {
        return Err(Error::Diverged { epoch, msg: format!("loss = {}", loss.total) });
    }
    Ok(())
}

struct EpochAccumulator {
    total: f64,
    ce: f64,
    kd: f64,
    batches: usize,
}

impl EpochAccumulator {
    fn new() -> Self {
        EpochAccumulator { total: 0.0, ce: 0.0, kd: 0.0, batches: 0 }
    }

    fn add(&mut self, loss: &BatchLoss) {
        self.total += loss.total;
        self.ce += loss.ce;
        self.kd += loss.kd;
        self.batches += 1;
    }

    fn mean(&self) -> (f64, f64, f64) {
        let b = self.batches.max(1) as f64;
        (self.total / b, self.ce / b, self.kd / b)
    }
}

// ---------------------------------------------------------------------------
// Baseline trainers
// ---------------------------------------------------------------------------

/// Conventional training on clean samples.
pub fn train_natural(
    spec: &NetworkSpec,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    train.validate()?;
    let mut net = Network::init(spec)?;
    let mut opt = SgdOptimizer::new(&net, cfg.momentum, cfg.weight_decay);
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.epochs {
        let order = shuffled_indices(train.len(), cfg.seed, epoch);
        let mut acc = EpochAccumulator::new();
        for chunk in order.chunks(cfg.batch_size) {
            let (inputs, labels) = gather(train, chunk);
            let batch = Batch::new(inputs, labels)?;
            let (loss, grads) = backward(&net, &batch, &LossKind::CrossEntropy, false)?;
            check_finite_loss(&loss, epoch)?;
            opt.step(&mut net, &grads, cfg.lr_at(epoch))?;
            acc.add(&loss);
        }
        let (student_loss, student_ce, student_kd) = acc.mean();
        let (clean_acc, robust_acc) = epoch_accs(&net, test, &cfg.probe, cfg.seed, epoch)?;
        history.records.push(EpochRecord {
            epoch,
            student_loss,
            student_ce,
            student_kd,
            model_losses: vec![],
            clean_acc,
            robust_acc,
            lambda_mean: vec![],
        });
    }
    Ok((net, history))
}

/// Standard adversarial training: each batch is replaced by its PGD attack
/// against the current parameters before the CE step.
pub fn train_sat(
    spec: &NetworkSpec,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    train.validate()?;
    let mut net = Network::init(spec)?;
    let mut opt = SgdOptimizer::new(&net, cfg.momentum, cfg.weight_decay);
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.epochs {
        let order = shuffled_indices(train.len(), cfg.seed, epoch);
        let mut acc = EpochAccumulator::new();
        for chunk in order.chunks(cfg.batch_size) {
            let (inputs, labels) = gather(train, chunk);
            let seeds: Vec<u64> = chunk
                .iter()
                .map(|&i| derive(cfg.seed, &[stream::ATTACK, epoch as u64, i as u64]))
                .collect();
            let adv = pgd_batch(&net, &inputs, &labels, &cfg.budget, true, &seeds)?;
            let batch = Batch::new(adv, labels)?;
            let (loss, grads) = backward(&net, &batch, &LossKind::CrossEntropy, false)?;
            check_finite_loss(&loss, epoch)?;
            opt.step(&mut net, &grads, cfg.lr_at(epoch))?;
            acc.add(&loss);
        }
        let (student_loss, student_ce, student_kd) = acc.mean();
        let (clean_acc, robust_acc) = epoch_accs(&net, test, &cfg.probe, cfg.seed, epoch)?;
        history.records.push(EpochRecord {
            epoch,
            student_loss,
            student_ce,
            student_kd,
            model_losses: vec![],
            clean_acc,
            robust_acc,
            lambda_mean: vec![],
        });
    }
    Ok((net, history))
}

/// Output of [`train_single_teacher_distill`].
pub struct SingleDistillOutput {
    pub student: Network,
    pub teacher: Network,
    pub history: TrainHistory,
}

/// Offline single-teacher adversarial distillation: the teacher is first
/// trained with SAT, then frozen; the student sees clean inputs and matches
/// the teacher's logits on PGD-attacked inputs (attacked against the
/// teacher).
pub fn train_single_teacher_distill(
    teacher_spec: &NetworkSpec,
    student_spec: &NetworkSpec,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<SingleDistillOutput> {
    cfg.validate()?;
    let teacher_cfg = TrainConfig { seed: derive(cfg.seed, &[11]), ..cfg.clone() };
    let (teacher, _) = train_sat(teacher_spec, train, test, &teacher_cfg)?;

    let mut student = Network::init(student_spec)?;
    let mut opt = SgdOptimizer::new(&student, cfg.momentum, cfg.weight_decay);
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.epochs {
        let order = shuffled_indices(train.len(), cfg.seed, epoch);
        let mut acc = EpochAccumulator::new();
        for chunk in order.chunks(cfg.batch_size) {
            let (inputs, labels) = gather(train, chunk);
            let seeds: Vec<u64> = chunk
                .iter()
                .map(|&i| derive(cfg.seed, &[stream::ATTACK, epoch as u64, i as u64]))
                .collect();
            let adv = pgd_batch(&teacher, &inputs, &labels, &cfg.budget, true, &seeds)?;
            let targets: Vec<Vec<f64>> = teacher.forward(&adv)?;
            let batch = Batch::new(inputs, labels)?;
            let (loss, grads) = backward(
                &student,
                &batch,
                &LossKind::LogitMatch { alpha: cfg.alpha, targets: &targets },
                false,
            )?;
            check_finite_loss(&loss, epoch)?;
            opt.step(&mut student, &grads, cfg.lr_at(epoch))?;
            acc.add(&loss);
        }
        let (student_loss, student_ce, student_kd) = acc.mean();
        let (clean_acc, robust_acc) = epoch_accs(&student, test, &cfg.probe, cfg.seed, epoch)?;
        history.records.push(EpochRecord {
            epoch,
            student_loss,
            student_ce,
            student_kd,
            model_losses: vec![],
            clean_acc,
            robust_acc,
            lambda_mean: vec![],
        });
    }
    Ok(SingleDistillOutput { student, teacher, history })
}

// ---------------------------------------------------------------------------
// Ensemble amalgamation machinery (exposed for instrumentation tests)
// ---------------------------------------------------------------------------

/// A per-sample supervision signal for the student step.
#[derive(Clone, Debug)]
pub enum Supervision {
    Logits(Vec<f64>),
    Probs(Vec<f64>),
}

/// Runs the particle attack for every sample in a batch, one seed per
/// sample. Parallel across samples.
pub fn svgd_particle_sets(
    teachers: &[Network],
    inputs: &[Vec<f64>],
    labels: &[usize],
    budget: &AttackBudget,
    svgd: &SvgdConfig,
    seeds: &[u64],
) -> Result<Vec<ParticleSet>> {
    parallel::par_map_range(inputs.len(), |s| {
        let cfg = SvgdConfig { init_seed: seeds[s], ..svgd.clone() };
        svgd_generate(&inputs[s], labels[s], teachers, budget, &cfg)
    })
    .into_iter()
    .collect()
}

/// Forwards particle `i` of each sample through teacher `i`, producing one
/// logit bundle per sample from the current (pre-update) teachers.
pub fn bundles_from_sets(
    teachers: &[Network],
    sets: &[ParticleSet],
    labels: &[usize],
) -> Result<Vec<LogitBundle>> {
    sets.iter()
        .zip(labels)
        .map(|(set, &y)| {
            let logits: Vec<Vec<f64>> = teachers
                .iter()
                .zip(&set.particles)
                .map(|(t, p)| t.forward_one(p))
                .collect::<Result<_>>()?;
            LogitBundle::from_logits(logits, y)
        })
        .collect()
}

/// Applies the amalgamation rule per sample. Pareto needs the student's
/// current clean-input probabilities. Returns the supervision targets and
/// the mean weight per teacher.
pub fn supervision_targets(
    bundles: &[LogitBundle],
    student_probs: Option<&[Vec<f64>]>,
    method: Amalgamation,
    beta: f64,
) -> Result<(Vec<Supervision>, Vec<f64>)> {
    let n = bundles.first().map_or(0, |b| b.n_teachers());
    let mut lambda_sum = vec![0.0; n];
    let mut targets = Vec::with_capacity(bundles.len());
    for (s, bundle) in bundles.iter().enumerate() {
        let (target, lambda) = match method {
            Amalgamation::Naive => {
                let a = amalgamate_naive(bundle);
                (Supervision::Logits(a.target_logits), a.weights.lambda)
            }
            Amalgamation::Linear => {
                let a = amalgamate_linear(bundle);
                (Supervision::Logits(a.target_logits), a.weights.lambda)
            }
            Amalgamation::Soft => {
                let a = amalgamate_soft(bundle, beta);
                (Supervision::Logits(a.target_logits), a.weights.lambda)
            }
            Amalgamation::Pareto => {
                let probs = student_probs.ok_or_else(|| {
                    Error::InvalidConfig("pareto amalgamation needs student probabilities".into())
                })?;
                let w = solve_pareto_weights(&probs[s], &bundle.probs)?;
                let p_t = combine_probs(&w, &bundle.probs)?;
                (Supervision::Probs(p_t), w.lambda)
            }
        };
        for (acc, l) in lambda_sum.iter_mut().zip(&lambda) {
            *acc += l;
        }
        targets.push(target);
    }
    let m = bundles.len().max(1) as f64;
    for v in lambda_sum.iter_mut() {
        *v /= m;
    }
    Ok((targets, lambda_sum))
}

/// One CE step per teacher on its own adversarial inputs. Returns each
/// teacher's (pre-update) batch CE loss.
pub fn teachers_ce_step(
    teachers: &mut [Network],
    opts: &mut [SgdOptimizer],
    sets: &[ParticleSet],
    labels: &[usize],
    lr: f64,
    epoch: usize,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(teachers.len());
    for (t, (teacher, opt)) in teachers.iter_mut().zip(opts.iter_mut()).enumerate() {
        let inputs: Vec<Vec<f64>> = sets.iter().map(|s| s.particles[t].clone()).collect();
        let batch = Batch::new(inputs, labels.to_vec())?;
        let (loss, grads) = backward(teacher, &batch, &LossKind::CrossEntropy, false)?;
        check_finite_loss(&loss, epoch)?;
        opt.step(teacher, &grads, lr)?;
        losses.push(loss.total);
    }
    Ok(losses)
}

/// One supervised step of the student from homogeneous supervision targets.
pub fn student_supervised_step(
    student: &mut Network,
    opt: &mut SgdOptimizer,
    inputs: &[Vec<f64>],
    labels: &[usize],
    targets: &[Supervision],
    alpha: f64,
    lr: f64,
    epoch: usize,
) -> Result<BatchLoss> {
    let batch = Batch::new(inputs.to_vec(), labels.to_vec())?;
    let all_logits = targets.iter().all(|t| matches!(t, Supervision::Logits(_)));
    let all_probs = targets.iter().all(|t| matches!(t, Supervision::Probs(_)));
    let rows: Vec<Vec<f64>> = targets
        .iter()
        .map(|t| match t {
            Supervision::Logits(v) | Supervision::Probs(v) => v.clone(),
        })
        .collect();
    let kind = if all_logits {
        LossKind::LogitMatch { alpha, targets: &rows }
    } else if all_probs {
        LossKind::ProbMatch { alpha, targets: &rows }
    } else {
        return Err(Error::InvalidSpec("mixed supervision target kinds".into()));
    };
    let (loss, grads) = backward(student, &batch, &kind, false)?;
    check_finite_loss(&loss, epoch)?;
    opt.step(student, &grads, lr)?;
    Ok(loss)
}

/// Output of [`train_ataka`].
pub struct AtakaOutput {
    pub student: Network,
    pub teachers: Vec<Network>,
    pub history: TrainHistory,
}

/// Online ensemble distillation: per batch, the particle attack produces one
/// adversarial variant per teacher; teachers train with CE on their own
/// variants while the student matches the amalgamated pre-update teacher
/// outputs on clean inputs.
pub fn train_ataka(
    teacher_specs: &[NetworkSpec],
    student_spec: &NetworkSpec,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<AtakaOutput> {
    cfg.validate()?;
    train.validate()?;
    if teacher_specs.is_empty() {
        return Err(Error::InvalidConfig("need at least one teacher".into()));
    }
    cfg.svgd.validate(teacher_specs.len())?;

    let mut teachers: Vec<Network> =
        teacher_specs.iter().map(Network::init).collect::<Result<_>>()?;
    let mut teacher_opts: Vec<SgdOptimizer> =
        teachers.iter().map(|t| SgdOptimizer::new(t, cfg.momentum, cfg.weight_decay)).collect();
    let mut student = Network::init(student_spec)?;
    let mut student_opt = SgdOptimizer::new(&student, cfg.momentum, cfg.weight_decay);
    let mut history = TrainHistory::default();
    let n_teachers = teachers.len();

    for epoch in 1..=cfg.epochs {
        let order = shuffled_indices(train.len(), cfg.seed, epoch);
        let mut acc = EpochAccumulator::new();
        let mut teacher_loss_sum = vec![0.0; n_teachers];
        let mut lambda_sum = vec![0.0; n_teachers];
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (inputs, labels) = gather(train, chunk);
            let seeds: Vec<u64> = chunk
                .iter()
                .map(|&i| derive(cfg.seed, &[stream::ATTACK, epoch as u64, i as u64]))
                .collect();
            let lr = cfg.lr_at(epoch);

            // (1) diversified adversarial variants against current teachers
            let sets = svgd_particle_sets(&teachers, &inputs, &labels, &cfg.budget, &cfg.svgd, &seeds)?;
            // (2) pre-update teacher logits
            let bundles = bundles_from_sets(&teachers, &sets, &labels)?;
            // (3) amalgamated supervision (uses pre-update student for pareto)
            let student_probs = if cfg.amalgamation == Amalgamation::Pareto {
                Some(
                    inputs
                        .iter()
                        .map(|x| Ok(softmax(&student.forward_one(x)?)))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            let (targets, lambda) =
                supervision_targets(&bundles, student_probs.as_deref(), cfg.amalgamation, cfg.beta)?;
            // (4) teacher CE steps on their own adversarial inputs
            let t_losses = teachers_ce_step(&mut teachers, &mut teacher_opts, &sets, &labels, lr, epoch)?;
            // (5) student step on clean inputs against the fused targets
            let loss = student_supervised_step(
                &mut student,
                &mut student_opt,
                &inputs,
                &labels,
                &targets,
                cfg.alpha,
                lr,
                epoch,
            )?;

            acc.add(&loss);
            for (s, l) in teacher_loss_sum.iter_mut().zip(&t_losses) {
                *s += l;
            }
            for (s, l) in lambda_sum.iter_mut().zip(&lambda) {
                *s += l;
            }
            batches += 1;
        }
        let (student_loss, student_ce, student_kd) = acc.mean();
        let b = batches.max(1) as f64;
        let (clean_acc, robust_acc) = epoch_accs(&student, test, &cfg.probe, cfg.seed, epoch)?;
        history.records.push(EpochRecord {
            epoch,
            student_loss,
            student_ce,
            student_kd,
            model_losses: teacher_loss_sum.iter().map(|s| s / b).collect(),
            clean_acc,
            robust_acc,
            lambda_mean: lambda_sum.iter().map(|s| s / b).collect(),
        });
    }
    Ok(AtakaOutput { student, teachers, history })
}

/// Collaborative variant: all models are students of the same shape. Each
/// one trains on its own particle; the supervision is the amalgamation of
/// all students' (pre-update) logits on those particles. Only the three
/// logit-domain amalgamation rules apply here.
pub fn train_cataka(
    student_specs: &[NetworkSpec],
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Vec<Network>, TrainHistory)> {
    cfg.validate()?;
    train.validate()?;
    if student_specs.is_empty() {
        return Err(Error::InvalidConfig("need at least one student".into()));
    }
    if cfg.amalgamation == Amalgamation::Pareto {
        return Err(Error::InvalidConfig(
            "collaborative training amalgamates logits; pareto operates on probabilities".into(),
        ));
    }
    let first_shape = (&student_specs[0].layer_widths, student_specs[0].input_dim);
    if student_specs.iter().any(|s| (&s.layer_widths, s.input_dim) != first_shape) {
        return Err(Error::InvalidConfig("all student specs must share one shape".into()));
    }
    cfg.svgd.validate(student_specs.len())?;

    let mut students: Vec<Network> =
        student_specs.iter().map(Network::init).collect::<Result<_>>()?;
    let mut opts: Vec<SgdOptimizer> =
        students.iter().map(|s| SgdOptimizer::new(s, cfg.momentum, cfg.weight_decay)).collect();
    let mut history = TrainHistory::default();
    let n = students.len();

    for epoch in 1..=cfg.epochs {
        let order = shuffled_indices(train.len(), cfg.seed, epoch);
        let mut term_sum = vec![0.0; n];
        let mut lambda_sum = vec![0.0; n];
        let mut total_sum = 0.0;
        let mut ce_sum = 0.0;
        let mut kd_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (inputs, labels) = gather(train, chunk);
            let seeds: Vec<u64> = chunk
                .iter()
                .map(|&i| derive(cfg.seed, &[stream::ATTACK, epoch as u64, i as u64]))
                .collect();
            let lr = cfg.lr_at(epoch);

            let sets = svgd_particle_sets(&students, &inputs, &labels, &cfg.budget, &cfg.svgd, &seeds)?;
            let bundles = bundles_from_sets(&students, &sets, &labels)?;
            let (targets, lambda) =
                supervision_targets(&bundles, None, cfg.amalgamation, cfg.beta)?;

            // Every student steps on its own particles against the shared
            // pre-update supervision.
            for (i, (student, opt)) in students.iter_mut().zip(opts.iter_mut()).enumerate() {
                let own_inputs: Vec<Vec<f64>> =
                    sets.iter().map(|s| s.particles[i].clone()).collect();
                let loss = student_supervised_step(
                    student, opt, &own_inputs, &labels, &targets, cfg.alpha, lr, epoch,
                )?;
                term_sum[i] += loss.total;
                total_sum += loss.total;
                ce_sum += loss.ce;
                kd_sum += loss.kd;
            }
            for (s, l) in lambda_sum.iter_mut().zip(&lambda) {
                *s += l;
            }
            batches += 1;
        }
        let b = batches.max(1) as f64;
        // Probe the first student; final per-student numbers come from the
        // evaluation harness.
        let (clean_acc, robust_acc) = epoch_accs(&students[0], test, &cfg.probe, cfg.seed, epoch)?;
        history.records.push(EpochRecord {
            epoch,
            student_loss: total_sum / b,
            student_ce: ce_sum / (b * n as f64),
            student_kd: kd_sum / (b * n as f64),
            model_losses: term_sum.iter().map(|s| s / b).collect(),
            clean_acc,
            robust_acc,
            lambda_mean: lambda_sum.iter().map(|s| s / b).collect(),
        });
    }
    Ok((students, history))
}

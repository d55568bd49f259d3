//! Adversarial input generation: FGSM, PGD with random restarts, and the
//! SVGD particle attack.
//!
//! Every attack output lies inside the L∞ budget ball around its source and
//! inside the input domain, exactly as f64 comparisons go: the projection
//! nudges the last ulp when `center ± eps` rounds outward.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{cross_entropy, input_gradient_ce, input_gradients_ce, softmax, Network};
use crate::parallel;

/// L∞ perturbation constraint plus the iterated-attack step schedule.
#[derive(Clone, Debug)]
pub struct AttackBudget {
    pub eps: f64,
    pub step: f64,
    pub iters: usize,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
}

impl AttackBudget {
    pub fn new(
        eps: f64,
        step: f64,
        iters: usize,
        domain_lo: Vec<f64>,
        domain_hi: Vec<f64>,
    ) -> Result<Self> {
        let b = AttackBudget { eps, step, iters, domain_lo, domain_hi };
        b.validate()?;
        Ok(b)
    }

    /// Budget over the unit hypercube `[0,1]^d`.
    pub fn unit(dim: usize, eps: f64, step: f64, iters: usize) -> Result<Self> {
        Self::new(eps, step, iters, vec![0.0; dim], vec![1.0; dim])
    }

    pub fn validate(&self) -> Result<()> {
        // eps = 0 is allowed: the attack degenerates to the identity.
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidConfig(format!("eps must be >= 0, got {}", self.eps)));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidConfig(format!("step must be > 0, got {}", self.step)));
        }
        if self.eps > 0.0 && self.step > 2.0 * self.eps {
            return Err(Error::InvalidConfig(format!(
                "step {} exceeds ball diameter {}",
                self.step,
                2.0 * self.eps
            )));
        }
        if self.domain_lo.len() != self.domain_hi.len() {
            return Err(Error::ShapeMismatch("domain bounds length".into()));
        }
        for (&lo, &hi) in self.domain_lo.iter().zip(&self.domain_hi) {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!("empty domain [{lo}, {hi}]")));
            }
            if self.eps > hi - lo {
                return Err(Error::InvalidConfig(format!(
                    "eps {} exceeds domain width {}",
                    self.eps,
                    hi - lo
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.domain_lo.len()
    }
}

/// How particle `i`'s drift picks its loss network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    /// Particle i uses teacher i's loss (requires one teacher per particle).
    PerParticleTeacher,
    /// Every particle uses the loss averaged over all teachers.
    AveragedEnsemble,
}

/// SVGD attack configuration. The step size is the budget's `step`.
#[derive(Clone, Debug)]
pub struct SvgdConfig {
    pub n_particles: usize,
    pub sigma: f64,
    pub gamma: f64,
    pub pairing: Pairing,
    pub init_seed: u64,
}

impl SvgdConfig {
    pub fn validate(&self, n_teachers: usize) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidConfig("n_particles must be >= 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.pairing == Pairing::PerParticleTeacher && self.n_particles != n_teachers {
            return Err(Error::InvalidConfig(format!(
                "per-particle pairing needs n_particles == n_teachers ({} vs {n_teachers})",
                self.n_particles
            )));
        }
        if n_teachers == 0 {
            return Err(Error::InvalidConfig("at least one teacher required".into()));
        }
        Ok(())
    }
}

/// Adversarial variants of one source sample, all inside the budget ball.
#[derive(Clone, Debug)]
pub struct ParticleSet {
    pub source: Vec<f64>,
    pub particles: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
}

impl ParticleSet {
    /// CSV export: header `f1..fd,loss`, one row per particle.
    pub fn to_csv(&self, seed: u64) -> String {
        let d = self.source.len();
        let mut out = format!("# seed={seed}\n");
        let header: Vec<String> = (1..=d).map(|i| format!("f{i}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",loss\n");
        for (p, &l) in self.particles.iter().zip(&self.losses) {
            let row: Vec<String> = p.iter().map(|&v| crate::nn::fmt_f64(v)).collect();
            out.push_str(&row.join(","));
            out.push(',');
            out.push_str(&crate::nn::fmt_f64(l));
            out.push('\n');
        }
        out
    }
}

/// Clamps one coordinate into the eps-ball around `center`, fixing the last
/// ulp when `center ± eps` rounds outward of the ball.
fn clamp_to_ball(mut v: f64, center: f64, eps: f64) -> f64 {
    v = v.clamp(center - eps, center + eps);
    while v - center > eps {
        v = v.next_down();
    }
    while v - center < -eps {
        v = v.next_up();
    }
    v
}

/// Projects `x` onto the intersection of the L∞ ball around `center` and the
/// box `[domain_lo, domain_hi]`. Idempotent; exact under f64 comparison.
pub fn project_linf(
    x: &[f64],
    center: &[f64],
    eps: f64,
    domain_lo: &[f64],
    domain_hi: &[f64],
) -> Vec<f64> {
    debug_assert_eq!(x.len(), center.len());
    x.iter()
        .enumerate()
        .map(|(i, &v)| clamp_to_ball(v, center[i], eps).clamp(domain_lo[i], domain_hi[i]))
        .collect()
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_finite(grad: &[f64], what: &str) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("{what} gradient")));
    }
    Ok(())
}

/// One-step sign attack: `x + eps * sign(grad CE)`, clamped to the domain
/// (and, against rounding, to the ball itself).
pub fn fgsm(
    net: &Network,
    x: &[f64],
    label: usize,
    eps: f64,
    domain_lo: &[f64],
    domain_hi: &[f64],
) -> Result<Vec<f64>> {
    let grad = input_gradient_ce(net, x, label)?;
    check_finite(&grad, "fgsm")?;
    let moved: Vec<f64> = x.iter().zip(&grad).map(|(&xi, &g)| xi + eps * sign(g)).collect();
    Ok(project_linf(&moved, x, eps, domain_lo, domain_hi))
}

/// Iterated sign attack with projection, optionally starting from a uniform
/// random point in the ball.
pub fn pgd(
    net: &Network,
    x: &[f64],
    label: usize,
    budget: &AttackBudget,
    random_init: bool,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut cur = if random_init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy: Vec<f64> = x
            .iter()
            .map(|&xi| if budget.eps > 0.0 { xi + rng.gen_range(-budget.eps..budget.eps) } else { xi })
            .collect();
        project_linf(&noisy, x, budget.eps, &budget.domain_lo, &budget.domain_hi)
    } else {
        x.to_vec()
    };
    for _ in 0..budget.iters {
        let grad = input_gradient_ce(net, &cur, label)?;
        check_finite(&grad, "pgd")?;
        let moved: Vec<f64> =
            cur.iter().zip(&grad).map(|(&xi, &g)| xi + budget.step * sign(g)).collect();
        cur = project_linf(&moved, x, budget.eps, &budget.domain_lo, &budget.domain_hi);
    }
    Ok(cur)
}

/// Gaussian RBF kernel `k(a,b) = exp(-||a-b||^2 / (2 sigma^2))` and its
/// gradient w.r.t. the first argument.
pub fn rbf_kernel(a: &[f64], b: &[f64], sigma: f64) -> (f64, Vec<f64>) {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let k = (-sq / (2.0 * sigma * sigma)).exp();
    let grad = a.iter().zip(b).map(|(x, y)| -(x - y) / (sigma * sigma) * k).collect();
    (k, grad)
}

/// The SVGD drift for every particle:
/// `phi_i = sum_j [ k(x_j, x_i) g_ij + (gamma/n) grad_{x_j} k(x_j, x_i) ]`
/// where `g_ij` is the CE input gradient at particle j under particle i's
/// loss network (its own teacher, or the teacher average).
pub fn svgd_phi(
    particles: &[Vec<f64>],
    teachers: &[Network],
    label: usize,
    cfg: &SvgdConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate(teachers.len())?;
    let n = particles.len();
    if n != cfg.n_particles {
        return Err(Error::ShapeMismatch(format!(
            "{n} particles vs configured {}",
            cfg.n_particles
        )));
    }
    let d = particles[0].len();

    // grads[t][j] = CE input gradient at particle j under teacher t.
    let grads: Vec<Vec<Vec<f64>>> = teachers
        .iter()
        .map(|t| input_gradients_ce(t, particles, label))
        .collect::<Result<_>>()?;

    // Loss gradient seen by particle i at particle j.
    let loss_grad = |i: usize, j: usize| -> Vec<f64> {
        match cfg.pairing {
            Pairing::PerParticleTeacher => grads[i][j].clone(),
            Pairing::AveragedEnsemble => {
                let m = teachers.len() as f64;
                let mut g = vec![0.0; d];
                for tg in &grads {
                    for (acc, &v) in g.iter_mut().zip(&tg[j]) {
                        *acc += v / m;
                    }
                }
                g
            }
        }
    };

    let mut drifts = Vec::with_capacity(n);
    for i in 0..n {
        let mut drift = vec![0.0; d];
        for j in 0..n {
            let (k, grad_k) = rbf_kernel(&particles[j], &particles[i], cfg.sigma);
            let g = loss_grad(i, j);
            for ((slot, &gv), &kv) in drift.iter_mut().zip(&g).zip(&grad_k) {
                *slot += k * gv + cfg.gamma / n as f64 * kv;
            }
        }
        if drift.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("svgd drift for particle {i}")));
        }
        drifts.push(drift);
    }
    Ok(drifts)
}

/// Runs the full SVGD attack for one source sample: seeded uniform init in
/// the ball, `budget.iters` synchronous drift steps with projection after
/// each, and per-particle CE losses of the final set.
pub fn svgd_generate(
    x: &[f64],
    label: usize,
    teachers: &[Network],
    budget: &AttackBudget,
    cfg: &SvgdConfig,
) -> Result<ParticleSet> {
    cfg.validate(teachers.len())?;
    budget.validate()?;
    if x.len() != budget.dim() {
        return Err(Error::ShapeMismatch("sample dim vs budget domain".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let mut particles: Vec<Vec<f64>> = (0..cfg.n_particles)
        .map(|_| {
            let noisy: Vec<f64> = x
                .iter()
                .map(|&xi| {
                    if budget.eps > 0.0 {
                        xi + rng.gen_range(-budget.eps..budget.eps)
                    } else {
                        xi
                    }
                })
                .collect();
            project_linf(&noisy, x, budget.eps, &budget.domain_lo, &budget.domain_hi)
        })
        .collect();

    for _ in 0..budget.iters {
        // Synchronous update: all drifts from the pre-step positions.
        let drifts = svgd_phi(&particles, teachers, label, cfg)?;
        particles = particles
            .iter()
            .zip(&drifts)
            .map(|(p, drift)| {
                let moved: Vec<f64> =
                    p.iter().zip(drift).map(|(&pi, &dv)| pi + budget.step * dv).collect();
                project_linf(&moved, x, budget.eps, &budget.domain_lo, &budget.domain_hi)
            })
            .collect();
    }

    let losses: Vec<f64> = particles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let ce_of = |net: &Network| -> Result<f64> {
                let logits = net.forward_one(p)?;
                cross_entropy(&softmax(&logits), label)
            };
            match cfg.pairing {
                Pairing::PerParticleTeacher => ce_of(&teachers[i]),
                Pairing::AveragedEnsemble => {
                    let mut sum = 0.0;
                    for t in teachers {
                        sum += ce_of(t)?;
                    }
                    Ok(sum / teachers.len() as f64)
                }
            }
        })
        .collect::<Result<_>>()?;

    Ok(ParticleSet { source: x.to_vec(), particles, losses })
}

/// PGD attacks for a whole batch, parallel across samples. Seeds are derived
/// per sample index so the result is independent of execution order.
pub fn pgd_batch(
    net: &Network,
    inputs: &[Vec<f64>],
    labels: &[usize],
    budget: &AttackBudget,
    random_init: bool,
    seeds: &[u64],
) -> Result<Vec<Vec<f64>>> {
    parallel::par_map_range(inputs.len(), |i| {
        pgd(net, &inputs[i], labels[i], budget, random_init, seeds[i])
    })
    .into_iter()
    .collect()
}

//! Adaptive fusion of teacher outputs into one supervision signal.
//!
//! Four strategies: naive (max-loss teacher wins), linear (loss-proportional
//! weights), soft (softmax over scaled losses), and Pareto (simplex-
//! constrained least squares in probability space).

use crate::error::{Error, Result};
use crate::nn::{cross_entropy, softmax};

const SIMPLEX_TOL: f64 = 1e-9;

/// Per-teacher logits, probabilities and CE losses for one sample.
#[derive(Clone, Debug)]
pub struct LogitBundle {
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
    pub ce_losses: Vec<f64>,
}

impl LogitBundle {
    /// Builds the bundle from raw logits, deriving probs and CE losses so the
    /// internal consistency invariant holds by construction.
    pub fn from_logits(logits: Vec<Vec<f64>>, label: usize) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidSpec("bundle needs at least one teacher".into()));
        }
        let c = logits[0].len();
        if logits.iter().any(|z| z.len() != c) {
            return Err(Error::ShapeMismatch("ragged teacher logits".into()));
        }
        let probs: Vec<Vec<f64>> = logits.iter().map(|z| softmax(z)).collect();
        let ce_losses: Vec<f64> =
            probs.iter().map(|p| cross_entropy(p, label)).collect::<Result<_>>()?;
        Ok(LogitBundle { logits, probs, ce_losses })
    }

    pub fn n_teachers(&self) -> usize {
        self.logits.len()
    }
}

/// Weights on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct AmalgamationWeights {
    pub lambda: Vec<f64>,
}

impl AmalgamationWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidSpec("negative amalgamation weight".into()));
        }
        let sum: f64 = self.lambda.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidSpec(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// A fused supervision signal: target logits plus the weights that built it.
#[derive(Clone, Debug)]
pub struct Amalgamated {
    pub target_logits: Vec<f64>,
    pub weights: AmalgamationWeights,
}

/// Picks the logits of the teacher with the largest CE loss (ties broken by
/// lowest index). Weights are the matching one-hot vector.
pub fn amalgamate_naive(bundle: &LogitBundle) -> Amalgamated {
    let mut k = 0;
    for (i, &l) in bundle.ce_losses.iter().enumerate() {
        if l > bundle.ce_losses[k] {
            k = i;
        }
    }
    let mut lambda = vec![0.0; bundle.n_teachers()];
    lambda[k] = 1.0;
    Amalgamated {
        target_logits: bundle.logits[k].clone(),
        weights: AmalgamationWeights { lambda },
    }
}

/// Loss-proportional weighted average of the teacher logits. Falls back to
/// uniform weights when every loss is (numerically) zero.
pub fn amalgamate_linear(bundle: &LogitBundle) -> Amalgamated {
    let n = bundle.n_teachers();
    let total: f64 = bundle.ce_losses.iter().sum();
    let lambda: Vec<f64> = if total < 1e-12 {
        vec![1.0 / n as f64; n]
    } else {
        bundle.ce_losses.iter().map(|&l| l / total).collect()
    };
    let weights = AmalgamationWeights { lambda };
    let target_logits = weighted_sum(&weights.lambda, &bundle.logits);
    Amalgamated { target_logits, weights }
}

/// Softmax-over-scaled-losses weights: `lambda_i ∝ exp(beta * L_i)`.
pub fn amalgamate_soft(bundle: &LogitBundle, beta: f64) -> Amalgamated {
    let scaled: Vec<f64> = bundle.ce_losses.iter().map(|&l| beta * l).collect();
    let lambda = softmax(&scaled);
    let weights = AmalgamationWeights { lambda };
    let target_logits = weighted_sum(&weights.lambda, &bundle.logits);
    Amalgamated { target_logits, weights }
}

fn weighted_sum(lambda: &[f64], vecs: &[Vec<f64>]) -> Vec<f64> {
    let c = vecs[0].len();
    let mut out = vec![0.0; c];
    for (&w, v) in lambda.iter().zip(vecs) {
        for (o, &x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    out
}

fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| v < -1e-12) {
        return Err(Error::InvalidSpec(format!("{what} has negative entries")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidSpec(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Exact Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Solves `min_lambda || student - sum_i lambda_i teacher_i ||^2` over the
/// simplex by projected gradient descent with a fixed step `1/(2L)`,
/// `L = n * max_i ||teacher_i||^2` (a Gram eigenvalue bound).
pub fn solve_pareto_weights(
    student_probs: &[f64],
    teacher_probs: &[Vec<f64>],
) -> Result<AmalgamationWeights> {
    solve_pareto_weights_capped(student_probs, teacher_probs, 20_000)
}

/// [`solve_pareto_weights`] with an explicit iteration cap.
pub fn solve_pareto_weights_capped(
    student_probs: &[f64],
    teacher_probs: &[Vec<f64>],
    max_iters: usize,
) -> Result<AmalgamationWeights> {
    if teacher_probs.is_empty() {
        return Err(Error::InvalidSpec("need at least one teacher".into()));
    }
    let c = student_probs.len();
    if teacher_probs.iter().any(|p| p.len() != c) {
        return Err(Error::ShapeMismatch("teacher prob width != student prob width".into()));
    }
    check_simplex(student_probs, "student probs")?;
    for (i, p) in teacher_probs.iter().enumerate() {
        check_simplex(p, &format!("teacher {i} probs"))?;
    }

    let n = teacher_probs.len();
    let max_sq: f64 = teacher_probs
        .iter()
        .map(|p| p.iter().map(|&v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let lipschitz = (n as f64 * max_sq).max(1e-12);
    let step = 1.0 / (2.0 * lipschitz);

    // A fixed point of the projected-gradient map is a KKT point of this
    // convex QP, so iterate until the point stops moving. Badly conditioned
    // Gram matrices converge slowly, hence the generous default cap.
    let mut lambda = vec![1.0 / n as f64; n];
    for _ in 0..max_iters {
        let mix = weighted_sum(&lambda, teacher_probs);
        // grad_i = 2 teacher_i . (mix - student)
        let grad: Vec<f64> = teacher_probs
            .iter()
            .map(|t| {
                2.0 * t.iter().zip(mix.iter().zip(student_probs)).map(|(&ti, (&m, &s))| ti * (m - s)).sum::<f64>()
            })
            .collect();
        let moved: Vec<f64> = lambda.iter().zip(&grad).map(|(&l, &g)| l - step * g).collect();
        let next = project_simplex(&moved);
        let shift = lambda.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        lambda = next;
        if shift < 1e-13 {
            break;
        }
    }
    Ok(AmalgamationWeights { lambda })
}

/// Convex combination of the teacher probability vectors.
pub fn combine_probs(
    weights: &AmalgamationWeights,
    teacher_probs: &[Vec<f64>],
) -> Result<Vec<f64>> {
    weights.validate()?;
    if weights.lambda.len() != teacher_probs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights vs {} teachers",
            weights.lambda.len(),
            teacher_probs.len()
        )));
    }
    let c = teacher_probs[0].len();
    if teacher_probs.iter().any(|p| p.len() != c) {
        return Err(Error::ShapeMismatch("ragged teacher probs".into()));
    }
    Ok(weighted_sum(&weights.lambda, teacher_probs))
}

//! Diversity statistics, robustness evaluation, and decision-boundary grids.

use std::path::Path;

use crate::attack::{fgsm, pgd, AttackBudget};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, fmt_f64, softmax, Network};
use crate::parallel;
use crate::seed::{derive, stream};

/// Cross-entropy of the network's prediction at one input.
pub fn cross_entropy_of(net: &Network, x: &[f64], label: usize) -> Result<f64> {
    let logits = net.forward_one(x)?;
    cross_entropy(&softmax(&logits), label)
}

/// Argmax class with ties broken by lowest index.
pub fn predict(net: &Network, x: &[f64]) -> Result<usize> {
    let logits = net.forward_one(x)?;
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Clean accuracy over a dataset.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidSpec("empty dataset".into()));
    }
    let preds = parallel::par_map_range(data.len(), |i| predict(net, &data.features[i]));
    let mut correct = 0usize;
    for (pred, &label) in preds.into_iter().zip(&data.labels) {
        if pred? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Spread and loss statistics for a set of adversarial samples.
#[derive(Clone, Copy, Debug)]
pub struct DiversityReport {
    /// Mean pairwise L∞ distance over all unordered pairs.
    pub dist: f64,
    pub avg_ce: f64,
    /// Population standard deviation (divisor m).
    pub std_ce: f64,
    pub max_ce: f64,
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Computes the diversity report for `samples` under `net` with a shared
/// label. Needs at least two samples.
pub fn diversity_report(samples: &[Vec<f64>], net: &Network, label: usize) -> Result<DiversityReport> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InvalidSpec(format!("diversity needs >= 2 samples, got {m}")));
    }
    let mut dist_sum = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            dist_sum += linf(&samples[i], &samples[j]);
        }
    }
    let dist = dist_sum / (m * (m - 1) / 2) as f64;

    let losses: Vec<f64> = samples
        .iter()
        .map(|x| {
            let logits = net.forward_one(x)?;
            cross_entropy(&softmax(&logits), label)
        })
        .collect::<Result<_>>()?;
    let avg_ce = losses.iter().sum::<f64>() / m as f64;
    let var = losses.iter().map(|&l| (l - avg_ce) * (l - avg_ce)).sum::<f64>() / m as f64;
    let max_ce = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(DiversityReport { dist, avg_ce, std_ce: var.sqrt(), max_ce })
}

impl DiversityReport {
    /// `metric,value` rows with a name prefix, e.g. `svgd_dist`.
    pub fn csv_rows(&self, prefix: &str) -> String {
        format!(
            "{p}_dist,{}\n{p}_avg_ce,{}\n{p}_std_ce,{}\n{p}_max_ce,{}\n",
            fmt_f64(self.dist),
            fmt_f64(self.avg_ce),
            fmt_f64(self.std_ce),
            fmt_f64(self.max_ce),
            p = prefix
        )
    }
}

/// An attack configuration for evaluation.
#[derive(Clone, Debug)]
pub enum EvalAttack {
    Fgsm { eps: f64 },
    Pgd { budget: AttackBudget, random_init: bool, restarts: usize },
}

/// Clean accuracy plus per-attack robust accuracies.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub clean_acc: f64,
    /// (attack name, robust accuracy) in evaluation order.
    pub attacks: Vec<(String, f64)>,
    /// (attack name, samples excluded because the attack failed).
    pub excluded: Vec<(String, usize)>,
    pub n: usize,
}

/// Evaluates clean and robust accuracy. Robust accuracy per attack is the
/// fraction of samples still classified correctly on inputs attacked against
/// this network; with restarts, a sample counts only if it survives every
/// restart. Per-sample attack failures are excluded from the denominator and
/// counted.
pub fn evaluate(
    net: &Network,
    data: &Dataset,
    attacks: &[(String, EvalAttack)],
    seed: u64,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::InvalidSpec("empty dataset".into()));
    }
    let clean_acc = accuracy(net, data)?;
    let mut out_attacks = Vec::with_capacity(attacks.len());
    let mut out_excluded = Vec::new();
    for (a_idx, (name, attack)) in attacks.iter().enumerate() {
        // Per-sample outcome: Ok(true) robust, Ok(false) fooled, Err failed.
        let outcomes = parallel::par_map_range(data.len(), |i| -> Result<bool> {
            let x = &data.features[i];
            let y = data.labels[i];
            match attack {
                EvalAttack::Fgsm { eps } => {
                    let adv = fgsm(net, x, y, *eps, &data.domain_lo, &data.domain_hi)?;
                    Ok(predict(net, &adv)? == y)
                }
                EvalAttack::Pgd { budget, random_init, restarts } => {
                    let runs = (*restarts).max(1);
                    for r in 0..runs {
                        let s = derive(seed, &[stream::EVAL, a_idx as u64, i as u64, r as u64]);
                        let adv = pgd(net, x, y, budget, *random_init, s)?;
                        if predict(net, &adv)? != y {
                            return Ok(false);
                        }
                    }
                    Ok(true)
                }
            }
        });
        let mut correct = 0usize;
        let mut failed = 0usize;
        for outcome in outcomes {
            match outcome {
                Ok(true) => correct += 1,
                Ok(false) => {}
                Err(_) => failed += 1,
            }
        }
        let attempted = data.len() - failed;
        let acc = if attempted == 0 { 0.0 } else { correct as f64 / attempted as f64 };
        out_attacks.push((name.clone(), acc));
        if failed > 0 {
            out_excluded.push((name.clone(), failed));
        }
    }
    Ok(EvalReport { clean_acc, attacks: out_attacks, excluded: out_excluded, n: data.len() })
}

impl EvalReport {
    /// `metric,value` CSV with a seed comment line.
    pub fn to_csv(&self, seed: u64) -> String {
        let mut out = format!("# seed={seed}\nmetric,value\n");
        out.push_str(&format!("n,{}\n", self.n));
        out.push_str(&format!("clean_acc,{}\n", fmt_f64(self.clean_acc)));
        for (name, acc) in &self.attacks {
            out.push_str(&format!("acc_{name},{}\n", fmt_f64(*acc)));
        }
        for (name, count) in &self.excluded {
            out.push_str(&format!("excluded_{name},{count}\n"));
        }
        out
    }
}

/// One row of the decision-boundary lattice.
#[derive(Clone, Copy, Debug)]
pub struct GridRow {
    pub x1: f64,
    pub x2: f64,
    pub class: usize,
    pub conf: f64,
}

/// Evaluates the network on an `r x r` lattice over `[lo, hi]^2`, row-major
/// in the first coordinate. Only defined for 2-D inputs.
pub fn boundary_grid(net: &Network, lo: [f64; 2], hi: [f64; 2], r: usize) -> Result<Vec<GridRow>> {
    if net.input_dim() != 2 {
        return Err(Error::InvalidSpec(format!(
            "boundary grid needs a 2-D network, input_dim = {}",
            net.input_dim()
        )));
    }
    if r < 2 {
        return Err(Error::InvalidConfig(format!("grid resolution must be >= 2, got {r}")));
    }
    let coord = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (r - 1) as f64;
    let rows = parallel::par_map_range(r * r, |idx| -> Result<GridRow> {
        let i = idx / r;
        let j = idx % r;
        let x1 = coord(lo[0], hi[0], i);
        let x2 = coord(lo[1], hi[1], j);
        let logits = net.forward_one(&[x1, x2])?;
        let probs = softmax(&logits);
        let mut class = 0;
        for (k, &p) in probs.iter().enumerate() {
            if p > probs[class] {
                class = k;
            }
        }
        Ok(GridRow { x1, x2, class, conf: probs[class] })
    });
    rows.into_iter().collect()
}

/// Writes a boundary grid as `x1,x2,class,conf` CSV.
pub fn write_grid_csv(rows: &[GridRow], path: &Path, seed: u64) -> Result<()> {
    let mut out = format!("# seed={seed}\nx1,x2,class,conf\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(row.x1),
            fmt_f64(row.x2),
            row.class,
            fmt_f64(row.conf)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

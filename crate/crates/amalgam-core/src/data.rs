//! Toy datasets and CSV ingestion.
//!
//! Both generators emit points rescaled into the unit square `[0,1]^2` and
//! clamp after jitter so the domain invariant holds exactly.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::fmt_f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A labelled dataset with explicit per-feature domain bounds.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain_lo.len()
    }

    pub fn class_count(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::InvalidSpec("dataset must contain at least one sample".into()));
        }
        if self.features.len() != self.labels.len() {
            return Err(Error::ShapeMismatch("features vs labels count".into()));
        }
        let d = self.dim();
        for (r, row) in self.features.iter().enumerate() {
            if row.len() != d {
                return Err(Error::ShapeMismatch(format!("row {r} has {} features", row.len())));
            }
            for (c, &v) in row.iter().enumerate() {
                if !(v >= self.domain_lo[c] && v <= self.domain_hi[c]) {
                    return Err(Error::InvalidSpec(format!(
                        "feature ({r},{c}) = {v} outside domain [{}, {}]",
                        self.domain_lo[c], self.domain_hi[c]
                    )));
                }
            }
        }
        Ok(())
    }

    /// CSV export: comment line with the seed, header `f1..fd,label`, one row
    /// per sample, 17 significant digits.
    pub fn to_csv(&self, seed: u64) -> String {
        let d = self.dim();
        let mut out = format!("# seed={seed}\n");
        let header: Vec<String> = (1..=d).map(|i| format!("f{i}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",label\n");
        for (row, &label) in self.features.iter().zip(&self.labels) {
            let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&cells.join(","));
            out.push(',');
            out.push_str(&label.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, seed: u64) -> Result<()> {
        std::fs::write(path, self.to_csv(seed))?;
        Ok(())
    }
}

/// Standard normal via Box-Muller, driven by the caller's uniform stream.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Raw (unscaled) two-moons point for parameter `t` in `[0, pi]`.
/// Class 0 is the upper arc, class 1 the lower interleaved arc.
fn moon_point(t: f64, class: usize) -> (f64, f64) {
    match class {
        0 => (t.cos(), t.sin()),
        _ => (1.0 - t.cos(), 0.5 - t.sin()),
    }
}

/// Affine map taking the raw moons range x in [-1,2], y in [-0.5,1] to the
/// unit square.
fn moon_scale(p: (f64, f64)) -> (f64, f64) {
    ((p.0 + 1.0) / 3.0, (p.1 + 0.5) / 1.5)
}

/// Two interleaving half-circles with Gaussian jitter, rescaled into
/// `[0,1]^2`. `n` must be even and at least 2.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64, split: Split) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("two moons needs n >= 2, got {n}")));
    }
    if n % 2 != 0 {
        return Err(Error::InvalidConfig(format!("two moons needs even n, got {n}")));
    }
    let m = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        for k in 0..m {
            let t = if m == 1 {
                0.0
            } else {
                std::f64::consts::PI * k as f64 / (m - 1) as f64
            };
            let (mut x, mut y) = moon_point(t, class);
            x += noise * gaussian(&mut rng);
            y += noise * gaussian(&mut rng);
            let (sx, sy) = moon_scale((x, y));
            features.push(vec![sx.clamp(0.0, 1.0), sy.clamp(0.0, 1.0)]);
            labels.push(class);
        }
    }
    Ok(Dataset { features, labels, domain_lo: vec![0.0, 0.0], domain_hi: vec![1.0, 1.0], split })
}

/// Raw spiral point for parameter `t` in `[0,1]`; arms are offset by pi.
fn spiral_point(t: f64, turns: f64, class: usize) -> (f64, f64) {
    let theta = turns * std::f64::consts::TAU * t + class as f64 * std::f64::consts::PI;
    let r = 0.1 + 0.9 * t;
    (r * theta.cos(), r * theta.sin())
}

/// Two interleaved spiral arms with Gaussian jitter, rescaled into `[0,1]^2`.
pub fn gen_spirals(n: usize, turns: f64, noise: f64, seed: u64, split: Split) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("spirals needs n >= 2, got {n}")));
    }
    if n % 2 != 0 {
        return Err(Error::InvalidConfig(format!("spirals needs even n, got {n}")));
    }
    if !(turns > 0.0) {
        return Err(Error::InvalidConfig(format!("turns must be > 0, got {turns}")));
    }
    let m = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        for k in 0..m {
            let t = if m == 1 { 0.0 } else { k as f64 / (m - 1) as f64 };
            let (mut x, mut y) = spiral_point(t, turns, class);
            x += noise * gaussian(&mut rng);
            y += noise * gaussian(&mut rng);
            features.push(vec![
                ((x + 1.0) / 2.0).clamp(0.0, 1.0),
                ((y + 1.0) / 2.0).clamp(0.0, 1.0),
            ]);
            labels.push(class);
        }
    }
    Ok(Dataset { features, labels, domain_lo: vec![0.0, 0.0], domain_hi: vec![1.0, 1.0], split })
}

/// Loads a dataset CSV (`f1..fd,label` rows). Comment lines starting with
/// `#` and an optional header row are skipped. Line numbers in errors are
/// 1-based file lines.
pub fn load_csv_dataset(
    path: &Path,
    domain_lo: Vec<f64>,
    domain_hi: Vec<f64>,
    split: Split,
) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let d = domain_lo.len();
    if domain_hi.len() != d {
        return Err(Error::ShapeMismatch("domain bounds length".into()));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').collect();
        // Header row: first data-looking line whose first cell is not a number.
        if features.is_empty() && labels.is_empty() && cells[0].trim().parse::<f64>().is_err() {
            continue;
        }
        if cells.len() != d + 1 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} columns, found {}", d + 1, cells.len()),
            });
        }
        let mut row = Vec::with_capacity(d);
        for (c, cell) in cells[..d].iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature value `{cell}` in column {}", c + 1),
            })?;
            if !(v >= domain_lo[c] && v <= domain_hi[c]) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "feature {v} in column {} outside domain [{}, {}]",
                        c + 1,
                        domain_lo[c],
                        domain_hi[c]
                    ),
                });
            }
            row.push(v);
        }
        let label: usize = cells[d].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad label `{}`", cells[d]),
        })?;
        features.push(row);
        labels.push(label);
    }
    let ds = Dataset { features, labels, domain_lo, domain_hi, split };
    ds.validate()?;
    Ok(ds)
}

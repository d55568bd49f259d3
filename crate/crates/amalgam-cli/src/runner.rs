//! Mode execution and artifact writing.
//!
//! Every run writes `config-resolved.txt` (all defaults materialized) plus
//! the mode's artifacts into the configured output directory, and nowhere
//! else. Re-running a resolved config reproduces the outputs bit-identically
//! with `threads=1`.

use std::path::{Path, PathBuf};

use amalgam_core::attack::{pgd, svgd_generate, AttackBudget, Pairing, ParticleSet, SvgdConfig};
use amalgam_core::data::{gen_spirals, gen_two_moons, load_csv_dataset, Dataset, Split};
use amalgam_core::distill::{
    train_ataka, train_cataka, train_natural, train_sat, train_single_teacher_distill,
    Amalgamation, ProbeConfig, TrainConfig, TrainHistory,
};
use amalgam_core::error::{Error, Result};
use amalgam_core::metrics::{
    boundary_grid, cross_entropy_of, diversity_report, evaluate, write_grid_csv, DiversityReport,
    EvalAttack,
};
use amalgam_core::nn::{Activation, Network, NetworkSpec};
use amalgam_core::parallel;
use amalgam_core::seed::{derive, stream};

use crate::config::{self, Config};

/// Executes `run <config>`: resolves the config, runs the mode, writes all
/// artifacts into the output directory.
pub fn run(config_path: &Path) -> Result<()> {
    let cfg = config::load(config_path)?;
    let threads = match std::env::var("AMALGAM_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| Error::InvalidConfig("AMALGAM_THREADS is not an integer".into()))?,
        Err(_) => cfg.usize_key("threads")?,
    };
    parallel::set_threads(threads);

    let out_dir = PathBuf::from(cfg.get("output_dir")?);
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("config-resolved.txt"), cfg.to_text())?;

    match cfg.mode() {
        "natural" | "sat" => run_plain(&cfg, &out_dir),
        "distill1" => run_distill1(&cfg, &out_dir),
        "ataka" => run_ataka(&cfg, &out_dir),
        "cataka" => run_cataka(&cfg, &out_dir),
        "diversity" => run_diversity(&cfg, &out_dir),
        "evaluate" => run_evaluate(&cfg, &out_dir),
        "boundary" => run_boundary(&cfg, &out_dir),
        other => Err(Error::InvalidConfig(format!("unhandled mode `{other}`"))),
    }
}

fn activation(cfg: &Config, key: &str) -> Result<Activation> {
    Activation::parse(cfg.get(key)?)
}

fn datasets(cfg: &Config) -> Result<(Dataset, Dataset)> {
    let seed = cfg.u64_key("seed")?;
    match cfg.get("dataset.kind")? {
        "moons" => {
            let noise = cfg.f64_key("dataset.noise")?;
            let train = gen_two_moons(
                cfg.usize_key("dataset.n_train")?,
                noise,
                derive(seed, &[stream::DATA, 0]),
                Split::Train,
            )?;
            let test = gen_two_moons(
                cfg.usize_key("dataset.n_test")?,
                noise,
                derive(seed, &[stream::DATA, 1]),
                Split::Test,
            )?;
            Ok((train, test))
        }
        "spirals" => {
            let noise = cfg.f64_key("dataset.noise")?;
            let turns = cfg.f64_key("dataset.turns")?;
            let train = gen_spirals(
                cfg.usize_key("dataset.n_train")?,
                turns,
                noise,
                derive(seed, &[stream::DATA, 0]),
                Split::Train,
            )?;
            let test = gen_spirals(
                cfg.usize_key("dataset.n_test")?,
                turns,
                noise,
                derive(seed, &[stream::DATA, 1]),
                Split::Test,
            )?;
            Ok((train, test))
        }
        "csv" => {
            let train = load_csv(cfg.get("dataset.train_path")?, Split::Train)?;
            let test = load_csv(cfg.get("dataset.test_path")?, Split::Test)?;
            Ok((train, test))
        }
        other => Err(Error::InvalidConfig(format!("dataset.kind `{other}`"))),
    }
}

/// CSV datasets live on the unit cube; the width comes from the first row.
fn load_csv(path: &str, split: Split) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let d = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#') && l.split(',').next().map_or(false, |c| c.trim().parse::<f64>().is_ok()))
        .map(|l| l.split(',').count().saturating_sub(1))
        .ok_or_else(|| Error::InvalidConfig(format!("no data rows in `{path}`")))?;
    load_csv_dataset(Path::new(path), vec![0.0; d], vec![1.0; d], split)
}

fn budget_for(cfg: &Config, data: &Dataset, prefix: &str) -> Result<AttackBudget> {
    AttackBudget::new(
        cfg.f64_key(&format!("{prefix}.eps"))?,
        cfg.f64_key(&format!("{prefix}.step"))?,
        cfg.usize_key(&format!("{prefix}.iters"))?,
        data.domain_lo.clone(),
        data.domain_hi.clone(),
    )
}

fn pairing(cfg: &Config) -> Result<Pairing> {
    Ok(match cfg.get("svgd.pairing")? {
        "averaged" => Pairing::AveragedEnsemble,
        _ => Pairing::PerParticleTeacher,
    })
}

fn train_config(cfg: &Config, data: &Dataset) -> Result<TrainConfig> {
    let seed = cfg.u64_key("seed")?;
    let tc = TrainConfig {
        alpha: cfg.f64_key("train.alpha")?,
        beta: cfg.f64_key("train.beta")?,
        amalgamation: Amalgamation::parse(cfg.get("train.amalgamation")?)?,
        epochs: cfg.usize_key("train.epochs")?,
        batch_size: cfg.usize_key("train.batch_size")?,
        lr: cfg.f64_key("train.lr")?,
        lr_milestones: cfg.milestones("train.lr_milestones")?,
        momentum: cfg.f64_key("train.momentum")?,
        weight_decay: cfg.f64_key("train.weight_decay")?,
        seed,
        budget: budget_for(cfg, data, "attack")?,
        svgd: SvgdConfig {
            n_particles: cfg.usize_key("svgd.particles")?,
            sigma: cfg.f64_key("svgd.sigma")?,
            gamma: cfg.f64_key("svgd.gamma")?,
            pairing: pairing(cfg)?,
            init_seed: 0,
        },
        probe: ProbeConfig {
            budget: budget_for(cfg, data, "probe")?,
            size: cfg.usize_key("probe.size")?,
        },
    };
    tc.validate()?;
    Ok(tc)
}

fn spec_for(cfg: &Config, prefix: &str, data: &Dataset, seed: u64) -> Result<NetworkSpec> {
    let widths = cfg.usize_list(&format!("{prefix}.widths"))?;
    let spec = NetworkSpec::new(data.dim(), widths, activation(cfg, &format!("{prefix}.activation"))?, seed)?;
    if spec.class_count() < data.class_count() {
        return Err(Error::InvalidConfig(format!(
            "{prefix}.widths: last width {} is below the dataset's {} classes",
            spec.class_count(),
            data.class_count()
        )));
    }
    Ok(spec)
}

fn eval_attacks(cfg: &Config, data: &Dataset) -> Result<Vec<(String, EvalAttack)>> {
    let mut out = Vec::new();
    for name in cfg.str_list("eval.attacks")? {
        let attack = match name.as_str() {
            "fgsm" => EvalAttack::Fgsm { eps: cfg.f64_key("probe.eps")? },
            "pgd" => EvalAttack::Pgd {
                budget: budget_for(cfg, data, "probe")?,
                random_init: true,
                restarts: cfg.usize_key("probe.restarts")?,
            },
            other => {
                return Err(Error::InvalidConfig(format!("eval.attacks entry `{other}`")))
            }
        };
        out.push((name, attack));
    }
    Ok(out)
}

fn write_eval(
    cfg: &Config,
    net: &Network,
    test: &Dataset,
    out_path: &Path,
) -> Result<()> {
    let seed = cfg.u64_key("seed")?;
    let attacks = eval_attacks(cfg, test)?;
    let report = evaluate(net, test, &attacks, derive(seed, &[stream::EVAL]))?;
    std::fs::write(out_path, report.to_csv(seed))?;
    Ok(())
}

fn write_history(cfg: &Config, history: &TrainHistory, out_dir: &Path) -> Result<()> {
    history.write_csv(&out_dir.join("history.csv"), cfg.u64_key("seed")?)
}

fn run_plain(cfg: &Config, out_dir: &Path) -> Result<()> {
    let (train, test) = datasets(cfg)?;
    let tc = train_config(cfg, &train)?;
    let seed = cfg.u64_key("seed")?;
    let spec = spec_for(cfg, "student", &train, derive(seed, &[101]))?;
    let (net, history) = match cfg.mode() {
        "natural" => train_natural(&spec, &train, &test, &tc)?,
        _ => train_sat(&spec, &train, &test, &tc)?,
    };
    write_history(cfg, &history, out_dir)?;
    net.save(&out_dir.join("model.net"))?;
    write_eval(cfg, &net, &test, &out_dir.join("eval.csv"))
}

fn run_distill1(cfg: &Config, out_dir: &Path) -> Result<()> {
    let (train, test) = datasets(cfg)?;
    let tc = train_config(cfg, &train)?;
    let seed = cfg.u64_key("seed")?;
    let teacher_spec = spec_for(cfg, "teacher", &train, derive(seed, &[100, 0]))?;
    let student_spec = spec_for(cfg, "student", &train, derive(seed, &[101]))?;
    let out = train_single_teacher_distill(&teacher_spec, &student_spec, &train, &test, &tc)?;
    write_history(cfg, &out.history, out_dir)?;
    out.student.save(&out_dir.join("student.net"))?;
    out.teacher.save(&out_dir.join("teacher.net"))?;
    write_eval(cfg, &out.student, &test, &out_dir.join("eval.csv"))
}

fn run_ataka(cfg: &Config, out_dir: &Path) -> Result<()> {
    let (train, test) = datasets(cfg)?;
    let tc = train_config(cfg, &train)?;
    let seed = cfg.u64_key("seed")?;
    let n = cfg.usize_key("teachers.n")?;
    let teacher_specs: Vec<NetworkSpec> = (0..n)
        .map(|i| spec_for(cfg, "teacher", &train, derive(seed, &[100, i as u64])))
        .collect::<Result<_>>()?;
    let student_spec = spec_for(cfg, "student", &train, derive(seed, &[101]))?;
    let out = train_ataka(&teacher_specs, &student_spec, &train, &test, &tc)?;
    write_history(cfg, &out.history, out_dir)?;
    out.student.save(&out_dir.join("student.net"))?;
    for (i, t) in out.teachers.iter().enumerate() {
        t.save(&out_dir.join(format!("teacher_{}.net", i + 1)))?;
    }
    write_eval(cfg, &out.student, &test, &out_dir.join("eval.csv"))
}

fn run_cataka(cfg: &Config, out_dir: &Path) -> Result<()> {
    let (train, test) = datasets(cfg)?;
    let tc = train_config(cfg, &train)?;
    let seed = cfg.u64_key("seed")?;
    let n = cfg.usize_key("students.n")?;
    let specs: Vec<NetworkSpec> = (0..n)
        .map(|i| spec_for(cfg, "student", &train, derive(seed, &[102, i as u64])))
        .collect::<Result<_>>()?;
    let (students, history) = train_cataka(&specs, &train, &test, &tc)?;
    write_history(cfg, &history, out_dir)?;
    for (i, s) in students.iter().enumerate() {
        s.save(&out_dir.join(format!("student_{}.net", i + 1)))?;
        write_eval(cfg, s, &test, &out_dir.join(format!("eval_student_{}.csv", i + 1)))?;
    }
    // eval.csv mirrors the first student for `compare`.
    write_eval(cfg, &students[0], &test, &out_dir.join("eval.csv"))
}

fn load_models(cfg: &Config) -> Result<Vec<Network>> {
    let paths = cfg
        .get_opt("models.paths")
        .ok_or_else(|| Error::InvalidConfig("missing required key `models.paths`".into()))?;
    let mut nets = Vec::new();
    for p in paths.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        nets.push(Network::load(Path::new(p))?);
    }
    if nets.is_empty() {
        return Err(Error::InvalidConfig("models.paths lists no files".into()));
    }
    Ok(nets)
}

fn mean_reports(reports: &[DiversityReport]) -> DiversityReport {
    let m = reports.len().max(1) as f64;
    DiversityReport {
        dist: reports.iter().map(|r| r.dist).sum::<f64>() / m,
        avg_ce: reports.iter().map(|r| r.avg_ce).sum::<f64>() / m,
        std_ce: reports.iter().map(|r| r.std_ce).sum::<f64>() / m,
        max_ce: reports.iter().map(|r| r.max_ce).sum::<f64>() / m,
    }
}

/// Compares PGD-with-restarts against the particle attack on matched
/// (eps, step, iters): per source sample, one set from each generator, both
/// reported under the first model.
fn run_diversity(cfg: &Config, out_dir: &Path) -> Result<()> {
    let (_, test) = datasets(cfg)?;
    let models = load_models(cfg)?;
    let seed = cfg.u64_key("seed")?;
    let budget = budget_for(cfg, &test, "attack")?;
    let n_particles = cfg.usize_key("svgd.particles")?;
    let svgd = SvgdConfig {
        n_particles,
        sigma: cfg.f64_key("svgd.sigma")?,
        gamma: cfg.f64_key("svgd.gamma")?,
        pairing: pairing(cfg)?,
        init_seed: 0,
    };
    let sources = cfg.usize_key("diversity.sources")?.min(test.len());
    if sources == 0 {
        return Err(Error::InvalidConfig("diversity.sources must be >= 1".into()));
    }

    let mut pgd_reports = Vec::with_capacity(sources);
    let mut svgd_reports = Vec::with_capacity(sources);
    for s in 0..sources {
        let x = &test.features[s];
        let y = test.labels[s];
        let restarts: Vec<Vec<f64>> = (0..n_particles)
            .map(|r| {
                pgd(&models[0], x, y, &budget, true, derive(seed, &[stream::EVAL, 0, s as u64, r as u64]))
            })
            .collect::<Result<_>>()?;
        pgd_reports.push(diversity_report(&restarts, &models[0], y)?);

        let cfg_s = SvgdConfig { init_seed: derive(seed, &[stream::EVAL, 1, s as u64]), ..svgd.clone() };
        let set = svgd_generate(x, y, &models, &budget, &cfg_s)?;
        svgd_reports.push(diversity_report(&set.particles, &models[0], y)?);

        if s == 0 {
            let losses: Vec<f64> = restarts
                .iter()
                .map(|p| cross_entropy_of(&models[0], p, y))
                .collect::<Result<_>>()?;
            let pgd_set = ParticleSet { source: x.clone(), particles: restarts, losses };
            std::fs::write(out_dir.join("particles_pgd.csv"), pgd_set.to_csv(seed))?;
            std::fs::write(out_dir.join("particles_svgd.csv"), set.to_csv(seed))?;
        }
    }

    let mut out = format!("# seed={seed}\nmetric,value\n");
    out.push_str(&mean_reports(&pgd_reports).csv_rows("pgd"));
    out.push_str(&mean_reports(&svgd_reports).csv_rows("svgd"));
    std::fs::write(out_dir.join("diversity.csv"), out)?;
    Ok(())
}

fn run_evaluate(cfg: &Config, out_dir: &Path) -> Result<()> {
    let (_, test) = datasets(cfg)?;
    let models = load_models(cfg)?;
    write_eval(cfg, &models[0], &test, &out_dir.join("eval.csv"))
}

fn run_boundary(cfg: &Config, out_dir: &Path) -> Result<()> {
    let models = load_models(cfg)?;
    let lo = cfg.f64_list("boundary.lo")?;
    let hi = cfg.f64_list("boundary.hi")?;
    let rows = boundary_grid(&models[0], [lo[0], lo[1]], [hi[0], hi[1]], cfg.usize_key("boundary.resolution")?)?;
    write_grid_csv(&rows, &out_dir.join("grid.csv"), cfg.u64_key("seed")?)?;
    Ok(())
}

/// Exit code for an error per the CLI contract: 2 invalid config/input,
/// 3 divergence, 4 I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged { .. } | Error::NonFinite(_) => 3,
        Error::Io(_) => 4,
        _ => 2,
    }
}

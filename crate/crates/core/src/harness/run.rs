use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, MemberSpec};
use crate::attacks::{run_attack, AdversarialBatch, Method};
use crate::data::{gen_glyphs, Dataset};
use crate::diff::Model;
use crate::error::{Error, Result};
use crate::hash::{derive_seed, Fnv1a};
use crate::metrics::{
    attack_success_rate, correlation, empirical_transfer_gap, flatness, grad_norm_profile, transfer_contributions,
    AsrCell, CorrKind, CorrelationEntry, FlatnessEntry, ModelEntry, ScatterPoint, TScoreEntry, TransferReport,
};
use crate::zoo::{accuracy, load_checkpoint, save_checkpoint, train_checkpoint, Checkpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Surrogate,
    Target,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Surrogate => "surrogate",
            Role::Target => "target",
        }
    }
}

/// A trained population member.
#[derive(Debug, Clone)]
pub struct Member {
    pub role: Role,
    pub index: usize,
    pub spec: MemberSpec,
    pub checkpoint: Checkpoint,
    pub model: Model,
    pub test_acc: f64,
}

impl Member {
    /// Short label such as `s0:mlp-small-1`.
    pub fn label(&self) -> String {
        let r = if self.role == Role::Surrogate { 's' } else { 't' };
        format!("{r}{}:{}-{}", self.index, self.spec.arch, self.spec.train_seed)
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.checkpoint.content_hash())
    }
}

/// Datasets and trained models of one experiment.
#[derive(Debug, Clone)]
pub struct Population {
    pub train: Dataset,
    pub test: Dataset,
    pub surrogates: Vec<Member>,
    pub targets: Vec<Member>,
}

impl Population {
    pub fn members(&self) -> impl Iterator<Item = &Member> {
        self.surrogates.iter().chain(&self.targets)
    }
}

fn cache_path(cfg: &ExperimentConfig, dir: &Path, spec: &MemberSpec) -> PathBuf {
    let t = &cfg.training;
    let mut h = Fnv1a::new();
    for v in [
        cfg.dataset.n_train as u64,
        cfg.dataset.n_test as u64,
        t.epochs as u64,
        t.batch as u64,
    ] {
        h.update(&v.to_le_bytes());
    }
    h.update(&t.lr.to_le_bytes()).update(&t.momentum.to_le_bytes());
    dir.join(format!(
        "{}-s{}-d{}-{:08x}.awtc",
        spec.arch,
        spec.train_seed,
        cfg.dataset.seed,
        h.finish() as u32
    ))
}

fn obtain(cfg: &ExperimentConfig, spec: &MemberSpec, train: &Dataset, test: &Dataset) -> Result<Checkpoint> {
    if let Some(path) = &spec.checkpoint {
        let ckpt = load_checkpoint(path)?;
        if ckpt.arch != spec.arch {
            return Err(Error::Config(format!(
                "checkpoint {} holds {}, config says {}",
                path.display(),
                ckpt.arch,
                spec.arch
            )));
        }
        return Ok(ckpt);
    }
    let hyper = cfg.training.hyper(spec.train_seed);
    let Some(dir) = &cfg.checkpoint_dir else {
        return train_checkpoint(spec.arch, spec.train_seed, train, test, &hyper);
    };
    let path = cache_path(cfg, dir, spec);
    if path.exists() {
        let ckpt = load_checkpoint(&path)?;
        if ckpt.arch == spec.arch && ckpt.meta.seed == spec.train_seed && ckpt.meta.dataset_seed == cfg.dataset.seed {
            return Ok(ckpt);
        }
    }
    let ckpt = train_checkpoint(spec.arch, spec.train_seed, train, test, &hyper)?;
    save_checkpoint(&ckpt, &path)?;
    Ok(ckpt)
}

/// Generates the data and trains (or loads) every population member.
pub fn prepare_population(cfg: &ExperimentConfig) -> Result<Population> {
    cfg.validate()?;
    let d = &cfg.dataset;
    let (train, test) = gen_glyphs(d.seed, d.n_train, d.n_test).map_err(|e| e.in_stage("gen-data"))?;
    let jobs: Vec<(Role, usize, &MemberSpec)> = cfg
        .population
        .surrogates
        .iter()
        .enumerate()
        .map(|(i, s)| (Role::Surrogate, i, s))
        .chain(
            cfg.population
                .targets
                .iter()
                .enumerate()
                .map(|(i, s)| (Role::Target, i, s)),
        )
        .collect();
    let members: Vec<Member> = jobs
        .into_par_iter()
        .map(|(role, index, spec)| {
            let stage = || format!("{} {index} ({}, seed {})", role.name(), spec.arch, spec.train_seed);
            let checkpoint = obtain(cfg, spec, &train, &test).map_err(|e| e.in_stage(stage()))?;
            let model = checkpoint.model()?;
            let test_acc = accuracy(&model, &test)?;
            Ok(Member {
                role,
                index,
                spec: spec.clone(),
                checkpoint,
                model,
                test_acc,
            })
        })
        .collect::<Result<_>>()?;
    let (surrogates, targets) = members.into_iter().partition(|m| m.role == Role::Surrogate);
    Ok(Population {
        train,
        test,
        surrogates,
        targets,
    })
}

/// Everything measured on one adversarial batch.
struct JobOut {
    asr: Vec<f64>,
    t_scores: Vec<f64>,
    flatness: f64,
    contributions: Vec<f64>,
    gaps: Vec<Vec<f64>>,
}

fn attack_job(
    cfg: &ExperimentConfig,
    pop: &Population,
    x: &crate::tensor::Tensor,
    y: &[usize],
    si: usize,
    method: Method,
    run: usize,
) -> Result<JobOut> {
    let surrogate = &pop.surrogates[si].model;
    let entity = ((si as u64) << 32) | run as u64;
    let mut attack = cfg.attack_config(method);
    // Shared across methods so they see the same sampling noise.
    attack.rng_seed = derive_seed(cfg.global_seed, "attack", entity);
    let batch: AdversarialBatch = run_attack(surrogate, x, y, &attack)?;
    let metric_seed = derive_seed(cfg.metric.seed, "metric", entity);
    let m = &cfg.metric;
    let mut t_scores = Vec::with_capacity(m.eps_list.len());
    let mut contributions = None;
    for &eps in &m.eps_list {
        let c = transfer_contributions(&batch.x_adv, surrogate, eps, m.n_eta, metric_seed)?;
        t_scores.push(c.iter().sum::<f64>() / c.len() as f64);
        if eps == m.scatter_eps {
            contributions = Some(c);
        }
    }
    let contributions = match contributions {
        Some(c) => c,
        None => transfer_contributions(&batch.x_adv, surrogate, m.scatter_eps, m.n_eta, metric_seed)?,
    };
    let asr = pop
        .targets
        .iter()
        .map(|t| attack_success_rate(&t.model, &batch))
        .collect::<Result<_>>()?;
    let gaps = pop
        .targets
        .iter()
        .map(|t| empirical_transfer_gap(&t.model, &batch))
        .collect::<Result<_>>()?;
    Ok(JobOut {
        asr,
        t_scores,
        flatness: flatness(surrogate, &batch)?,
        contributions,
        gaps,
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn corr_entry(analysis: &str, subject: String, xs: &[f64], ys: &[f64]) -> CorrelationEntry {
    CorrelationEntry {
        analysis: analysis.into(),
        subject,
        n: xs.len(),
        pearson: correlation(xs, ys, CorrKind::Pearson).ok(),
        spearman: correlation(xs, ys, CorrKind::Spearman).ok(),
    }
}

/// Runs every (surrogate, method, run) attack on an already prepared
/// population and assembles the report in config order.
pub fn run_on_population(cfg: &ExperimentConfig, pop: &Population) -> Result<TransferReport> {
    cfg.validate()?;
    let (x, y) = pop.test.head(cfg.eval_samples);
    let mut jobs = Vec::new();
    for si in 0..pop.surrogates.len() {
        for &method in &cfg.methods {
            for run in 0..cfg.runs {
                jobs.push((si, method, run));
            }
        }
    }
    let outs: Vec<JobOut> = jobs
        .par_iter()
        .map(|&(si, method, run)| {
            attack_job(cfg, pop, &x, &y, si, method, run)
                .map_err(|e| e.in_stage(format!("attack {method} on surrogate {si}, run {run}")))
        })
        .collect::<Result<_>>()?;
    // jobs are laid out [surrogate][method][run]
    let job = |si: usize, mi: usize, run: usize| &outs[(si * cfg.methods.len() + mi) * cfg.runs + run];

    let models = pop
        .members()
        .map(|m| ModelEntry {
            role: m.role.name().into(),
            index: m.index,
            arch: m.spec.arch.tag().into(),
            train_seed: m.spec.train_seed,
            hash: m.hash_hex(),
            test_acc: m.test_acc,
        })
        .collect();

    let mut asr = Vec::new();
    let mut t_scores = Vec::new();
    let mut flat = Vec::new();
    let mut correlations = Vec::new();
    let mut scatter = Vec::new();
    for (si, s) in pop.surrogates.iter().enumerate() {
        for (mi, &method) in cfg.methods.iter().enumerate() {
            for (ti, t) in pop.targets.iter().enumerate() {
                let runs: Vec<f64> = (0..cfg.runs).map(|r| job(si, mi, r).asr[ti]).collect();
                let (rate, std) = mean_std(&runs);
                asr.push(AsrCell {
                    surrogate: s.hash_hex(),
                    target: t.hash_hex(),
                    method,
                    rate,
                    std,
                    runs,
                });
            }
            for (ei, &eps) in cfg.metric.eps_list.iter().enumerate() {
                let runs: Vec<f64> = (0..cfg.runs).map(|r| job(si, mi, r).t_scores[ei]).collect();
                t_scores.push(TScoreEntry {
                    surrogate: s.hash_hex(),
                    method,
                    eps,
                    value: mean_std(&runs).0,
                    runs,
                });
            }
            let runs: Vec<f64> = (0..cfg.runs).map(|r| job(si, mi, r).flatness).collect();
            flat.push(FlatnessEntry {
                surrogate: s.hash_hex(),
                method,
                mean_grad_norm: mean_std(&runs).0,
                runs,
            });
        }
    }

    for m in pop.members() {
        let p = grad_norm_profile(&m.model, &pop.test, cfg.eval_samples).map_err(|e| e.in_stage(m.label()))?;
        correlations.push(corr_entry("grad_norm", m.label(), &p.input_norms, &p.param_norms));
    }
    for (si, s) in pop.surrogates.iter().enumerate() {
        for (ti, t) in pop.targets.iter().enumerate() {
            let (mut all_c, mut all_g) = (Vec::new(), Vec::new());
            for (mi, &method) in cfg.methods.iter().enumerate() {
                let (mut mc, mut mg) = (Vec::new(), Vec::new());
                for r in 0..cfg.runs {
                    let o = job(si, mi, r);
                    mc.extend_from_slice(&o.contributions);
                    mg.extend_from_slice(&o.gaps[ti]);
                }
                let subject = format!("{}->{}/{method}", s.label(), t.label());
                correlations.push(corr_entry("metric_vs_gap", subject, &mc, &mg));
                all_c.extend(mc);
                all_g.extend(mg);
                let o = job(si, mi, 0);
                for (k, (c, g)) in o.contributions.iter().zip(&o.gaps[ti]).enumerate() {
                    scatter.push(ScatterPoint {
                        surrogate: s.hash_hex(),
                        target: t.hash_hex(),
                        method,
                        sample: k,
                        metric: *c,
                        gap: *g,
                    });
                }
            }
            let subject = format!("{}->{}", s.label(), t.label());
            correlations.push(corr_entry("metric_vs_gap", subject, &all_c, &all_g));
        }
    }

    Ok(TransferReport {
        global_seed: cfg.global_seed,
        runs: cfg.runs,
        eval_samples: cfg.eval_samples,
        models,
        asr,
        t_scores,
        flatness: flat,
        correlations,
        scatter,
    })
}

/// Prepares the population and runs the whole experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TransferReport> {
    let pop = prepare_population(cfg)?;
    run_on_population(cfg, &pop)
}

/// Writes `report.json`, the per-table CSVs, and the flat `report.csv`.
pub fn emit_report(report: &TransferReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files: [(&str, Vec<u8>); 7] = [
        ("report.json", report.to_json()?.into_bytes()),
        ("asr.csv", report.asr_csv()?),
        ("metric.csv", report.metric_csv()?),
        ("correlations.csv", report.correlations_csv()?),
        ("flatness.csv", report.flatness_csv()?),
        ("scatter.csv", report.scatter_csv()?),
        ("report.csv", report.flat_csv()?),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

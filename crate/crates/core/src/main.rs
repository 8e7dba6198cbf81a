use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde_json::json;

use awtlab::attacks::{load_batch, run_attack, save_batch, AttackConfig, Method, DEFAULT_EPS, DEFAULT_STEPS};
use awtlab::data::{gen_glyphs, load_dataset, save_dataset};
use awtlab::harness::{emit_report, run_experiment, ExperimentConfig};
use awtlab::metrics::{
    attack_success_rate, empirical_transfer_gap, flatness, grad_norm_profile, pearson, prop1_residual_search, spearman,
    transfer_score,
};
use awtlab::zoo::{load_checkpoint, save_checkpoint, train_checkpoint, Arch, TrainHyper};
use awtlab::{derive_seed, Error, ParamSet, Result};

#[derive(Parser)]
#[command(
    name = "awtlab",
    version,
    about = "Transfer attacks on small self-trained classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the glyph train/test datasets.
    GenData {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 4000)]
        n_train: usize,
        #[arg(long, default_value_t = 1000)]
        n_test: usize,
        /// Output directory; receives train.awtd and test.awtd.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and save a checkpoint.
    Train {
        #[arg(long)]
        arch: Arch,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Craft adversarial examples on a surrogate checkpoint.
    Attack(AttackArgs),
    /// Attack success rate and transfer gap of a batch on target checkpoints.
    Evaluate {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        target: Vec<PathBuf>,
    },
    /// Weight-perturbation transferability score of a batch.
    Metric {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
        eps_list: Vec<f64>,
        /// Weight perturbations per score.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Correlation of input- and weight-gradient norms over test samples.
    Correlate {
        #[arg(long)]
        model: PathBuf,
        /// Dataset file (e.g. test.awtd).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Optional CSV of the per-sample norm pairs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search input perturbations that mimic random weight perturbations.
    Prop1 {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 50)]
        probes: usize,
        /// Perturbation size relative to the weight norm.
        #[arg(long, default_value_t = 0.01)]
        ratio: f64,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0.01)]
        step_size: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a full experiment from a TOML config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's global_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    surrogate: PathBuf,
    /// Dataset file to attack (e.g. test.awtd).
    #[arg(long)]
    data: PathBuf,
    /// Number of leading samples to attack (all when omitted).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    steps: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

impl AttackArgs {
    fn config(&self) -> AttackConfig {
        let mut c = AttackConfig::with_budget(self.method, self.eps, self.steps);
        c.alpha = self.alpha.unwrap_or(c.alpha);
        c.mu = self.mu.unwrap_or(c.mu);
        c.n_samples = self.n.unwrap_or(c.n_samples);
        c.zeta = self.zeta.unwrap_or(c.zeta);
        c.omega = self.omega.unwrap_or(c.omega);
        c.beta = self.beta.unwrap_or(c.beta);
        c.lr = self.lr.unwrap_or(c.lr);
        c.rng_seed = self.seed;
        c
    }
}

fn print(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("json values serialize"));
}

fn read_hyper(path: &Path) -> Result<TrainHyper> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            seed,
            n_train,
            n_test,
            out,
        } => {
            let (train, test) = gen_glyphs(seed, n_train, n_test)?;
            save_dataset(&train, out.join("train.awtd"))?;
            save_dataset(&test, out.join("test.awtd"))?;
            print(json!({ "seed": seed, "train": train.len(), "test": test.len(), "out": out }));
        }
        Command::Train {
            arch,
            seed,
            data,
            out,
            config,
        } => {
            let train = load_dataset(data.join("train.awtd"))?;
            let test = load_dataset(data.join("test.awtd"))?;
            let hyper = match config {
                Some(p) => read_hyper(&p)?,
                None => TrainHyper::default(),
            };
            let hyper = TrainHyper { seed, ..hyper };
            let ckpt = train_checkpoint(arch, seed, &train, &test, &hyper)?;
            save_checkpoint(&ckpt, &out)?;
            print(json!({
                "arch": arch.tag(),
                "seed": seed,
                "train_acc": ckpt.meta.final_train_acc,
                "test_acc": ckpt.meta.final_test_acc,
                "hash": format!("{:016x}", ckpt.content_hash()),
            }));
        }
        Command::Attack(args) => {
            let cfg = args.config();
            cfg.validate()?;
            let surrogate = load_checkpoint(&args.surrogate)?.model()?;
            let data = load_dataset(&args.data)?;
            let (x, y) = data.head(args.samples.unwrap_or(data.len()));
            let batch = run_attack(&surrogate, &x, &y, &cfg)?;
            save_batch(&batch, &args.out)?;
            print(json!({
                "method": cfg.method,
                "samples": batch.len(),
                "white_box_asr": attack_success_rate(&surrogate, &batch)?,
                "flatness": flatness(&surrogate, &batch)?,
                "max_perturbation": batch.max_perturbation(),
                "degenerate_steps": batch.degenerate_steps,
            }));
        }
        Command::Evaluate { batch, target } => {
            let batch = load_batch(&batch)?;
            let mut rows = Vec::new();
            for path in &target {
                let model = load_checkpoint(path)?.model()?;
                let gap = empirical_transfer_gap(&model, &batch)?;
                rows.push(json!({
                    "target": path,
                    "asr": attack_success_rate(&model, &batch)?,
                    "mean_gap": gap.iter().sum::<f64>() / gap.len() as f64,
                }));
            }
            print(json!({ "method": batch.method(), "samples": batch.len(), "targets": rows }));
        }
        Command::Metric {
            batch,
            surrogate,
            eps_list,
            samples,
            seed,
        } => {
            let batch = load_batch(&batch)?;
            let model = load_checkpoint(&surrogate)?.model()?;
            let scores = eps_list
                .iter()
                .map(|&eps| Ok(json!({ "eps": eps, "t_score": transfer_score(&batch, &model, eps, samples, seed)? })))
                .collect::<Result<Vec<_>>>()?;
            print(json!({ "method": batch.method(), "n_eta": samples, "scores": scores }));
        }
        Command::Correlate {
            model,
            data,
            samples,
            out,
        } => {
            let model = load_checkpoint(&model)?.model()?;
            let data = load_dataset(&data)?;
            let p = grad_norm_profile(&model, &data, samples)?;
            if let Some(out) = &out {
                let file = std::fs::File::create(out).map_err(|e| Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
                let mut w = csv::Writer::from_writer(file);
                let err = |e: csv::Error| Error::Header(format!("csv: {e}"));
                w.write_record(["input_norm", "param_norm", "input_normalized", "param_normalized"])
                    .map_err(err)?;
                for i in 0..p.len() {
                    let row = [
                        p.input_norms[i],
                        p.param_norms[i],
                        p.input_normalized[i],
                        p.param_normalized[i],
                    ];
                    w.write_record(row.map(|v| v.to_string())).map_err(err)?;
                }
                w.flush().map_err(|e| Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
            }
            print(json!({
                "samples": p.len(),
                "pearson": pearson(&p.input_norms, &p.param_norms)?,
                "spearman": spearman(&p.input_norms, &p.param_norms)?,
            }));
        }
        Command::Prop1 {
            model,
            data,
            probes,
            ratio,
            steps,
            step_size,
            seed,
        } => {
            let model = load_checkpoint(&model)?.model()?;
            let data = load_dataset(&data)?;
            let theta = model.params().l2_norm();
            let mut ratios = Vec::with_capacity(probes);
            for i in 0..probes {
                let mut r = awtlab::rng(derive_seed(seed, "prop1", i as u64));
                let eta: Vec<f64> = (0..model.params().total_dim())
                    .map(|_| r.random_range(-1.0..1.0))
                    .collect();
                let eta = ParamSet::from_flat(model.params().layout().clone(), eta)?;
                let (x, _) = data.select(&[i % data.len()]);
                let out = prop1_residual_search(&model, &x, &eta, ratio * theta / eta.l2_norm(), steps, step_size)?;
                ratios.push(if out.residual0 > 0.0 {
                    out.residual / out.residual0
                } else {
                    0.0
                });
            }
            let within = ratios.iter().filter(|&&q| q <= 0.1).count();
            print(json!({
                "probes": probes,
                "within_10_percent": within,
                "fraction": within as f64 / probes.max(1) as f64,
                "max_ratio": ratios.iter().copied().fold(0.0, f64::max),
            }));
        }
        Command::Experiment { config, out, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.global_seed = s;
            }
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let report = run_experiment(&cfg)?;
            let files = emit_report(&report, &dir)?;
            print(json!({ "output_dir": dir, "files": files }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

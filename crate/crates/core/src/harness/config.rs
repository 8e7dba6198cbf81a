use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, Method, DEFAULT_EPS, DEFAULT_STEPS};
use crate::error::{Error, Result};
use crate::metrics::{DEFAULT_EPS_LIST, DEFAULT_N_ETA};
use crate::zoo::{Arch, TrainHyper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Training recipe shared by the whole population; the per-model seed comes
/// from each member's `train_seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSpec {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        let h = TrainHyper::default();
        Self {
            epochs: h.epochs,
            batch: h.batch,
            lr: h.lr,
            momentum: h.momentum,
        }
    }
}

impl TrainingSpec {
    pub fn hyper(&self, seed: u64) -> TrainHyper {
        TrainHyper {
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            momentum: self.momentum,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSpec {
    pub arch: Arch,
    pub train_seed: u64,
    /// Load this checkpoint instead of training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub surrogates: Vec<MemberSpec>,
    pub targets: Vec<MemberSpec>,
}

/// Per-method attack settings; unset fields keep the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackOverride {
    pub eps: Option<f64>,
    pub steps: Option<usize>,
    pub alpha: Option<f64>,
    pub mu: Option<f64>,
    pub n_samples: Option<usize>,
    pub zeta: Option<f64>,
    pub omega: Option<f64>,
    pub beta: Option<f64>,
    pub lr: Option<f64>,
}

impl AttackOverride {
    /// Defaults with the overrides applied. Step size and neighborhood radius
    /// follow `eps`/`steps` unless set explicitly.
    pub fn apply(&self, method: Method) -> AttackConfig {
        let eps = self.eps.unwrap_or(DEFAULT_EPS);
        let steps = self.steps.unwrap_or(DEFAULT_STEPS);
        let mut c = AttackConfig::with_budget(method, eps, steps);
        c.alpha = self.alpha.unwrap_or(c.alpha);
        c.mu = self.mu.unwrap_or(c.mu);
        c.n_samples = self.n_samples.unwrap_or(c.n_samples);
        c.zeta = self.zeta.unwrap_or(c.zeta);
        c.omega = self.omega.unwrap_or(c.omega);
        c.beta = self.beta.unwrap_or(c.beta);
        c.lr = self.lr.unwrap_or(c.lr);
        c
    }
}

fn default_n_eta() -> usize {
    DEFAULT_N_ETA
}

fn default_eps_list() -> Vec<f64> {
    DEFAULT_EPS_LIST.to_vec()
}

fn default_scatter_eps() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
    #[serde(default = "default_n_eta")]
    pub n_eta: usize,
    pub seed: u64,
    /// Perturbation scale of the per-sample contributions in the scatter
    /// and metric-vs-gap correlation.
    #[serde(default = "default_scatter_eps")]
    pub scatter_eps: f64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub global_seed: u64,
    pub eval_samples: usize,
    pub output_dir: PathBuf,
    /// Repetitions with different attack randomness; rates are averaged.
    #[serde(default = "one")]
    pub runs: usize,
    /// Trained models are cached here by (arch, seed, dataset, recipe).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub training: TrainingSpec,
    pub population: PopulationSpec,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub overrides: BTreeMap<Method, AttackOverride>,
    pub metric: MetricSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.in_stage(format!("config {}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Attack settings for one method.
    pub fn attack_config(&self, method: Method) -> AttackConfig {
        self.overrides.get(&method).copied().unwrap_or_default().apply(method)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.population.surrogates.is_empty() {
            return bad("population.surrogates is empty".into());
        }
        if self.population.targets.is_empty() {
            return bad("population.targets is empty".into());
        }
        if self.methods.is_empty() {
            return bad("methods is empty".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return bad(format!("method {m} listed twice"));
            }
        }
        for m in self.overrides.keys() {
            if !self.methods.contains(m) {
                return bad(format!("override for {m}, which is not in methods"));
            }
        }
        for &m in &self.methods {
            self.attack_config(m)
                .validate()
                .map_err(|e| Error::Config(format!("method {m}: {e}")))?;
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.eval_samples < 3 || self.eval_samples > self.dataset.n_test {
            return bad(format!(
                "eval_samples must be in 3..={} (dataset.n_test), got {}",
                self.dataset.n_test, self.eval_samples
            ));
        }
        if self.dataset.n_train == 0 {
            return bad("dataset.n_train must be positive".into());
        }
        if self.training.epochs == 0 || self.training.batch == 0 {
            return bad("training.epochs and training.batch must be positive".into());
        }
        let m = &self.metric;
        if m.eps_list.is_empty() {
            return bad("metric.eps_list is empty".into());
        }
        if m.eps_list
            .iter()
            .chain([&m.scatter_eps])
            .any(|e| !(e.is_finite() && *e >= 0.0))
        {
            return bad("metric eps values must be finite and non-negative".into());
        }
        if m.n_eta == 0 {
            return bad("metric.n_eta must be at least 1".into());
        }
        Ok(())
    }
}

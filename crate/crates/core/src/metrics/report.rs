use serde::{Deserialize, Serialize};

use crate::attacks::Method;
use crate::error::{Error, Result};

/// One population member as it entered the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub role: String,
    pub index: usize,
    pub arch: String,
    pub train_seed: u64,
    /// Checkpoint content hash as 16 hex digits.
    pub hash: String,
    pub test_acc: f64,
}

/// Success rate of one (surrogate, target, method) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrCell {
    pub surrogate: String,
    pub target: String,
    pub method: Method,
    /// Mean over runs.
    pub rate: f64,
    pub std: f64,
    pub runs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TScoreEntry {
    pub surrogate: String,
    pub method: Method,
    pub eps: f64,
    pub value: f64,
    pub runs: Vec<f64>,
}

/// Mean adversarial input-gradient norm on the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessEntry {
    pub surrogate: String,
    pub method: Method,
    pub mean_grad_norm: f64,
    pub runs: Vec<f64>,
}

/// A pair of correlation coefficients; `None` when undefined (constant data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub analysis: String,
    pub subject: String,
    pub n: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

/// Per-sample (transfer-score contribution, empirical gap) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub surrogate: String,
    pub target: String,
    pub method: Method,
    pub sample: usize,
    pub metric: f64,
    pub gap: f64,
}

/// Everything one experiment measured, in config order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferReport {
    pub global_seed: u64,
    pub runs: usize,
    pub eval_samples: usize,
    pub models: Vec<ModelEntry>,
    pub asr: Vec<AsrCell>,
    pub t_scores: Vec<TScoreEntry>,
    pub flatness: Vec<FlatnessEntry>,
    pub correlations: Vec<CorrelationEntry>,
    pub scatter: Vec<ScatterPoint>,
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Header(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Header(format!("csv: {e}")))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TransferReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Header(format!("report json: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Header(format!("report json: {e}")))
    }

    pub fn asr_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["surrogate", "target", "method", "rate", "std"],
            self.asr.iter().map(|c| {
                vec![
                    c.surrogate.clone(),
                    c.target.clone(),
                    c.method.to_string(),
                    c.rate.to_string(),
                    c.std.to_string(),
                ]
            }),
        )
    }

    pub fn metric_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["surrogate", "method", "eps", "t_score"],
            self.t_scores.iter().map(|t| {
                vec![
                    t.surrogate.clone(),
                    t.method.to_string(),
                    t.eps.to_string(),
                    t.value.to_string(),
                ]
            }),
        )
    }

    pub fn correlations_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["analysis", "subject", "n", "pearson", "spearman"],
            self.correlations.iter().map(|c| {
                vec![
                    c.analysis.clone(),
                    c.subject.clone(),
                    c.n.to_string(),
                    opt(c.pearson),
                    opt(c.spearman),
                ]
            }),
        )
    }

    pub fn flatness_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["surrogate", "method", "mean_grad_norm"],
            self.flatness
                .iter()
                .map(|f| vec![f.surrogate.clone(), f.method.to_string(), f.mean_grad_norm.to_string()]),
        )
    }

    pub fn scatter_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["surrogate", "target", "method", "sample", "metric", "gap"],
            self.scatter.iter().map(|p| {
                vec![
                    p.surrogate.clone(),
                    p.target.clone(),
                    p.method.to_string(),
                    p.sample.to_string(),
                    p.metric.to_string(),
                    p.gap.to_string(),
                ]
            }),
        )
    }

    /// One row per (surrogate, target, method, metric, value); target is
    /// empty for surrogate-only quantities.
    pub fn flat_csv(&self) -> Result<Vec<u8>> {
        let mut rows = Vec::new();
        for c in &self.asr {
            rows.push(vec![
                c.surrogate.clone(),
                c.target.clone(),
                c.method.to_string(),
                "asr".into(),
                c.rate.to_string(),
            ]);
        }
        for t in &self.t_scores {
            rows.push(vec![
                t.surrogate.clone(),
                String::new(),
                t.method.to_string(),
                format!("t_score@{}", t.eps),
                t.value.to_string(),
            ]);
        }
        for f in &self.flatness {
            rows.push(vec![
                f.surrogate.clone(),
                String::new(),
                f.method.to_string(),
                "flatness".into(),
                f.mean_grad_norm.to_string(),
            ]);
        }
        csv_bytes(&["surrogate", "target", "method", "metric", "value"], rows)
    }
}

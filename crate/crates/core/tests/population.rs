use std::collections::HashSet;

use awtlab::harness::{prepare_population, ExperimentConfig};
use awtlab::zoo::disagreement;

const CONFIG: &str = r#"
global_seed = 0
eval_samples = 10
output_dir = "unused"
methods = ["mi"]

[dataset]
seed = 5
n_train = 400
n_test = 200

[training]
epochs = 3

[population]
surrogates = [{ arch = "mlp-small", train_seed = 1 }]
targets = [
  { arch = "mlp-wide", train_seed = 11 },
  { arch = "mlp-wide", train_seed = 12 },
  { arch = "mlp-wide", train_seed = 13 },
  { arch = "cnn-small", train_seed = 11 },
  { arch = "cnn-small", train_seed = 12 },
  { arch = "cnn-small", train_seed = 13 },
]

[metric]
seed = 0
"#;

#[test]
fn targets_are_distinct_models() {
    let cfg = ExperimentConfig::from_toml(CONFIG).unwrap();
    let pop = prepare_population(&cfg).unwrap();
    let hashes: HashSet<_> = pop.members().map(|m| m.hash_hex()).collect();
    assert_eq!(hashes.len(), 7);
    for (i, a) in pop.targets.iter().enumerate() {
        for b in &pop.targets[i + 1..] {
            let d = disagreement(&a.model, &b.model, &pop.test).unwrap();
            assert!(d >= 0.01, "{} vs {}: {d}", a.label(), b.label());
        }
    }
}

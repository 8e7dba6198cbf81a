use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CLASSES, SIDE};
use crate::diff::{Layer, Model};
use crate::error::{Error, Result};
use crate::hash::{derive_seed, rng};
use crate::tensor::ParamSet;

/// The model families of the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "mlp-small")]
    MlpSmall,
    #[serde(rename = "mlp-wide")]
    MlpWide,
    #[serde(rename = "cnn-small")]
    CnnSmall,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::MlpSmall, Arch::MlpWide, Arch::CnnSmall];

    pub fn tag(self) -> &'static str {
        match self {
            Arch::MlpSmall => "mlp-small",
            Arch::MlpWide => "mlp-wide",
            Arch::CnnSmall => "cnn-small",
        }
    }

    pub fn input_shape(self) -> Vec<usize> {
        vec![1, SIDE, SIDE]
    }

    pub fn layers(self) -> Vec<Layer> {
        let mlp = |dims: &[usize]| {
            let mut layers = vec![Layer::Flatten];
            for (i, w) in dims.windows(2).enumerate() {
                if i > 0 {
                    layers.push(Layer::Relu);
                }
                layers.push(Layer::Dense {
                    inputs: w[0],
                    outputs: w[1],
                });
            }
            layers
        };
        match self {
            Arch::MlpSmall => mlp(&[SIDE * SIDE, 128, 64, CLASSES]),
            Arch::MlpWide => mlp(&[SIDE * SIDE, 256, 128, CLASSES]),
            Arch::CnnSmall => {
                let half = SIDE / 2;
                let quarter = SIDE / 4;
                vec![
                    Layer::Conv3x3 {
                        in_channels: 1,
                        out_channels: 8,
                        height: SIDE,
                        width: SIDE,
                    },
                    Layer::Relu,
                    Layer::AvgPool2 {
                        channels: 8,
                        height: SIDE,
                        width: SIDE,
                    },
                    Layer::Conv3x3 {
                        in_channels: 8,
                        out_channels: 16,
                        height: half,
                        width: half,
                    },
                    Layer::Relu,
                    Layer::AvgPool2 {
                        channels: 16,
                        height: half,
                        width: half,
                    },
                    Layer::Flatten,
                    Layer::Dense {
                        inputs: 16 * quarter * quarter,
                        outputs: CLASSES,
                    },
                ]
            }
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown architecture tag {s:?}")))
    }
}

/// Fresh model: weights ~ U(±√(6/(fan_in+fan_out))) per layer, zero biases.
pub fn build_model(arch: Arch, seed: u64) -> Result<Model> {
    let layers = arch.layers();
    let zero = Model::zeroed(arch.input_shape(), layers.clone())?;
    let mut params: ParamSet = zero.params().clone();
    let mut r = rng(derive_seed(seed, "init", 0));
    for (i, layer) in layers.iter().enumerate() {
        if let Some((_, _, fan_in, fan_out)) = layer.param_shapes() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let range = params
                .layout()
                .get(&format!("l{i}.weight"))
                .expect("layout built from the same layers")
                .range();
            for w in &mut params.flat_mut()[range] {
                *w = r.random_range(-bound..bound);
            }
        }
    }
    zero.with_params(params)
}

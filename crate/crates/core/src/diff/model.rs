use std::sync::Arc;

use rayon::prelude::*;

use super::layer::Layer;
use super::loss::{softmax_xent_row, validate_labels};
use crate::error::{Error, Result};
use crate::tensor::{ParamLayout, ParamSet, Tensor};

/// Gradients of the mean cross-entropy with respect to input and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGradient {
    pub wrt_input: Tensor,
    pub wrt_params: ParamSet,
    pub loss_value: f64,
}

/// A sequential classifier: fixed layer stack plus a flat parameter set.
///
/// Models are immutable values; parameter updates build a new model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    /// Per layer, the `(weight, bias)` entry indices into the layout.
    slots: Vec<Option<(usize, Option<usize>)>>,
    output_dim: usize,
    params: ParamSet,
}

/// Which gradients a reverse pass should produce.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Want {
    pub input: bool,
    pub params: bool,
}

pub(crate) struct Pass {
    pub losses: Vec<f64>,
    pub grad_input: Option<Tensor>,
    pub grad_params: Option<ParamSet>,
}

impl Model {
    /// Parameter layout for a layer stack: `l{i}.weight`, `l{i}.bias` for each
    /// parameterized layer `i`, in stack order.
    pub fn layout_for(input_shape: &[usize], layers: &[Layer]) -> Result<ParamLayout> {
        let mut shape = input_shape.to_vec();
        let mut entries = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape)?;
            if let Some((w, b, _, _)) = layer.param_shapes() {
                entries.push((format!("l{i}.weight"), w));
                if let Some(b) = b {
                    entries.push((format!("l{i}.bias"), b));
                }
            }
        }
        ParamLayout::new(entries)
    }

    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, params: ParamSet) -> Result<Self> {
        let layout = Self::layout_for(&input_shape, &layers)?;
        if **params.layout() != layout {
            return Err(Error::LayoutMismatch(
                "parameter set does not match the layer stack".into(),
            ));
        }
        let mut shape = input_shape.clone();
        let mut slots = Vec::with_capacity(layers.len());
        let mut entry = 0;
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
            match layer.param_shapes() {
                Some((_, Some(_), _, _)) => {
                    slots.push(Some((entry, Some(entry + 1))));
                    entry += 2;
                }
                Some((_, None, _, _)) => {
                    slots.push(Some((entry, None)));
                    entry += 1;
                }
                None => slots.push(None),
            }
        }
        if shape.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "final layer must produce a vector of logits, got shape {shape:?}"
            )));
        }
        Ok(Self {
            input_shape,
            layers,
            slots,
            output_dim: shape[0],
            params,
        })
    }

    /// Model with every parameter set to zero.
    pub fn zeroed(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let layout = Arc::new(Self::layout_for(&input_shape, &layers)?);
        Self::new(input_shape, layers, ParamSet::zeros(layout))
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Same architecture, new parameters.
    pub fn with_params(&self, params: ParamSet) -> Result<Self> {
        self.params.check_layout(&params)?;
        Ok(Self { params, ..self.clone() })
    }

    /// New model with `θ + scale·η`; `self` is left untouched.
    pub fn perturb_params(&self, eta: &ParamSet, scale: f64) -> Result<Self> {
        let mut params = self.params.clone();
        params.axpy(scale, eta)?;
        Ok(Self { params, ..self.clone() })
    }

    /// Checks `x` is `[B, input_shape...]` with `B ≥ 1`.
    pub fn check_input(&self, x: &Tensor) -> Result<usize> {
        let shape = x.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(1)];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::Shape {
                expected,
                actual: shape.to_vec(),
            });
        }
        Ok(shape[0])
    }

    fn layer_params(&self, i: usize) -> (&[f64], &[f64]) {
        match self.slots[i] {
            Some((w, b)) => {
                let specs = self.params.layout().specs();
                let bias = b.map_or(&[][..], |b| self.params.slice(&specs[b]));
                (self.params.slice(&specs[w]), bias)
            }
            None => (&[], &[]),
        }
    }

    /// Forward pass for one sample, keeping every activation for the reverse pass.
    fn forward_sample(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let (w, b) = self.layer_params(i);
            let mut out = Vec::new();
            layer.forward(&acts[i], w, b, &mut out);
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::non_finite(format!("layer {i} ({}) forward", layer.name())));
            }
            acts.push(out);
        }
        Ok(acts)
    }

    /// Raw logits `[B, K]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let batch = self.check_input(x)?;
        let rows: Vec<Vec<f64>> = x
            .rows()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|row| self.forward_sample(row).map(|mut a| a.pop().unwrap()))
            .collect::<Result<_>>()?;
        Tensor::new(vec![batch, self.output_dim], rows.concat())
    }

    /// Reverse pass for one sample from a logit cotangent. Parameter
    /// gradients are accumulated into `dparams` when `want.params`.
    fn backward_sample(&self, acts: &[Vec<f64>], dlogits: &[f64], dparams: &mut [f64], want: Want) -> Result<Vec<f64>> {
        let specs = self.params.layout().specs();
        let mut dy = dlogits.to_vec();
        let mut dx = Vec::new();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let (w, _) = self.layer_params(i);
            let need_dx = want.input || i > 0;
            match (self.slots[i], want.params) {
                (Some((wi, bi)), true) => {
                    // Weight and bias entries are adjacent in the flat layout.
                    let wr = specs[wi].range();
                    let end = bi.map_or(wr.end, |b| specs[b].range().end);
                    let (dw, db) = dparams[wr.start..end].split_at_mut(wr.len());
                    layer.backward(&acts[i], w, &dy, &mut dx, dw, db, need_dx);
                }
                _ => layer.backward(&acts[i], w, &dy, &mut dx, &mut [], &mut [], need_dx),
            }
            if need_dx && !dx.iter().all(|v| v.is_finite()) {
                return Err(Error::non_finite(format!("layer {i} ({}) backward", layer.name())));
            }
            std::mem::swap(&mut dy, &mut dx);
        }
        Ok(dy)
    }

    /// Batched reverse pass. `seed` turns one sample's logits into its loss
    /// and writes the logit cotangent. Samples are processed in fixed-size
    /// chunks whose partial parameter gradients are summed in chunk order, so
    /// results do not depend on the thread count.
    pub(crate) fn reverse<F>(&self, x: &Tensor, seed: F, want: Want) -> Result<Pass>
    where
        F: Fn(usize, &[f64], &mut [f64]) -> Result<f64> + Sync,
    {
        let batch = self.check_input(x)?;
        let in_len = self.input_len();
        let k = self.output_dim;
        let chunk = chunk_size(batch);
        let total = self.params.total_dim();

        struct ChunkOut {
            losses: Vec<f64>,
            dx: Vec<f64>,
            dparams: Vec<f64>,
        }

        let chunks: Vec<ChunkOut> = (0..batch.div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let start = c * chunk;
                let end = (start + chunk).min(batch);
                let mut out = ChunkOut {
                    losses: Vec::with_capacity(end - start),
                    dx: Vec::with_capacity(if want.input { (end - start) * in_len } else { 0 }),
                    dparams: if want.params { vec![0.0; total] } else { Vec::new() },
                };
                let mut dlogits = vec![0.0; k];
                for s in start..end {
                    let acts = self.forward_sample(x.row(s))?;
                    let logits = acts.last().unwrap();
                    dlogits.fill(0.0);
                    let loss = seed(s, logits, &mut dlogits)?;
                    out.losses.push(loss);
                    let dx = self.backward_sample(&acts, &dlogits, &mut out.dparams, want)?;
                    if want.input {
                        out.dx.extend_from_slice(&dx);
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;

        let mut losses = Vec::with_capacity(batch);
        let mut dx = Vec::with_capacity(if want.input { batch * in_len } else { 0 });
        let mut dparams = if want.params { Some(vec![0.0; total]) } else { None };
        for c in chunks {
            losses.extend(c.losses);
            dx.extend(c.dx);
            if let Some(acc) = dparams.as_mut() {
                for (a, v) in acc.iter_mut().zip(&c.dparams) {
                    *a += v;
                }
            }
        }
        let grad_params = match dparams {
            Some(d) => {
                let p = ParamSet::from_flat(self.params.layout().clone(), d)?;
                if !p.is_finite() {
                    return Err(Error::non_finite("parameter gradient"));
                }
                Some(p)
            }
            None => None,
        };
        let grad_input = if want.input {
            Some(Tensor::new(x.shape().to_vec(), dx)?)
        } else {
            None
        };
        Ok(Pass {
            losses,
            grad_input,
            grad_params,
        })
    }

    /// Mean cross-entropy over the batch and its gradients with respect to
    /// the input batch and the parameters, from one reverse pass.
    pub fn grad_dual(&self, x: &Tensor, labels: &[usize]) -> Result<DualGradient> {
        let (pass, loss) = self.xent_pass(
            x,
            labels,
            Want {
                input: true,
                params: true,
            },
        )?;
        Ok(DualGradient {
            wrt_input: pass.grad_input.unwrap(),
            wrt_params: pass.grad_params.unwrap(),
            loss_value: loss,
        })
    }

    /// Mean cross-entropy and its parameter gradient (no input gradient).
    pub fn grad_params(&self, x: &Tensor, labels: &[usize]) -> Result<(f64, ParamSet)> {
        let (pass, loss) = self.xent_pass(
            x,
            labels,
            Want {
                input: false,
                params: true,
            },
        )?;
        Ok((loss, pass.grad_params.unwrap()))
    }

    /// Gradient of each sample's own loss with respect to that sample, plus
    /// the per-sample losses. Unlike [`Model::grad_dual`] rows are not scaled
    /// by `1/B`.
    pub fn input_grad_per_sample(&self, x: &Tensor, labels: &[usize]) -> Result<(Tensor, Vec<f64>)> {
        let batch = self.check_input(x)?;
        check_label_count(batch, labels)?;
        validate_labels(labels, self.output_dim)?;
        let pass = self.reverse(
            x,
            |s, logits, d| Ok(softmax_xent_row(logits, labels[s], 1.0, d)),
            Want {
                input: true,
                params: false,
            },
        )?;
        Ok((pass.grad_input.unwrap(), pass.losses))
    }

    /// Per-sample cross-entropy losses.
    pub fn losses(&self, x: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
        let batch = self.check_input(x)?;
        check_label_count(batch, labels)?;
        let logits = self.forward(x)?;
        super::loss::per_sample_xent(&logits, labels)
    }

    /// Vector-Jacobian product: pulls a `[B, K]` logit cotangent back to the
    /// input batch and the parameters.
    pub fn vjp(&self, x: &Tensor, cotangent: &Tensor) -> Result<(Tensor, ParamSet)> {
        let batch = self.check_input(x)?;
        if cotangent.shape() != [batch, self.output_dim] {
            return Err(Error::Shape {
                expected: vec![batch, self.output_dim],
                actual: cotangent.shape().to_vec(),
            });
        }
        let pass = self.reverse(
            x,
            |s, _, d| {
                d.copy_from_slice(cotangent.row(s));
                Ok(0.0)
            },
            Want {
                input: true,
                params: true,
            },
        )?;
        Ok((pass.grad_input.unwrap(), pass.grad_params.unwrap()))
    }

    fn xent_pass(&self, x: &Tensor, labels: &[usize], want: Want) -> Result<(Pass, f64)> {
        let batch = self.check_input(x)?;
        check_label_count(batch, labels)?;
        validate_labels(labels, self.output_dim)?;
        let inv = 1.0 / batch as f64;
        let pass = self.reverse(x, |s, logits, d| Ok(softmax_xent_row(logits, labels[s], inv, d)), want)?;
        let loss = pass.losses.iter().sum::<f64>() * inv;
        if !loss.is_finite() {
            return Err(Error::non_finite("cross-entropy loss"));
        }
        Ok((pass, loss))
    }
}

fn check_label_count(batch: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::Shape {
            expected: vec![batch],
            actual: vec![labels.len()],
        });
    }
    Ok(())
}

/// Samples per reduction chunk; depends only on the batch size.
fn chunk_size(batch: usize) -> usize {
    batch.div_ceil(32).max(4)
}

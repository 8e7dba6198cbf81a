//! Dense tensors and named parameter sets.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Dense row-major array of `f64` with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape {
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension, treated as the batch size.
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements per leading-dimension slice.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.row_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.row_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.row_len())
    }

    /// Selects rows `idx` along the leading dimension.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let n = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Tensor { shape, data }
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::Shape {
                expected: shape,
                actual: self.shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn l1_norm(&self) -> f64 {
        l1(&self.data)
    }

    pub fn l2_norm(&self) -> f64 {
        l2(&self.data)
    }
}

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One named entry of a [`ParamLayout`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered names and shapes of a model's parameters, fixed at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
    total: usize,
}

impl ParamLayout {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<usize>)>) -> Result<Self> {
        let mut specs: Vec<ParamSpec> = Vec::new();
        let mut offset = 0;
        for (name, shape) in entries {
            if specs.iter().any(|s| s.name == name) {
                return Err(Error::LayoutMismatch(format!("duplicate parameter name {name}")));
            }
            let spec = ParamSpec { name, shape, offset };
            offset += spec.len();
            specs.push(spec);
        }
        Ok(Self { specs, total: offset })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }
}

/// Named parameters stored as one flat vector over a shared layout.
///
/// Gradients with respect to parameters use the same type, so perturbing a
/// model by a gradient is a flat axpy once the layouts agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layout: Arc<ParamLayout>,
    data: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let data = vec![0.0; layout.total_dim()];
        Self { layout, data }
    }

    pub fn from_flat(layout: Arc<ParamLayout>, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total_dim() {
            return Err(Error::LayoutMismatch(format!(
                "flat vector has {} values, layout needs {}",
                data.len(),
                layout.total_dim()
            )));
        }
        Ok(Self { layout, data })
    }

    /// Builds a set from `(name, tensor)` pairs in order.
    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let layout = ParamLayout::new(entries.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())))?;
        let data = entries.into_iter().flat_map(|(_, t)| t.into_data()).collect();
        Ok(Self {
            layout: Arc::new(layout),
            data,
        })
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn total_dim(&self) -> usize {
        self.data.len()
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn slice(&self, spec: &ParamSpec) -> &[f64] {
        &self.data[spec.range()]
    }

    pub fn get(&self, name: &str) -> Option<Tensor> {
        let spec = self.layout.get(name)?;
        Some(Tensor {
            shape: spec.shape.clone(),
            data: self.slice(spec).to_vec(),
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, Tensor)> + '_ {
        self.layout.specs().iter().map(|s| {
            (
                s.name.as_str(),
                Tensor {
                    shape: s.shape.clone(),
                    data: self.slice(s).to_vec(),
                },
            )
        })
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub fn check_layout(&self, other: &ParamSet) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "{} entries / {} values vs {} entries / {} values",
                self.layout.specs().len(),
                self.total_dim(),
                other.layout.specs().len(),
                other.total_dim()
            )))
        }
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &ParamSet) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        l2(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Little-endian bytes of every value in layout order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

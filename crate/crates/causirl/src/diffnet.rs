//! Minimal differentiable feed-forward networks.
//!
//! Dense layers, ReLU, batch normalization and softmax cross-entropy with
//! exact reverse-mode gradients. Everything is `f64`; gradients are checked
//! against central finite differences in the test suite.
//!
//! A model in train mode mutates its batchnorm running statistics on every
//! forward pass, so a model instance is single-writer. Eval-mode forward on a
//! frozen model is a pure function of the input and stored state.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::substream;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { fan_in: usize, fan_out: usize },
    Relu,
    BatchNorm { features: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct DenseParams {
    /// fan_in x fan_out
    w: Array2<f64>,
    b: Array1<f64>,
}

#[derive(Debug, Clone)]
struct BnParams {
    scale: Array1<f64>,
    shift: Array1<f64>,
    running_mean: Array1<f64>,
    running_var: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    specs: Vec<LayerSpec>,
    dense: Vec<DenseParams>,
    bn: Vec<BnParams>,
    mode: Mode,
}

/// Per-parameter gradients, shape-congruent with the model that produced them.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub dense: Vec<(Array2<f64>, Array1<f64>)>,
    pub bn: Vec<(Array1<f64>, Array1<f64>)>,
}

impl GradientSet {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            dense: model
                .dense
                .iter()
                .map(|d| (Array2::zeros(d.w.raw_dim()), Array1::zeros(d.b.raw_dim())))
                .collect(),
            bn: model
                .bn
                .iter()
                .map(|b| {
                    (
                        Array1::zeros(b.scale.raw_dim()),
                        Array1::zeros(b.shift.raw_dim()),
                    )
                })
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &GradientSet, factor: f64) {
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            a.0.scaled_add(factor, &b.0);
            a.1.scaled_add(factor, &b.1);
        }
        for (a, b) in self.bn.iter_mut().zip(&other.bn) {
            a.0.scaled_add(factor, &b.0);
            a.1.scaled_add(factor, &b.1);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.dense
            .iter()
            .all(|(w, b)| w.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite()))
            && self
                .bn
                .iter()
                .all(|(s, h)| s.iter().all(|v| v.is_finite()) && h.iter().all(|v| v.is_finite()))
    }

    /// Flat views over every gradient array, in the model's parameter order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (w, b) in &self.dense {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        for (s, h) in &self.bn {
            out.push(s.as_slice().expect("standard layout"));
            out.push(h.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for (w, b) in &mut self.dense {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        for (s, h) in &mut self.bn {
            out.push(s.as_slice_mut().expect("standard layout"));
            out.push(h.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    mode: Mode,
    /// Input to each layer, in spec order.
    layer_inputs: Vec<Array2<f64>>,
    /// (batch mean, biased batch var) per batchnorm layer, in bn order.
    bn_saved: Vec<(Array1<f64>, Array1<f64>)>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("empty layer spec list".into()));
    }
    let mut cur: Option<usize> = None;
    for (i, spec) in specs.iter().enumerate() {
        match *spec {
            LayerSpec::Dense { fan_in, fan_out } => {
                if fan_in == 0 || fan_out == 0 {
                    return Err(Error::Config(format!("layer {i}: dense dims must be > 0")));
                }
                if let Some(d) = cur {
                    if d != fan_in {
                        return Err(Error::Config(format!(
                            "layer {i}: fan_in {fan_in} does not chain with previous width {d}"
                        )));
                    }
                }
                cur = Some(fan_out);
            }
            LayerSpec::Relu => {}
            LayerSpec::BatchNorm { features } => {
                if features == 0 {
                    return Err(Error::Config(format!(
                        "layer {i}: batchnorm features must be > 0"
                    )));
                }
                if let Some(d) = cur {
                    if d != features {
                        return Err(Error::Config(format!(
                            "layer {i}: batchnorm width {features} does not chain with previous width {d}"
                        )));
                    }
                }
                cur = Some(features);
            }
        }
    }
    Ok(())
}

impl MlpModel {
    /// Build a model with weights uniform in +-1/sqrt(fan_in), zero biases,
    /// and identity batchnorm state. Deterministic for a fixed seed.
    pub fn init(specs: &[LayerSpec], rng_seed: u64) -> Result<Self> {
        validate_specs(specs)?;
        let mut rng = substream(rng_seed, "mlp-init");
        let mut dense = Vec::new();
        let mut bn = Vec::new();
        for spec in specs {
            match *spec {
                LayerSpec::Dense { fan_in, fan_out } => {
                    let limit = 1.0 / (fan_in as f64).sqrt();
                    let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
                        rng.gen_range(-limit..limit)
                    });
                    dense.push(DenseParams {
                        w,
                        b: Array1::zeros(fan_out),
                    });
                }
                LayerSpec::Relu => {}
                LayerSpec::BatchNorm { features } => {
                    bn.push(BnParams {
                        scale: Array1::ones(features),
                        shift: Array1::zeros(features),
                        running_mean: Array1::zeros(features),
                        running_var: Array1::ones(features),
                    });
                }
            }
        }
        Ok(Self {
            specs: specs.to_vec(),
            dense,
            bn,
            mode: Mode::Train,
        })
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn in_dim(&self) -> usize {
        match self.specs[0] {
            LayerSpec::Dense { fan_in, .. } => fan_in,
            LayerSpec::BatchNorm { features } => features,
            LayerSpec::Relu => panic!("relu as first layer has no fixed width"),
        }
    }

    pub fn out_dim(&self) -> usize {
        for spec in self.specs.iter().rev() {
            match *spec {
                LayerSpec::Dense { fan_out, .. } => return fan_out,
                LayerSpec::BatchNorm { features } => return features,
                LayerSpec::Relu => continue,
            }
        }
        panic!("no sized layer in model");
    }

    /// Running batchnorm statistics, for freeze checks.
    pub fn bn_state_snapshot(&self) -> Vec<(Array1<f64>, Array1<f64>)> {
        self.bn
            .iter()
            .map(|b| (b.running_mean.clone(), b.running_var.clone()))
            .collect()
    }

    pub fn params_snapshot(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for d in &self.dense {
            out.push(d.w.iter().copied().collect());
            out.push(d.b.iter().copied().collect());
        }
        for b in &self.bn {
            out.push(b.scale.iter().copied().collect());
            out.push(b.shift.iter().copied().collect());
        }
        out
    }

    /// Flat mutable views over the trainable parameters, matching
    /// [`GradientSet::slices`] ordering. Running statistics are excluded.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for d in &mut self.dense {
            out.push(d.w.as_slice_mut().expect("standard layout"));
            out.push(d.b.as_slice_mut().expect("standard layout"));
        }
        for b in &mut self.bn {
            out.push(b.scale.as_slice_mut().expect("standard layout"));
            out.push(b.shift.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Forward pass keeping intermediates for [`MlpModel::backward`].
    ///
    /// In train mode, batchnorm layers normalize with current-batch statistics
    /// and update the running statistics; n must be >= 2. In eval mode only
    /// stored running statistics are used.
    pub fn forward_cached(&mut self, x: &Array2<f64>) -> Result<ForwardCache> {
        if x.nrows() == 0 {
            return Err(Error::Input("empty input batch".into()));
        }
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        let mut layer_inputs = Vec::with_capacity(self.specs.len());
        let mut bn_saved = Vec::new();
        let mut cur = x.clone();
        let mut dense_idx = 0;
        let mut bn_idx = 0;
        for spec in &self.specs {
            layer_inputs.push(cur.clone());
            cur = match *spec {
                LayerSpec::Dense { .. } => {
                    let p = &self.dense[dense_idx];
                    dense_idx += 1;
                    cur.dot(&p.w) + &p.b
                }
                LayerSpec::Relu => cur.mapv(|v| if v > 0.0 { v } else { 0.0 }),
                LayerSpec::BatchNorm { .. } => {
                    let n = cur.nrows();
                    let p = &mut self.bn[bn_idx];
                    bn_idx += 1;
                    match self.mode {
                        Mode::Train => {
                            if n < 2 {
                                return Err(Error::DegenerateBatch(
                                    "train-mode batchnorm needs a batch of at least 2 rows".into(),
                                ));
                            }
                            let mean = cur.mean_axis(Axis(0)).expect("nonempty");
                            let centered = &cur - &mean;
                            let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("nonempty");
                            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                            let xhat = &centered * &inv_std;
                            let out = &xhat * &p.scale + &p.shift;
                            let unbias = n as f64 / (n as f64 - 1.0);
                            p.running_mean = &p.running_mean * (1.0 - BN_MOMENTUM) + &(&mean * BN_MOMENTUM);
                            p.running_var =
                                &p.running_var * (1.0 - BN_MOMENTUM) + &(&var * (BN_MOMENTUM * unbias));
                            bn_saved.push((mean, var));
                            out
                        }
                        Mode::Eval => {
                            let inv_std = p.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                            let xhat = (&cur - &p.running_mean) * &inv_std;
                            bn_saved.push((p.running_mean.clone(), p.running_var.clone()));
                            &xhat * &p.scale + &p.shift
                        }
                    }
                }
            };
        }
        Ok(ForwardCache {
            mode: self.mode,
            layer_inputs,
            bn_saved,
            output: cur,
        })
    }

    /// Exact reverse-mode gradients of a scalar loss given its gradient on the
    /// output activations. Returns parameter gradients and the gradient on the
    /// input batch. Train mode only.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &Array2<f64>,
    ) -> Result<(GradientSet, Array2<f64>)> {
        if self.mode != Mode::Train || cache.mode != Mode::Train {
            return Err(Error::Contract(
                "backward requires a train-mode model and cache".into(),
            ));
        }
        if upstream.raw_dim() != cache.output.raw_dim() {
            return Err(Error::Shape(
                "upstream gradient does not match output shape".into(),
            ));
        }
        let mut grads = GradientSet::zeros_like(self);
        let mut g = upstream.clone();
        let mut dense_idx = self.dense.len();
        let mut bn_idx = self.bn.len();
        for (i, spec) in self.specs.iter().enumerate().rev() {
            let input = &cache.layer_inputs[i];
            g = match *spec {
                LayerSpec::Dense { .. } => {
                    dense_idx -= 1;
                    let p = &self.dense[dense_idx];
                    grads.dense[dense_idx].0 = input.t().dot(&g);
                    grads.dense[dense_idx].1 = g.sum_axis(Axis(0));
                    g.dot(&p.w.t())
                }
                LayerSpec::Relu => {
                    let mut d = g;
                    d.zip_mut_with(input, |gv, &iv| {
                        if iv <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                    d
                }
                LayerSpec::BatchNorm { .. } => {
                    bn_idx -= 1;
                    let p = &self.bn[bn_idx];
                    let (mean, var) = &cache.bn_saved[bn_idx];
                    let n = input.nrows() as f64;
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let xhat = (input - mean) * &inv_std;
                    grads.bn[bn_idx].0 = (&g * &xhat).sum_axis(Axis(0));
                    grads.bn[bn_idx].1 = g.sum_axis(Axis(0));
                    let dxhat = &g * &p.scale;
                    let sum_dxhat = dxhat.sum_axis(Axis(0));
                    let sum_dxhat_xhat = (&dxhat * &xhat).sum_axis(Axis(0));
                    ((&dxhat * n - &sum_dxhat) - &(&xhat * &sum_dxhat_xhat)) * &inv_std / n
                }
            };
        }
        Ok((grads, g))
    }

    /// Cross-entropy loss and gradients in one pass: forward, softmax
    /// cross-entropy against `labels`, backward. Returns the loss, parameter
    /// gradients and the gradient on the input batch.
    pub fn ce_backward(
        &mut self,
        x: &Array2<f64>,
        labels: &[usize],
    ) -> Result<(f64, GradientSet, Array2<f64>)> {
        let cache = self.forward_cached(x)?;
        let (loss, dlogits) = cross_entropy_grad(&cache.output, labels)?;
        let (grads, dx) = self.backward(&cache, &dlogits)?;
        Ok((loss, grads, dx))
    }
}

/// Mean over the batch of -log softmax(logits + 1e-16)[label].
///
/// The 1e-16 logit offset is numerically inert; it is retained so reported
/// loss values are directly comparable with implementations that include it.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    Ok(cross_entropy_grad(logits, labels)?.0)
}

/// Cross-entropy and its gradient with respect to the logits (already divided
/// by the batch size, so it backpropagates the mean).
pub fn cross_entropy_grad(
    logits: &Array2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = logits.dim();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            n
        )));
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN logit".into()));
    }
    for &y in labels {
        if y >= c {
            return Err(Error::Input(format!("label {y} out of range for {c} classes")));
        }
    }
    let shifted = logits.mapv(|v| v + 1e-16);
    let mut loss = 0.0;
    let mut grad = Array2::zeros((n, c));
    for (i, row) in shifted.axis_iter(Axis(0)).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += -(exps[labels[i]] / z).ln();
        for j in 0..c {
            let p = exps[j] / z;
            grad[(i, j)] = (p - if j == labels[i] { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

/// Fraction of rows where the argmax logit equals the label.
pub fn accuracy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut correct = 0usize;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

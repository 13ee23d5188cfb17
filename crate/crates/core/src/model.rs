//! Small differentiable classifiers with exact per-sample gradients.
//!
//! Two architectures: multinomial logistic regression and a one-hidden-layer
//! ReLU MLP. Gradients are closed-form backprop, no autodiff. Feature
//! sparsity (zero pixels) is skipped in both the forward and backward pass.
//!
//! All batched operations compute per-example results independently and
//! assemble them in index order, so results do not depend on how work is
//! chunked across threads.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Architecture descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Arch {
    Logistic,
    Mlp { hidden: usize },
}

impl Arch {
    pub fn param_count(&self, input_dim: usize, num_classes: usize) -> usize {
        match self {
            Arch::Logistic => input_dim * num_classes + num_classes,
            Arch::Mlp { hidden } => {
                input_dim * hidden + hidden + hidden * num_classes + num_classes
            }
        }
    }
}

/// Per-example gradients for a batch: row i is the gradient of example i's
/// loss with respect to (a slice of) the parameters.
#[derive(Debug, Clone)]
pub struct PerSampleGrads {
    pub grads: Array2<f64>,
    pub losses: Vec<f64>,
}

/// Model parameters as a flat vector plus the architecture that interprets it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    arch: Arch,
    input_dim: usize,
    num_classes: usize,
    theta: Vec<f64>,
}

/// Draws with a scaled-uniform initialization (bound `1/sqrt(fan_in)`),
/// biases zero; deterministic under the seed.
pub fn init_model(arch: Arch, input_dim: usize, num_classes: usize, seed: u64) -> ModelState {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut uniform = |n: usize, bound: f64, out: &mut Vec<f64>| {
        for _ in 0..n {
            let r: f64 = rng.random();
            out.push((2.0 * r - 1.0) * bound);
        }
    };
    let mut theta = Vec::with_capacity(arch.param_count(input_dim, num_classes));
    match arch {
        Arch::Logistic => {
            uniform(input_dim * num_classes, 1.0 / (input_dim as f64).sqrt(), &mut theta);
            theta.extend(std::iter::repeat(0.0).take(num_classes));
        }
        Arch::Mlp { hidden } => {
            uniform(input_dim * hidden, 1.0 / (input_dim as f64).sqrt(), &mut theta);
            theta.extend(std::iter::repeat(0.0).take(hidden));
            uniform(hidden * num_classes, 1.0 / (hidden as f64).sqrt(), &mut theta);
            theta.extend(std::iter::repeat(0.0).take(num_classes));
        }
    }
    ModelState {
        arch,
        input_dim,
        num_classes,
        theta,
    }
}

impl ModelState {
    /// Wraps an explicit parameter vector (must match the architecture size).
    pub fn from_theta(
        arch: Arch,
        input_dim: usize,
        num_classes: usize,
        theta: Vec<f64>,
    ) -> Result<Self> {
        let p = arch.param_count(input_dim, num_classes);
        if theta.len() != p {
            return Err(Error::Config(format!(
                "theta has {} entries, architecture needs {p}",
                theta.len()
            )));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(Self {
            arch,
            input_dim,
            num_classes,
            theta,
        })
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Parameter indices of the final linear layer (weights then biases).
    /// For the logistic architecture this is the whole vector.
    pub fn last_layer_range(&self) -> Range<usize> {
        match self.arch {
            Arch::Logistic => 0..self.theta.len(),
            Arch::Mlp { hidden } => {
                let start = self.input_dim * hidden + hidden;
                start..self.theta.len()
            }
        }
    }

    /// Dimension of the final layer's input (features for logistic, hidden
    /// activations for the MLP).
    pub fn last_layer_input_dim(&self) -> usize {
        match self.arch {
            Arch::Logistic => self.input_dim,
            Arch::Mlp { hidden } => hidden,
        }
    }

    fn check_indices(&self, ds: &LabeledDataset, indices: &[usize]) -> Result<()> {
        if ds.dim() != self.input_dim || ds.num_classes() != self.num_classes {
            return Err(Error::Domain(format!(
                "dataset ({}x{} classes) incompatible with model ({}x{})",
                ds.dim(),
                ds.num_classes(),
                self.input_dim,
                self.num_classes
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
            return Err(Error::Domain(format!("index {bad} out of bounds")));
        }
        Ok(())
    }

    /// Mean cross-entropy loss and accuracy over the given examples.
    pub fn forward_loss(&self, ds: &LabeledDataset, indices: &[usize]) -> Result<(f64, f64)> {
        if indices.is_empty() {
            return Err(Error::Domain("forward_loss over empty index set".into()));
        }
        self.check_indices(ds, indices)?;
        let partials: Vec<(f64, usize)> = indices
            .par_chunks(512)
            .map(|chunk| {
                let mut scratch = Scratch::new(self);
                let mut loss_sum = 0.0;
                let mut correct = 0usize;
                for &i in chunk {
                    let (loss, pred) = self.example_loss_pred(ds, i, &mut scratch);
                    loss_sum += loss;
                    if pred == ds.label(i) {
                        correct += 1;
                    }
                }
                (loss_sum, correct)
            })
            .collect();
        let (loss_sum, correct) = partials
            .into_iter()
            .fold((0.0, 0usize), |(l, c), (pl, pc)| (l + pl, c + pc));
        let n = indices.len() as f64;
        Ok((loss_sum / n, correct as f64 / n))
    }

    /// Exact per-example gradients over the full parameter vector.
    pub fn per_sample_gradients(
        &self,
        ds: &LabeledDataset,
        indices: &[usize],
    ) -> Result<PerSampleGrads> {
        if indices.is_empty() {
            return Err(Error::Domain("per_sample_gradients over empty index set".into()));
        }
        self.check_indices(ds, indices)?;
        let p = self.param_count();
        let mut grads = Array2::<f64>::zeros((indices.len(), p));
        let mut losses = vec![0.0; indices.len()];
        let buf = grads.as_slice_mut().expect("row-major");
        buf.par_chunks_mut(p)
            .zip(losses.par_iter_mut())
            .enumerate()
            .for_each(|(pos, (row, loss))| {
                let mut scratch = Scratch::new(self);
                *loss = self.grad_row_into(ds, indices[pos], row, &mut scratch);
            });
        Ok(PerSampleGrads { grads, losses })
    }

    /// Per-example gradients restricted to the final linear layer.
    pub fn last_layer_gradients(
        &self,
        ds: &LabeledDataset,
        indices: &[usize],
    ) -> Result<PerSampleGrads> {
        if indices.is_empty() {
            return Err(Error::Domain("last_layer_gradients over empty index set".into()));
        }
        self.check_indices(ds, indices)?;
        let li = self.last_layer_input_dim();
        let c = self.num_classes;
        let cols = li * c + c;
        let mut grads = Array2::<f64>::zeros((indices.len(), cols));
        let mut losses = vec![0.0; indices.len()];
        let buf = grads.as_slice_mut().expect("row-major");
        buf.par_chunks_mut(cols)
            .zip(losses.par_iter_mut())
            .enumerate()
            .for_each(|(pos, (row, loss))| {
                let mut scratch = Scratch::new(self);
                let i = indices[pos];
                let acts = self.fill_last_layer_input(ds, i, &mut scratch);
                *loss = last_layer_grad_into(
                    &self.theta[self.last_layer_range()],
                    &acts,
                    ds.label(i),
                    c,
                    row,
                    &mut scratch.z,
                );
            });
        Ok(PerSampleGrads { grads, losses })
    }

    /// Final-layer input activations per example: the raw features for
    /// logistic, post-ReLU hidden activations for the MLP.
    pub fn last_layer_inputs(&self, ds: &LabeledDataset, indices: &[usize]) -> Result<Array2<f64>> {
        self.check_indices(ds, indices)?;
        let li = self.last_layer_input_dim();
        let mut out = Array2::<f64>::zeros((indices.len(), li));
        let buf = out.as_slice_mut().expect("row-major");
        buf.par_chunks_mut(li).enumerate().for_each(|(pos, row)| {
            let i = indices[pos];
            match self.arch {
                Arch::Logistic => {
                    for (r, &x) in row.iter_mut().zip(ds.row(i)) {
                        *r = f64::from(x);
                    }
                }
                Arch::Mlp { .. } => {
                    self.hidden_into(ds.row(i), row);
                }
            }
        });
        Ok(out)
    }

    /// Gradient of the mean loss, accumulated in place without materializing
    /// per-example rows. Separate code path from `per_sample_gradients`,
    /// useful as an independent check of gradient linearity.
    pub fn batch_mean_gradient(
        &self,
        ds: &LabeledDataset,
        indices: &[usize],
    ) -> Result<(Vec<f64>, f64)> {
        if indices.is_empty() {
            return Err(Error::Domain("batch_mean_gradient over empty index set".into()));
        }
        self.check_indices(ds, indices)?;
        let mut scratch = Scratch::new(self);
        let mut acc = vec![0.0; self.param_count()];
        let mut row = vec![0.0; self.param_count()];
        let mut loss_sum = 0.0;
        for &i in indices {
            row.iter_mut().for_each(|v| *v = 0.0);
            loss_sum += self.grad_row_into(ds, i, &mut row, &mut scratch);
            for (a, r) in acc.iter_mut().zip(&row) {
                *a += r;
            }
        }
        let n = indices.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok((acc, loss_sum / n))
    }

    /// Architecture descriptor string, e.g. `logistic(784,10)` or
    /// `mlp(784,64,10)`.
    pub fn descriptor(&self) -> String {
        match self.arch {
            Arch::Logistic => format!("logistic({},{})", self.input_dim, self.num_classes),
            Arch::Mlp { hidden } => {
                format!("mlp({},{},{})", self.input_dim, hidden, self.num_classes)
            }
        }
    }

    /// Checkpoint format: u32 LE descriptor length, descriptor bytes,
    /// u64 LE parameter count, then little-endian f64 parameters.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let desc = self.descriptor();
        out.write_all(&(desc.len() as u32).to_le_bytes())?;
        out.write_all(desc.as_bytes())?;
        out.write_all(&(self.theta.len() as u64).to_le_bytes())?;
        for &v in &self.theta {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let err = |offset: usize, message: &str| Error::Format {
            offset: offset as u64,
            message: message.into(),
        };
        let desc_len = u32::from_le_bytes(
            bytes.get(0..4).ok_or_else(|| err(0, "truncated"))?.try_into().unwrap(),
        ) as usize;
        let desc = std::str::from_utf8(
            bytes.get(4..4 + desc_len).ok_or_else(|| err(4, "truncated descriptor"))?,
        )
        .map_err(|_| err(4, "descriptor is not utf-8"))?;
        let (arch, input_dim, num_classes) = parse_descriptor(desc)?;
        let off = 4 + desc_len;
        let p = u64::from_le_bytes(
            bytes
                .get(off..off + 8)
                .ok_or_else(|| err(off, "truncated parameter count"))?
                .try_into()
                .unwrap(),
        ) as usize;
        let data = bytes
            .get(off + 8..off + 8 + p * 8)
            .ok_or_else(|| err(off + 8, "truncated parameters"))?;
        let theta: Vec<f64> = data
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::from_theta(arch, input_dim, num_classes, theta)
    }

    // ----- per-example kernels -----

    fn hidden_into(&self, x: &[f32], hidden: &mut [f64]) {
        let Arch::Mlp { hidden: h } = self.arch else {
            unreachable!("hidden_into is MLP-only")
        };
        let w1 = &self.theta[..self.input_dim * h];
        let b1 = &self.theta[self.input_dim * h..self.input_dim * h + h];
        hidden.copy_from_slice(b1);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                let xv = f64::from(xj);
                let w = &w1[j * h..(j + 1) * h];
                for (acc, &wju) in hidden.iter_mut().zip(w) {
                    *acc += xv * wju;
                }
            }
        }
        for v in hidden.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    /// Fills `scratch.hidden` (MLP) and returns the last-layer input.
    fn fill_last_layer_input(
        &self,
        ds: &LabeledDataset,
        i: usize,
        scratch: &mut Scratch,
    ) -> Vec<f64> {
        match self.arch {
            Arch::Logistic => ds.row(i).iter().map(|&x| f64::from(x)).collect(),
            Arch::Mlp { .. } => {
                self.hidden_into(ds.row(i), &mut scratch.hidden);
                scratch.hidden.clone()
            }
        }
    }

    /// Logits for example `i` into `scratch.z`; MLP hidden activations are
    /// left in `scratch.hidden`.
    fn logits(&self, ds: &LabeledDataset, i: usize, scratch: &mut Scratch) {
        let c = self.num_classes;
        let x = ds.row(i);
        match self.arch {
            Arch::Logistic => {
                let w = &self.theta[..self.input_dim * c];
                let b = &self.theta[self.input_dim * c..];
                scratch.z.copy_from_slice(b);
                for (j, &xj) in x.iter().enumerate() {
                    if xj != 0.0 {
                        let xv = f64::from(xj);
                        let wj = &w[j * c..(j + 1) * c];
                        for (zt, &wjt) in scratch.z.iter_mut().zip(wj) {
                            *zt += xv * wjt;
                        }
                    }
                }
            }
            Arch::Mlp { hidden: h } => {
                self.hidden_into(x, &mut scratch.hidden);
                let off = self.input_dim * h + h;
                let w2 = &self.theta[off..off + h * c];
                let b2 = &self.theta[off + h * c..];
                scratch.z.copy_from_slice(b2);
                for (u, &au) in scratch.hidden.iter().enumerate() {
                    if au != 0.0 {
                        let wu = &w2[u * c..(u + 1) * c];
                        for (zt, &wut) in scratch.z.iter_mut().zip(wu) {
                            *zt += au * wut;
                        }
                    }
                }
            }
        }
    }

    fn example_loss_pred(&self, ds: &LabeledDataset, i: usize, scratch: &mut Scratch) -> (f64, usize) {
        self.logits(ds, i, scratch);
        let pred = argmax(&scratch.z);
        let loss = softmax_into_probs(&mut scratch.z, ds.label(i));
        (loss, pred)
    }

    /// Writes the full-parameter gradient of example `i` into `row`
    /// (assumed zeroed) and returns the example loss.
    fn grad_row_into(&self, ds: &LabeledDataset, i: usize, row: &mut [f64], scratch: &mut Scratch) -> f64 {
        let c = self.num_classes;
        let y = ds.label(i);
        let x = ds.row(i);
        self.logits(ds, i, scratch);
        let loss = softmax_into_probs(&mut scratch.z, y);
        scratch.z[y] -= 1.0; // z now holds dz = p - onehot(y)
        match self.arch {
            Arch::Logistic => {
                let m = self.input_dim;
                for (j, &xj) in x.iter().enumerate() {
                    if xj != 0.0 {
                        let xv = f64::from(xj);
                        let out = &mut row[j * c..(j + 1) * c];
                        for (o, &dzt) in out.iter_mut().zip(&scratch.z) {
                            *o = xv * dzt;
                        }
                    }
                }
                row[m * c..].copy_from_slice(&scratch.z);
            }
            Arch::Mlp { hidden: h } => {
                let m = self.input_dim;
                let off_w2 = m * h + h;
                let off_b2 = off_w2 + h * c;
                let w2 = &self.theta[off_w2..off_b2];
                // Last layer.
                for (u, &au) in scratch.hidden.iter().enumerate() {
                    if au != 0.0 {
                        let out = &mut row[off_w2 + u * c..off_w2 + (u + 1) * c];
                        for (o, &dzt) in out.iter_mut().zip(&scratch.z) {
                            *o = au * dzt;
                        }
                    }
                }
                row[off_b2..].copy_from_slice(&scratch.z);
                // Backprop into the hidden layer; ReLU subgradient at 0 is 0.
                for (u, du) in scratch.d_hidden.iter_mut().enumerate() {
                    *du = if scratch.hidden[u] > 0.0 {
                        let wu = &w2[u * c..(u + 1) * c];
                        wu.iter().zip(&scratch.z).map(|(&w, &d)| w * d).sum()
                    } else {
                        0.0
                    };
                }
                for (j, &xj) in x.iter().enumerate() {
                    if xj != 0.0 {
                        let xv = f64::from(xj);
                        let out = &mut row[j * h..(j + 1) * h];
                        for (o, &du) in out.iter_mut().zip(&scratch.d_hidden) {
                            *o = xv * du;
                        }
                    }
                }
                row[m * h..m * h + h].copy_from_slice(&scratch.d_hidden);
            }
        }
        loss
    }
}

/// Gradient of one example's loss with respect to the final linear layer,
/// given that layer's input activations. `layer` is `[weights; biases]` of
/// length `acts.len()*c + c`; `row` is assumed zeroed.
pub(crate) fn last_layer_grad_into(
    layer: &[f64],
    acts: &[f64],
    label: usize,
    c: usize,
    row: &mut [f64],
    z: &mut [f64],
) -> f64 {
    let li = acts.len();
    let (w, b) = layer.split_at(li * c);
    z.copy_from_slice(b);
    for (u, &au) in acts.iter().enumerate() {
        if au != 0.0 {
            let wu = &w[u * c..(u + 1) * c];
            for (zt, &wut) in z.iter_mut().zip(wu) {
                *zt += au * wut;
            }
        }
    }
    let loss = softmax_into_probs(z, label);
    z[label] -= 1.0;
    for (u, &au) in acts.iter().enumerate() {
        if au != 0.0 {
            let out = &mut row[u * c..(u + 1) * c];
            for (o, &dzt) in out.iter_mut().zip(z.iter()) {
                *o = au * dzt;
            }
        }
    }
    row[li * c..].copy_from_slice(z);
    loss
}

fn parse_descriptor(desc: &str) -> Result<(Arch, usize, usize)> {
    let bad = || Error::Format {
        offset: 4,
        message: format!("unrecognized architecture descriptor '{desc}'"),
    };
    let (name, rest) = desc.split_once('(').ok_or_else(bad)?;
    let args = rest.strip_suffix(')').ok_or_else(bad)?;
    let nums: Vec<usize> = args
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    match (name, nums.as_slice()) {
        ("logistic", [m, c]) => Ok((Arch::Logistic, *m, *c)),
        ("mlp", [m, h, c]) => Ok((Arch::Mlp { hidden: *h }, *m, *c)),
        _ => Err(bad()),
    }
}

/// Numerically stable softmax: replaces `z` with probabilities and returns
/// the cross-entropy loss for `label`.
fn softmax_into_probs(z: &mut [f64], label: usize) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let lse = max + sum.ln();
    let loss = lse - (z[label].ln() + max);
    for v in z.iter_mut() {
        *v /= sum;
    }
    loss
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

struct Scratch {
    hidden: Vec<f64>,
    d_hidden: Vec<f64>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(model: &ModelState) -> Self {
        let h = match model.arch {
            Arch::Logistic => 0,
            Arch::Mlp { hidden } => hidden,
        };
        Self {
            hidden: vec![0.0; h],
            d_hidden: vec![0.0; h],
            z: vec![0.0; model.num_classes],
        }
    }
}

//! Multi-headed MLP with hand-written forward/backward passes.
//!
//! A shared ReLU trunk feeds one softmax output head per task. Heads can be
//! widened (new classes) or added (new tasks) without touching any existing
//! parameter, which is what lets a continually trained model inherit
//! everything it has learned so far.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{
    batch_loss, loss_gradients, train_mission, train_step, CurrentMission, LossLedger, NoReplay,
    ReplayProvider, SgdMomentum, StepOutput, SubBatch, TaggedBatch, TrainConfig,
};

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::Scalar;

pub type TaskId = u32;

/// Probabilities below this are clamped before taking the log in the
/// cross-entropy.
pub const PROB_CLAMP: f64 = 1e-12;

/// One dense layer: `weights` is (out x in), `bias` has length `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<F> {
    pub weights: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> DenseLayer<F> {
    /// Glorot-uniform weights, zero biases.
    fn glorot<R: Rng + ?Sized>(out: usize, inp: usize, rng: &mut R) -> Self {
        let limit = F::cast((6.0 / (inp + out) as f64).sqrt());
        let two = F::cast(2.0);
        let mut weights = Array2::<F>::zeros((out, inp));
        for w in weights.iter_mut() {
            *w = (F::unit_uniform(rng) * two - F::one()) * limit;
        }
        DenseLayer { weights, bias: Array1::zeros(out) }
    }

    fn output_width(&self) -> usize {
        self.weights.nrows()
    }

    fn affine(&self, input: &Array2<F>) -> Array2<F> {
        input.dot(&self.weights.t()) + &self.bias
    }

    fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Shared trunk plus one softmax head per task.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadMlp<F: Scalar> {
    trunk: Vec<DenseLayer<F>>,
    heads: BTreeMap<TaskId, DenseLayer<F>>,
    rng_seed: u64,
    /// Initialization events so far; each expansion draws from a fresh
    /// seeded stream.
    expansions: u64,
}

impl<F: Scalar> MultiHeadMlp<F> {
    /// Builds the trunk from `[input, hidden...]` widths. Heads are attached
    /// with [`MultiHeadMlp::add_head`].
    pub fn new(trunk_dims: &[usize], seed: u64) -> Result<Self> {
        if trunk_dims.len() < 2 {
            return Err(Error::invalid_input(
                "trunk needs an input width and at least one hidden layer",
            ));
        }
        if trunk_dims.iter().any(|&w| w == 0) {
            return Err(Error::invalid_input("layer widths must be positive"));
        }
        let mut rng = stream(seed, 0);
        let trunk = trunk_dims
            .windows(2)
            .map(|w| DenseLayer::glorot(w[1], w[0], &mut rng))
            .collect();
        Ok(Self { trunk, heads: BTreeMap::new(), rng_seed: seed, expansions: 1 })
    }

    pub fn input_width(&self) -> usize {
        self.trunk[0].weights.ncols()
    }

    pub fn trunk_output_width(&self) -> usize {
        self.trunk.last().expect("non-empty trunk").output_width()
    }

    pub fn trunk_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_width()];
        dims.extend(self.trunk.iter().map(|l| l.output_width()));
        dims
    }

    pub fn trunk_layers(&self) -> &[DenseLayer<F>] {
        &self.trunk
    }

    pub fn heads(&self) -> &BTreeMap<TaskId, DenseLayer<F>> {
        &self.heads
    }

    pub fn head(&self, task: TaskId) -> Result<&DenseLayer<F>> {
        self.heads
            .get(&task)
            .ok_or_else(|| Error::invalid_input(format!("unknown head {task}")))
    }

    pub fn head_width(&self, task: TaskId) -> Result<usize> {
        Ok(self.head(task)?.output_width())
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn expansions(&self) -> u64 {
        self.expansions
    }

    fn next_init_stream(&mut self) -> rand_chacha::ChaCha8Rng {
        let s = stream(self.rng_seed, self.expansions);
        self.expansions += 1;
        s
    }

    /// Adds a new detection head in parallel to the existing ones. The trunk
    /// and every other head are untouched.
    pub fn add_head(&mut self, task: TaskId, classes: usize) -> Result<()> {
        if classes == 0 {
            return Err(Error::invalid_input("a head needs at least one class"));
        }
        if self.heads.contains_key(&task) {
            return Err(Error::invalid_input(format!("head {task} already exists")));
        }
        let inp = self.trunk_output_width();
        let mut rng = self.next_init_stream();
        let layer = DenseLayer::glorot(classes, inp, &mut rng);
        self.heads.insert(task, layer);
        Ok(())
    }

    /// Widens a head by `new_classes` output neurons. Existing rows of the
    /// weight matrix and bias are carried over bit for bit; the new rows are
    /// freshly initialized. Growing by 0 is a no-op.
    pub fn add_output_neurons(&mut self, task: TaskId, new_classes: usize) -> Result<()> {
        self.head(task)?;
        if new_classes == 0 {
            return Ok(());
        }
        let inp = self.trunk_output_width();
        let mut rng = self.next_init_stream();
        let head = self.heads.get_mut(&task).expect("checked above");
        let old = head.output_width();
        // Fresh rows use the Glorot limit of the expanded layer.
        let limit = F::cast((6.0 / (inp + old + new_classes) as f64).sqrt());
        let two = F::cast(2.0);
        let mut weights = Array2::<F>::zeros((old + new_classes, inp));
        let mut bias = Array1::<F>::zeros(old + new_classes);
        weights.slice_mut(ndarray::s![..old, ..]).assign(&head.weights);
        bias.slice_mut(ndarray::s![..old]).assign(&head.bias);
        for i in old..old + new_classes {
            for j in 0..inp {
                weights[[i, j]] = (F::unit_uniform(&mut rng) * two - F::one()) * limit;
            }
        }
        head.weights = weights;
        head.bias = bias;
        Ok(())
    }

    /// Trunk activations for a batch: element 0 is the input itself, element
    /// i+1 the post-ReLU output of trunk layer i.
    pub(crate) fn trunk_forward(&self, batch: ArrayView2<'_, F>) -> Vec<Array2<F>> {
        let mut acts: Vec<Array2<F>> = Vec::with_capacity(self.trunk.len() + 1);
        acts.push(batch.to_owned());
        for layer in &self.trunk {
            let z = layer.affine(acts.last().expect("non-empty"));
            acts.push(z.mapv(|v| if v > F::zero() { v } else { F::zero() }));
        }
        acts
    }

    /// Softmax probabilities of `batch` at the given head. Each output row
    /// is non-negative and sums to 1.
    pub fn forward(&self, batch: ArrayView2<'_, F>, head: TaskId) -> Result<Array2<F>> {
        if batch.ncols() != self.input_width() {
            return Err(Error::invalid_input(format!(
                "batch width {} does not match trunk input width {}",
                batch.ncols(),
                self.input_width()
            )));
        }
        let layer = self.head(head)?;
        let acts = self.trunk_forward(batch);
        let logits = layer.affine(acts.last().expect("non-empty"));
        Ok(softmax_rows(&logits))
    }

    /// One trunk pass, every head evaluated: the multi-disease view of a
    /// single example.
    pub fn forward_all_heads(&self, row: ArrayView1<'_, F>) -> Result<BTreeMap<TaskId, Array1<F>>> {
        if row.len() != self.input_width() {
            return Err(Error::invalid_input("row width does not match trunk input width"));
        }
        let batch = row.insert_axis(Axis(0));
        let acts = self.trunk_forward(batch);
        let last = acts.last().expect("non-empty");
        let mut out = BTreeMap::new();
        for (&task, layer) in &self.heads {
            let probs = softmax_rows(&layer.affine(last));
            out.insert(task, probs.row(0).to_owned());
        }
        Ok(out)
    }

    /// Total learnable parameters across trunk and heads.
    pub fn num_parameters(&self) -> usize {
        self.trunk.iter().map(|l| l.parameter_count()).sum::<usize>()
            + self.heads.values().map(|l| l.parameter_count()).sum::<usize>()
    }

    /// Reads parameter `idx` in the documented flat order: trunk layers in
    /// sequence (weights row-major, then bias), then heads by ascending task
    /// id (weights row-major, then bias).
    pub fn parameter(&self, idx: usize) -> Option<F> {
        self.locate(idx).map(|loc| match loc {
            Location::Weight(layer, i, j) => self.layer_at(layer).weights[[i, j]],
            Location::Bias(layer, i) => self.layer_at(layer).bias[i],
        })
    }

    /// Writes parameter `idx` (same order as [`MultiHeadMlp::parameter`]).
    pub fn set_parameter(&mut self, idx: usize, value: F) -> Result<()> {
        let loc = self
            .locate(idx)
            .ok_or_else(|| Error::invalid_input(format!("parameter index {idx} out of range")))?;
        match loc {
            Location::Weight(layer, i, j) => self.layer_at_mut(layer).weights[[i, j]] = value,
            Location::Bias(layer, i) => self.layer_at_mut(layer).bias[i] = value,
        }
        Ok(())
    }

    fn layer_order(&self) -> Vec<LayerRef> {
        let mut order: Vec<LayerRef> = (0..self.trunk.len()).map(LayerRef::Trunk).collect();
        order.extend(self.heads.keys().map(|&t| LayerRef::Head(t)));
        order
    }

    fn layer_at(&self, layer: LayerRef) -> &DenseLayer<F> {
        match layer {
            LayerRef::Trunk(i) => &self.trunk[i],
            LayerRef::Head(t) => self.heads.get(&t).expect("existing head"),
        }
    }

    fn layer_at_mut(&mut self, layer: LayerRef) -> &mut DenseLayer<F> {
        match layer {
            LayerRef::Trunk(i) => &mut self.trunk[i],
            LayerRef::Head(t) => self.heads.get_mut(&t).expect("existing head"),
        }
    }

    fn locate(&self, mut idx: usize) -> Option<Location> {
        for layer_ref in self.layer_order() {
            let layer = self.layer_at(layer_ref);
            let w = layer.weights.len();
            if idx < w {
                let cols = layer.weights.ncols();
                return Some(Location::Weight(layer_ref, idx / cols, idx % cols));
            }
            idx -= w;
            let b = layer.bias.len();
            if idx < b {
                return Some(Location::Bias(layer_ref, idx));
            }
            idx -= b;
        }
        None
    }

    pub(crate) fn trunk_mut(&mut self) -> &mut [DenseLayer<F>] {
        &mut self.trunk
    }

    pub(crate) fn heads_mut(&mut self) -> &mut BTreeMap<TaskId, DenseLayer<F>> {
        &mut self.heads
    }

    pub(crate) fn from_parts(
        trunk: Vec<DenseLayer<F>>,
        heads: BTreeMap<TaskId, DenseLayer<F>>,
        rng_seed: u64,
        expansions: u64,
    ) -> Self {
        Self { trunk, heads, rng_seed, expansions }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerRef {
    Trunk(usize),
    Head(TaskId),
}

#[derive(Debug, Clone, Copy)]
enum Location {
    Weight(LayerRef, usize, usize),
    Bias(LayerRef, usize),
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean and per-sample cross-entropy of predicted probabilities against
/// integer labels. Probabilities are clamped at [`PROB_CLAMP`] before the
/// log, so a zero probability yields a large finite loss instead of an
/// error.
pub fn cross_entropy<F: Scalar>(probs: &Array2<F>, labels: &[u32]) -> Result<(F, Array1<F>)> {
    if probs.nrows() != labels.len() {
        return Err(Error::invalid_input("label count does not match probability rows"));
    }
    let classes = probs.ncols();
    let clamp = F::cast(PROB_CLAMP);
    let mut per_sample = Array1::<F>::zeros(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        if (label as usize) >= classes {
            return Err(Error::invalid_input(format!(
                "label {label} outside the head's {classes} classes"
            )));
        }
        per_sample[i] = -probs[[i, label as usize]].max(clamp).ln();
    }
    let mean = if labels.is_empty() {
        F::zero()
    } else {
        per_sample.sum() / F::cast(labels.len() as f64)
    };
    Ok((mean, per_sample))
}

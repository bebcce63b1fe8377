//! Training: SGD with momentum over balanced tagged mini-batches, plus the
//! per-instance loss ledger that feeds data preservation.
//!
//! A tagged batch is a list of sub-batches, each routed to exactly one head
//! (its mission's head). The step loss is the sum over heads of that head's
//! mean cross-entropy on its rows; missions sharing a head are pooled before
//! the mean.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, softmax_rows, DenseLayer, MultiHeadMlp, TaskId};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::Scalar;

/// Optimization hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.005, momentum: 0.9, batch_size: 128, epochs: 300, seed: 0 }
    }
}

impl TrainConfig {
    /// Strict validation used by configuration loaders.
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::invalid_input("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid_input("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid_input("batch_size must be positive"));
        }
        Ok(())
    }
}

/// Per-training-instance cross-entropy accumulated over epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossLedger<F> {
    accumulated: Vec<F>,
    epochs_recorded: usize,
}

impl<F: Scalar> LossLedger<F> {
    pub fn new(instances: usize) -> Self {
        Self { accumulated: vec![F::zero(); instances], epochs_recorded: 0 }
    }

    pub fn len(&self) -> usize {
        self.accumulated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accumulated.is_empty()
    }

    pub fn epochs_recorded(&self) -> usize {
        self.epochs_recorded
    }

    pub fn accumulated(&self) -> &[F] {
        &self.accumulated
    }

    pub fn add(&mut self, slot: usize, loss: F) {
        self.accumulated[slot] += loss;
    }

    pub fn complete_epoch(&mut self) {
        self.epochs_recorded += 1;
    }

    /// Accumulated loss divided by epochs recorded.
    pub fn averages(&self) -> Result<Vec<F>> {
        if self.epochs_recorded == 0 {
            return Err(Error::invalid_input("no epochs recorded in the ledger"));
        }
        let e = F::cast(self.epochs_recorded as f64);
        Ok(self.accumulated.iter().map(|&v| v / e).collect())
    }
}

/// Rows of one mission inside a tagged batch. `ledger_slots`, when present,
/// maps each row back to its training-set index for loss accumulation;
/// replay rows carry `None` and never enter the ledger.
#[derive(Debug, Clone)]
pub struct SubBatch<F> {
    pub mission_id: u32,
    pub task_id: TaskId,
    pub features: Array2<F>,
    pub labels: Vec<u32>,
    pub ledger_slots: Option<Vec<usize>>,
}

/// A balanced mini-batch: every sample tagged with its mission and head.
#[derive(Debug, Clone)]
pub struct TaggedBatch<F> {
    pub parts: Vec<SubBatch<F>>,
}

/// Supplies replay sub-batches while a new mission trains. Implementations
/// own their RNG streams; `begin_epoch` resets per-epoch draw state.
pub trait ReplayProvider<F: Scalar> {
    /// How many past missions this provider replays.
    fn mission_count(&self) -> usize;
    fn begin_epoch(&mut self) -> Result<()>;
    /// One sub-batch of `per_mission` rows for each replayed mission.
    fn draw(&mut self, per_mission: usize) -> Result<Vec<SubBatch<F>>>;
}

/// The first mission has nothing to replay.
pub struct NoReplay;

impl<F: Scalar> ReplayProvider<F> for NoReplay {
    fn mission_count(&self) -> usize {
        0
    }

    fn begin_epoch(&mut self) -> Result<()> {
        Ok(())
    }

    fn draw(&mut self, _per_mission: usize) -> Result<Vec<SubBatch<F>>> {
        Ok(Vec::new())
    }
}

/// SGD velocity buffers, one per parameter tensor. Fresh buffers are created
/// at each mission start: momentum does not carry across missions.
#[derive(Debug, Clone)]
pub struct SgdMomentum<F: Scalar> {
    learning_rate: F,
    momentum: F,
    trunk: Vec<(Array2<F>, Array1<F>)>,
    heads: BTreeMap<TaskId, (Array2<F>, Array1<F>)>,
}

impl<F: Scalar> SgdMomentum<F> {
    pub fn new(model: &MultiHeadMlp<F>, cfg: &TrainConfig) -> Self {
        let zero_like = |l: &DenseLayer<F>| {
            (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.raw_dim()))
        };
        Self {
            learning_rate: F::cast(cfg.learning_rate),
            momentum: F::cast(cfg.momentum),
            trunk: model.trunk_layers().iter().map(zero_like).collect(),
            heads: model.heads().iter().map(|(&t, l)| (t, zero_like(l))).collect(),
        }
    }

    /// v <- mu v - eta g; theta <- theta + v
    fn step(&mut self, model: &mut MultiHeadMlp<F>, grads: &Gradients<F>) {
        let mu = self.momentum;
        let eta = self.learning_rate;
        for ((layer, (vw, vb)), (gw, gb)) in model
            .trunk_mut()
            .iter_mut()
            .zip(self.trunk.iter_mut())
            .zip(grads.trunk.iter())
        {
            update(&mut layer.weights, vw, gw, mu, eta);
            update_bias(&mut layer.bias, vb, gb, mu, eta);
        }
        for (task, layer) in model.heads_mut().iter_mut() {
            let (vw, vb) = self.heads.get_mut(task).expect("velocity buffer per head");
            let (gw, gb) = grads.heads.get(task).expect("gradient per head");
            update(&mut layer.weights, vw, gw, mu, eta);
            update_bias(&mut layer.bias, vb, gb, mu, eta);
        }
    }
}

/// Gradients mirroring the model's parameter tensors.
#[derive(Debug, Clone)]
pub(crate) struct Gradients<F: Scalar> {
    trunk: Vec<(Array2<F>, Array1<F>)>,
    heads: BTreeMap<TaskId, (Array2<F>, Array1<F>)>,
}

impl<F: Scalar> Gradients<F> {
    fn zeros_like(model: &MultiHeadMlp<F>) -> Self {
        let zero_like = |l: &DenseLayer<F>| {
            (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.raw_dim()))
        };
        Self {
            trunk: model.trunk_layers().iter().map(zero_like).collect(),
            heads: model.heads().iter().map(|(&t, l)| (t, zero_like(l))).collect(),
        }
    }

    fn all_finite(&self) -> bool {
        self.trunk
            .iter()
            .chain(self.heads.values())
            .all(|(w, b)| w.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite()))
    }

    /// Flat view in the model's documented parameter order.
    pub(crate) fn flatten(&self) -> Vec<F> {
        let mut out = Vec::new();
        for (w, b) in &self.trunk {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        for (w, b) in self.heads.values() {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

/// Loss and per-part per-sample losses of one tagged batch.
#[derive(Debug, Clone)]
pub struct StepOutput<F> {
    pub total_loss: F,
    pub per_part_losses: Vec<Array1<F>>,
}

fn validate_batch<F: Scalar>(model: &MultiHeadMlp<F>, batch: &TaggedBatch<F>) -> Result<()> {
    for part in &batch.parts {
        if part.features.nrows() != part.labels.len() {
            return Err(Error::invalid_input("sub-batch rows and labels disagree"));
        }
        if let Some(slots) = &part.ledger_slots {
            if slots.len() != part.labels.len() {
                return Err(Error::invalid_input("ledger slots and labels disagree"));
            }
        }
        if part.features.nrows() > 0 && part.features.ncols() != model.input_width() {
            return Err(Error::invalid_input("sub-batch width does not match trunk input"));
        }
        let width = model.head_width(part.task_id)?;
        if part.labels.iter().any(|&l| (l as usize) >= width) {
            return Err(Error::invalid_input(format!(
                "label outside head {}'s {width} classes",
                part.task_id
            )));
        }
    }
    Ok(())
}

/// Forward pass over a tagged batch: summed per-head mean cross-entropy and
/// per-part per-sample losses. Does not touch the model.
pub fn batch_loss<F: Scalar>(
    model: &MultiHeadMlp<F>,
    batch: &TaggedBatch<F>,
) -> Result<StepOutput<F>> {
    let (out, _) = forward_batch(model, batch, false)?;
    Ok(out)
}

/// Forward + backward over a tagged batch; gradients returned in model
/// parameter order, flattened.
pub fn loss_gradients<F: Scalar>(
    model: &MultiHeadMlp<F>,
    batch: &TaggedBatch<F>,
) -> Result<(StepOutput<F>, Vec<F>)> {
    let (out, grads) = forward_batch(model, batch, true)?;
    let grads = grads.expect("gradients requested");
    Ok((out, grads.flatten()))
}

/// Shared forward (and optional backward) pass.
fn forward_batch<F: Scalar>(
    model: &MultiHeadMlp<F>,
    batch: &TaggedBatch<F>,
    with_gradients: bool,
) -> Result<(StepOutput<F>, Option<Gradients<F>>)> {
    validate_batch(model, batch)?;

    let total_rows: usize = batch.parts.iter().map(|p| p.features.nrows()).sum();
    if total_rows == 0 {
        let out = StepOutput {
            total_loss: F::zero(),
            per_part_losses: batch.parts.iter().map(|_| Array1::zeros(0)).collect(),
        };
        let grads = with_gradients.then(|| Gradients::zeros_like(model));
        return Ok((out, grads));
    }

    let d = model.input_width();
    let mut x = Array2::<F>::zeros((total_rows, d));
    let mut part_ranges = Vec::with_capacity(batch.parts.len());
    let mut cursor = 0usize;
    for part in &batch.parts {
        let rows = part.features.nrows();
        if rows > 0 {
            x.slice_mut(ndarray::s![cursor..cursor + rows, ..]).assign(&part.features);
        }
        part_ranges.push(cursor..cursor + rows);
        cursor += rows;
    }

    let acts = model.trunk_forward(x.view());
    let last = acts.last().expect("non-empty trunk activations");

    // Pool parts by head: rows and labels per head, remembering which part
    // and offset each pooled row came from.
    let mut head_rows: BTreeMap<TaskId, Vec<usize>> = BTreeMap::new();
    let mut head_labels: BTreeMap<TaskId, Vec<u32>> = BTreeMap::new();
    let mut head_origin: BTreeMap<TaskId, Vec<(usize, usize)>> = BTreeMap::new();
    for (part_idx, part) in batch.parts.iter().enumerate() {
        let range = part_ranges[part_idx].clone();
        let rows = head_rows.entry(part.task_id).or_default();
        let labels = head_labels.entry(part.task_id).or_default();
        let origin = head_origin.entry(part.task_id).or_default();
        for (offset, row) in range.enumerate() {
            rows.push(row);
            labels.push(part.labels[offset]);
            origin.push((part_idx, offset));
        }
    }

    let mut per_part_losses: Vec<Array1<F>> = batch
        .parts
        .iter()
        .map(|p| Array1::zeros(p.features.nrows()))
        .collect();
    let mut total_loss = F::zero();
    let mut d_last = with_gradients.then(|| Array2::<F>::zeros(last.raw_dim()));
    let mut grads = with_gradients.then(|| Gradients::zeros_like(model));

    for (&task, rows) in &head_rows {
        if rows.is_empty() {
            continue;
        }
        let layer = model.head(task)?;
        let selected = last.select(Axis(0), rows);
        let logits = layer.affine(&selected);
        let probs = softmax_rows(&logits);
        let labels = &head_labels[&task];
        let (mean, per_sample) = cross_entropy(&probs, labels)?;
        total_loss += mean;
        for (i, &(part_idx, offset)) in head_origin[&task].iter().enumerate() {
            per_part_losses[part_idx][offset] = per_sample[i];
        }

        if let (Some(d_last), Some(grads)) = (d_last.as_mut(), grads.as_mut()) {
            // dL/dz = (p - y) / m_head for the summed per-head mean loss.
            let m = F::cast(rows.len() as f64);
            let mut dz = probs;
            for (i, &label) in labels.iter().enumerate() {
                dz[[i, label as usize]] -= F::one();
            }
            dz.mapv_inplace(|v| v / m);
            let (gw, gb) = grads.heads.get_mut(&task).expect("head gradient buffer");
            *gw = dz.t().dot(&selected);
            *gb = dz.sum_axis(Axis(0));
            let d_sel = dz.dot(&layer.weights);
            for (i, &row) in rows.iter().enumerate() {
                for j in 0..d_sel.ncols() {
                    d_last[[row, j]] += d_sel[[i, j]];
                }
            }
        }
    }

    if !total_loss.is_finite() {
        return Err(Error::numerical("non-finite training loss"));
    }

    if let (Some(mut d_act), Some(grads)) = (d_last, grads.as_mut()) {
        // Backward through the trunk; acts[l + 1] is the post-ReLU output of
        // trunk layer l, acts[l] its input.
        for l in (0..model.trunk_layers().len()).rev() {
            let layer = &model.trunk_layers()[l];
            let post = &acts[l + 1];
            let mut dz = d_act;
            for (dv, &a) in dz.iter_mut().zip(post.iter()) {
                if a <= F::zero() {
                    *dv = F::zero();
                }
            }
            let (gw, gb) = &mut grads.trunk[l];
            *gw = dz.t().dot(&acts[l]);
            *gb = dz.sum_axis(Axis(0));
            d_act = dz.dot(&layer.weights);
        }
        if !grads.all_finite() {
            return Err(Error::numerical("NaN gradient; aborting the run"));
        }
    }

    Ok((StepOutput { total_loss, per_part_losses }, grads))
}

/// One optimization step over a tagged batch.
pub fn train_step<F: Scalar>(
    model: &mut MultiHeadMlp<F>,
    batch: &TaggedBatch<F>,
    opt: &mut SgdMomentum<F>,
) -> Result<StepOutput<F>> {
    let (out, grads) = forward_batch(model, batch, true)?;
    let grads = grads.expect("gradients requested");
    let total_rows: usize = batch.parts.iter().map(|p| p.features.nrows()).sum();
    if total_rows > 0 {
        opt.step(model, &grads);
    }
    Ok(out)
}

fn update<F: Scalar>(theta: &mut Array2<F>, v: &mut Array2<F>, g: &Array2<F>, mu: F, eta: F) {
    for ((t, v), &g) in theta.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
        *v = mu * *v - eta * g;
        *t += *v;
    }
}

fn update_bias<F: Scalar>(theta: &mut Array1<F>, v: &mut Array1<F>, g: &Array1<F>, mu: F, eta: F) {
    for ((t, v), &g) in theta.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
        *v = mu * *v - eta * g;
        *t += *v;
    }
}

/// The current mission's training matrix with head-local labels.
#[derive(Debug, Clone, Copy)]
pub struct CurrentMission<'a, F> {
    pub mission_id: u32,
    pub task_id: TaskId,
    pub features: &'a Array2<F>,
    pub labels: &'a [u32],
}

/// Trains one mission for `cfg.epochs` epochs.
///
/// Every epoch shuffles the current mission's data and walks it without
/// replacement; each batch is padded with `floor(B/n)` replay rows per past
/// mission (the remainder goes to the current mission). The forward-pass
/// cross-entropy of every current-mission instance is added to its ledger
/// slot once per epoch; replay rows never enter the ledger.
pub fn train_mission<F: Scalar>(
    model: &mut MultiHeadMlp<F>,
    current: &CurrentMission<'_, F>,
    replay: &mut dyn ReplayProvider<F>,
    cfg: &TrainConfig,
) -> Result<LossLedger<F>> {
    let n_missions = 1 + replay.mission_count();
    if cfg.batch_size < n_missions {
        return Err(Error::invalid_input(format!(
            "batch size {} is smaller than the {n_missions} missions in play",
            cfg.batch_size
        )));
    }
    let n = current.features.nrows();
    if n == 0 {
        return Err(Error::invalid_input("current mission has no training data"));
    }
    if current.labels.len() != n {
        return Err(Error::invalid_input("label count does not match training rows"));
    }
    let head_width = model.head_width(current.task_id)?;
    if current.labels.iter().any(|&l| (l as usize) >= head_width) {
        return Err(Error::invalid_input("training label outside the mission head's classes"));
    }

    let quota = cfg.batch_size / n_missions;
    let current_per_batch = cfg.batch_size - (n_missions - 1) * quota;

    let mut ledger = LossLedger::new(n);
    let mut opt = SgdMomentum::new(model, cfg);
    let mut rng = stream(cfg.seed, 0x7331_0000 + current.mission_id as u64);
    let mut indices: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        replay.begin_epoch()?;
        for chunk in indices.chunks(current_per_batch) {
            let features = current.features.select(Axis(0), chunk);
            let labels = chunk.iter().map(|&i| current.labels[i]).collect();
            let mut parts = vec![SubBatch {
                mission_id: current.mission_id,
                task_id: current.task_id,
                features,
                labels,
                ledger_slots: Some(chunk.to_vec()),
            }];
            parts.extend(replay.draw(quota)?);
            let out = train_step(model, &TaggedBatch { parts }, &mut opt)?;
            for (pos, &slot) in chunk.iter().enumerate() {
                ledger.add(slot, out.per_part_losses[0][pos]);
            }
        }
        ledger.complete_epoch();
        log::trace!(
            "mission {} epoch {epoch}: ledger mean {:.6}",
            current.mission_id,
            ledger.accumulated().iter().map(|&v| v.as_f64()).sum::<f64>()
                / (n as f64 * (epoch + 1) as f64)
        );
    }
    Ok(ledger)
}

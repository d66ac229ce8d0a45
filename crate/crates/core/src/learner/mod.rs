//! Recurrent beam classifier: LSTM, a ReLU dense stack, dropout, a second
//! LSTM and a softmax output, trained with Adam on a base-2 cross-entropy.

pub mod adam;
pub mod layers;
pub mod persist;

use std::ops::Range;

use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SupervisedFrame;
use crate::radio::GlobalBeamId;
use crate::seeding;

pub use adam::{adam_step, Adam, AdamParams};
pub use layers::{glorot_init, glorot_limit, Activation, Dense, Dropout, Lstm, LstmState, Seq};

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub depth: usize,
    pub width: usize,
    pub dropout_rate: f64,
    /// Fine-tuning budget as a fraction of `epochs`.
    pub transfer_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 192,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            depth: 8,
            width: 16,
            dropout_rate: 0.2,
            transfer_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0 && self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return Err(Error::Config("Adam betas must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.adam_epsilon > 0.0) {
            return Err(Error::Config("learning rate and epsilon must be positive".into()));
        }
        if self.depth < 2 || self.width == 0 {
            return Err(Error::Config("depth must be at least 2 and width positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.transfer_fraction) {
            return Err(Error::Config("transfer_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn transfer_budget(&self) -> usize {
        (self.transfer_fraction * self.epochs as f64).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Lstm,
    Dense,
    Dropout,
    SoftmaxOutput,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub width: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Lstm(Lstm),
    Dense(Dense),
    Dropout(Dropout),
}

#[allow(clippy::large_enum_variant)]
enum Cache {
    Lstm(layers::LstmCache),
    Dense(layers::DenseCache),
    Dropout(Option<Array2<f64>>),
}

impl Layer {
    fn params(&self) -> Vec<&Array2<f64>> {
        match self {
            Layer::Lstm(l) => vec![&l.w_x, &l.w_h, &l.b],
            Layer::Dense(d) => vec![&d.w, &d.b],
            Layer::Dropout(_) => vec![],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        match self {
            Layer::Lstm(l) => vec![&mut l.w_x, &mut l.w_h, &mut l.b],
            Layer::Dense(d) => vec![&mut d.w, &mut d.b],
            Layer::Dropout(_) => vec![],
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Lstm(l) => LayerSpec { kind: LayerKind::Lstm, width: l.hidden, activation: Activation::Tanh, dropout_rate: 0.0 },
            Layer::Dense(d) if d.activation == Activation::Softmax => LayerSpec {
                kind: LayerKind::SoftmaxOutput,
                width: d.output,
                activation: Activation::Softmax,
                dropout_rate: 0.0,
            },
            Layer::Dense(d) => LayerSpec { kind: LayerKind::Dense, width: d.output, activation: d.activation, dropout_rate: 0.0 },
            Layer::Dropout(d) => LayerSpec { kind: LayerKind::Dropout, width: 0, activation: Activation::Linear, dropout_rate: d.rate },
        }
    }
}

/// Sequential network over time-major sequence batches.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub input_width: usize,
    pub layers: Vec<Layer>,
}

/// Gradients laid out like [`ModelGraph::params`].
pub type Grads = Vec<Array2<f64>>;

impl ModelGraph {
    /// LSTM → (depth − 2) ReLU dense → dropout → LSTM → softmax.
    pub fn fig3(input_width: usize, num_classes: usize, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if input_width == 0 || num_classes == 0 {
            return Err(Error::Shape("model needs inputs and classes".into()));
        }
        let mut rng = seeding::stream(&[cfg.seed, 0x1817]);
        let w = cfg.width;
        let mut layers = vec![Layer::Lstm(Lstm::new(input_width, w, true, &mut rng)?)];
        for _ in 0..cfg.depth - 2 {
            layers.push(Layer::Dense(Dense::new(w, w, Activation::Relu, &mut rng)?));
        }
        layers.push(Layer::Dropout(Dropout::new(cfg.dropout_rate)?));
        layers.push(Layer::Lstm(Lstm::new(w, w, false, &mut rng)?));
        layers.push(Layer::Dense(Dense::new(w, num_classes, Activation::Softmax, &mut rng)?));
        Ok(Self { input_width, layers })
    }

    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense(d)) => d.output,
            _ => 0,
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.params().iter().map(|p| p.dim()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.as_slice_mut().expect("contiguous").copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Grads {
        self.param_shapes().into_iter().map(Array2::zeros).collect()
    }

    /// Same layer kinds and sizes.
    pub fn same_architecture(&self, other: &ModelGraph) -> bool {
        self.input_width == other.input_width && self.param_shapes() == other.param_shapes() && self.specs() == other.specs()
    }

    fn forward_cached(&self, x: &Seq, training: bool, rng: &mut ChaCha8Rng) -> Result<(Array2<f64>, Vec<Cache>)> {
        if x.width() != self.input_width {
            return Err(Error::Shape(format!("model expects width {}, got {}", self.input_width, x.width())));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (next, cache) = match layer {
                Layer::Lstm(l) => {
                    let (o, c) = l.forward(&cur)?;
                    (o, Cache::Lstm(c))
                }
                Layer::Dense(d) => {
                    let (o, c) = d.forward(&cur)?;
                    (o, Cache::Dense(c))
                }
                Layer::Dropout(d) => {
                    let (o, m) = d.forward(&cur, training, rng);
                    (o, Cache::Dropout(m))
                }
            };
            caches.push(cache);
            cur = next;
        }
        if cur.steps != 1 {
            return Err(Error::Shape("network must end in a single step".into()));
        }
        Ok((cur.data, caches))
    }

    /// Class probabilities for a time-major batch.
    pub fn forward_seq(&self, x: &Seq, training: bool, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x, training, rng)?.0)
    }

    /// Class probabilities for windows shaped `(batch, steps, features)`.
    pub fn forward(&self, windows: &Array3<f64>, training: bool, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
        self.forward_seq(&to_time_major(windows), training, rng)
    }

    /// Summed loss in bits and its gradient for one batch.
    pub fn loss_and_grads(
        &self,
        x: &Seq,
        labels: &[usize],
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Array2<f64>, Grads)> {
        let (probs, caches) = self.forward_cached(x, training, rng)?;
        let loss = cross_entropy_bits(labels, &probs)?;
        let mut g = probs.clone();
        for (mut row, &y) in g.rows_mut().into_iter().zip(labels) {
            row[y] -= 1.0;
        }
        g /= std::f64::consts::LN_2;
        let mut grads = self.zero_grads();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.params().len();
        }
        let mut grad = Seq { steps: 1, batch: x.batch, data: g };
        for ((layer, cache), &o) in self.layers.iter().zip(&caches).rev().zip(offsets.iter().rev()) {
            grad = match (layer, cache) {
                (Layer::Lstm(l), Cache::Lstm(c)) => l.backward(c, &grad, &mut grads[o..o + 3]),
                (Layer::Dense(d), Cache::Dense(c)) => d.backward(c, &grad, &mut grads[o..o + 2]),
                (Layer::Dropout(d), Cache::Dropout(m)) => d.backward(m.as_ref(), &grad),
                _ => unreachable!("cache follows layer kind"),
            };
        }
        Ok((loss, probs, grads))
    }
}

pub fn to_time_major(windows: &Array3<f64>) -> Seq {
    let (b, t, f) = windows.dim();
    let data = windows
        .view()
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((t * b, f))
        .expect("contiguous reshape");
    Seq { steps: t, batch: b, data }
}

/// `Σ −log2(max(p_true, 1e−12))`.
pub fn cross_entropy_bits(labels: &[usize], probs: &Array2<f64>) -> Result<f64> {
    if labels.len() != probs.nrows() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), probs.nrows())));
    }
    let mut total = 0.0;
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        if y >= row.len() {
            return Err(Error::InvalidInput(format!("label {y} outside {} classes", row.len())));
        }
        total -= row[y].max(PROB_FLOOR).log2();
    }
    Ok(total)
}

/// Argmax over the first `known` classes; ties go to the lower index.
pub fn argmax_known(probs: &[f64], known: usize) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, &p) in probs.iter().take(known.max(1)).enumerate() {
        if p > best.1 {
            best = (c, p);
        }
    }
    best
}

/// Maps a probability vector over `vocab` (plus a trailing unknown class)
/// to the most likely beam.
pub fn argmax_beam(probs: &[f64], vocab: &[GlobalBeamId]) -> Result<(GlobalBeamId, f64)> {
    if vocab.is_empty() || probs.len() < vocab.len() {
        return Err(Error::Shape(format!("{} probabilities for {} beams", probs.len(), vocab.len())));
    }
    let (c, p) = argmax_known(probs, vocab.len());
    Ok((vocab[c], p))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_acc: Vec<f64>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.train_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_loss.is_empty()
    }

    pub fn final_val_acc(&self) -> Option<f64> {
        self.val_acc.last().copied()
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.val_loss.last().copied()
    }

    fn push(&mut self, train: Eval, val: Eval) {
        self.train_loss.push(train.mean_loss);
        self.train_acc.push(train.accuracy);
        self.val_loss.push(val.mean_loss);
        self.val_acc.push(val.accuracy);
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])?;
        for e in 0..self.len() {
            out.write_record([
                (e + 1).to_string(),
                self.train_loss[e].to_string(),
                self.train_acc[e].to_string(),
                self.val_loss[e].to_string(),
                self.val_acc[e].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Mean loss in bits and accuracy over a sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eval {
    pub mean_loss: f64,
    pub accuracy: f64,
    pub samples: usize,
}

impl Eval {
    const EMPTY: Eval = Eval { mean_loss: f64::NAN, accuracy: f64::NAN, samples: 0 };
}

/// Predictions are restricted to known classes, so a label in the
/// unknown class always counts as a miss.
fn count_correct(probs: &Array2<f64>, labels: &[usize], known: usize) -> usize {
    probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| y < known && argmax_known(row.as_slice().expect("contiguous"), known).0 == y)
        .count()
}

/// Pre-cut contiguous batches of one frame range.
struct Batches {
    items: Vec<(Seq, Vec<usize>)>,
}

impl Batches {
    fn new(frame: &SupervisedFrame, range: Range<usize>, size: usize) -> Self {
        let mut items = Vec::new();
        let mut start = range.start;
        while start < range.end {
            let end = (start + size).min(range.end);
            items.push((to_time_major(&frame.sequences(start..end)), frame.classes[start..end].to_vec()));
            start = end;
        }
        Self { items }
    }
}

fn known_classes(model: &ModelGraph) -> usize {
    model.num_classes().saturating_sub(1).max(1)
}

/// Inference-mode evaluation; also returns the predicted classes.
pub fn evaluate(model: &ModelGraph, frame: &SupervisedFrame, range: Range<usize>) -> Result<(Eval, Vec<usize>)> {
    if range.is_empty() {
        return Ok((Eval::EMPTY, Vec::new()));
    }
    let known = known_classes(model);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut loss, mut correct, mut preds) = (0.0, 0, Vec::with_capacity(range.len()));
    for (x, y) in &Batches::new(frame, range.clone(), 512).items {
        let probs = model.forward_seq(x, false, &mut rng)?;
        loss += cross_entropy_bits(y, &probs)?;
        correct += count_correct(&probs, y, known);
        preds.extend(probs.rows().into_iter().map(|r| argmax_known(r.as_slice().expect("contiguous"), known).0));
    }
    let n = range.len();
    Ok((Eval { mean_loss: loss / n as f64, accuracy: correct as f64 / n as f64, samples: n }, preds))
}

fn check_compatible(model: &ModelGraph, frame: &SupervisedFrame) -> Result<()> {
    if model.input_width != frame.step_width() || model.num_classes() != frame.num_classes {
        return Err(Error::Shape(format!(
            "model {}→{} does not fit frame {}→{}",
            model.input_width,
            model.num_classes(),
            frame.step_width(),
            frame.num_classes
        )));
    }
    Ok(())
}

/// Trains on `train` rows in time order for `epochs`, evaluating on `val`
/// after every epoch.
pub fn train_range(
    model: &mut ModelGraph,
    frame: &SupervisedFrame,
    train: Range<usize>,
    val: Range<usize>,
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<TrainHistory> {
    cfg.validate()?;
    check_compatible(model, frame)?;
    if train.is_empty() {
        return Err(Error::Training("empty training split".into()));
    }
    let batches = Batches::new(frame, train.clone(), cfg.batch_size);
    let known = known_classes(model);
    let mut adam = Adam::new(cfg.adam(), &model.param_shapes());
    let mut rng = seeding::stream(&[cfg.seed, 0xD50]);
    let mut history = TrainHistory::default();
    for _ in 0..epochs {
        let (mut loss, mut correct) = (0.0, 0);
        for (x, y) in &batches.items {
            let (l, probs, grads) = model.loss_and_grads(x, y, true, &mut rng)?;
            if !l.is_finite() {
                return Err(Error::Training("loss diverged".into()));
            }
            loss += l;
            correct += count_correct(&probs, y, known);
            adam.step(&mut model.params_mut(), &grads);
        }
        let n = train.len() as f64;
        let tr = Eval { mean_loss: loss / n, accuracy: correct as f64 / n, samples: train.len() };
        let (va, _) = evaluate(model, frame, val.clone())?;
        history.push(tr, va);
    }
    Ok(history)
}

/// Full training on `[0, t*)` with validation on `[t*, end)`.
pub fn train(model: &mut ModelGraph, frame: &SupervisedFrame, cfg: &TrainConfig) -> Result<TrainHistory> {
    train_range(model, frame, 0..frame.t_star, frame.t_star..frame.len(), cfg, cfg.epochs)
}

/// Warm-start fine-tuning with fresh Adam moments.
pub fn transfer(
    model: &ModelGraph,
    frame: &SupervisedFrame,
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<(ModelGraph, TrainHistory)> {
    if model.input_width != frame.step_width() || model.num_classes() != frame.num_classes {
        return Err(Error::Transfer(format!(
            "pre-trained model {}→{} cannot take frame {}→{}",
            model.input_width,
            model.num_classes(),
            frame.step_width(),
            frame.num_classes
        )));
    }
    if epochs > cfg.transfer_budget() {
        return Err(Error::Transfer(format!("{epochs} epochs exceed the fine-tuning budget {}", cfg.transfer_budget())));
    }
    let mut tuned = model.clone();
    if epochs == 0 {
        return Ok((tuned, TrainHistory::default()));
    }
    let history = train_range(&mut tuned, frame, 0..frame.t_star, frame.t_star..frame.len(), cfg, epochs)?;
    Ok((tuned, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: TrainConfig,
    /// `(depth, width, final validation loss)` in grid order.
    pub evaluated: Vec<(usize, usize, f64)>,
}

/// Exhaustive search over `(depth, width)`; lowest final validation loss
/// wins and ties keep the earlier grid point.
pub fn grid_search(points: &[(usize, usize)], frame: &SupervisedFrame, cfg: &TrainConfig) -> Result<GridSearchResult> {
    if points.is_empty() {
        return Err(Error::Config("hyper-parameter grid is empty".into()));
    }
    let mut evaluated = Vec::with_capacity(points.len());
    let mut best: Option<(f64, TrainConfig)> = None;
    for &(depth, width) in points {
        let c = TrainConfig { depth, width, ..cfg.clone() };
        let mut model = ModelGraph::fig3(frame.step_width(), frame.num_classes, &c)?;
        let h = train(&mut model, frame, &c)?;
        let loss = h.final_val_loss().unwrap_or(f64::NAN);
        evaluated.push((depth, width, loss));
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, c));
        }
    }
    Ok(GridSearchResult { best: best.expect("non-empty grid").1, evaluated })
}

/// Probabilities for one `(steps, features)` window.
pub fn predict_proba(model: &ModelGraph, window: &Array2<f64>) -> Result<Vec<f64>> {
    let w = window.view().insert_axis(Axis(0)).to_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(model.forward(&w, false, &mut rng)?.row(0).to_vec())
}

//! Measurement rows to scaled, windowed supervised data.
//!
//! Engineered layout for lag `k` and lead `l` over `n` base columns:
//! `[B_{-k} | ... | B_0 | ... | B_{+l} | Δ_{-k} | ... | Δ_0 | ... | Δ_{+l}]`,
//! every block `n` wide. Past blocks are differenced toward the current
//! step (`Δ_o = B_{o+1} - B_o`), future blocks away from it
//! (`Δ_o = B_o - B_{o-1}`), and `Δ_0` is zero.
//!
//! For the sequence model a row is viewed as `k + l + 1` time steps of
//! width `2n`, step `o` holding `[B_o, Δ_o]`.

use std::collections::BTreeSet;

use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Direction;
use crate::radio::{GlobalBeamId, MeasurementRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    WithCoords,
    NoCoords,
    /// Neither the UE identifier nor its coordinates.
    Centralized,
}

impl FeatureSet {
    pub fn uses_crnti(self) -> bool {
        self != FeatureSet::Centralized
    }

    pub fn uses_coords(self) -> bool {
        self == FeatureSet::WithCoords
    }
}

/// Time-ordered rows of one learning scope.
///
/// Without explicit targets the label at horizon `L` is the current beam
/// `L` rows later. With targets, `targets[t]` is the next-frame optimal
/// beam of the UE that reported row `t`; this is how streams that mix
/// UEs or skip frames get correct labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    rows: Vec<MeasurementRow>,
    targets: Option<Vec<GlobalBeamId>>,
}

impl RawFrame {
    pub fn new(rows: Vec<MeasurementRow>) -> Result<Self> {
        check_order(&rows)?;
        Ok(Self { rows, targets: None })
    }

    pub fn with_targets(rows: Vec<MeasurementRow>, targets: Vec<GlobalBeamId>) -> Result<Self> {
        check_order(&rows)?;
        if targets.len() != rows.len() {
            return Err(Error::Shape(format!("{} targets for {} rows", targets.len(), rows.len())));
        }
        Ok(Self { rows, targets: Some(targets) })
    }

    pub fn rows(&self) -> &[MeasurementRow] {
        &self.rows
    }

    pub fn targets(&self) -> Option<&[GlobalBeamId]> {
        self.targets.as_deref()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn check_order(rows: &[MeasurementRow]) -> Result<()> {
    for w in rows.windows(2) {
        if (w[0].frame, w[0].crnti) >= (w[1].frame, w[1].crnti) {
            return Err(Error::InvalidInput(format!(
                "rows not strictly ordered at frame {} crnti {}",
                w[1].frame, w[1].crnti
            )));
        }
    }
    Ok(())
}

/// Block shift: row `r` is `[D_r | D_{r+1} | ... | D_{r+k+l}]`.
pub fn shift_lag(data: &Array2<f64>, k: usize, l: usize) -> Result<Array2<f64>> {
    let (m, n) = data.dim();
    if k + l >= m {
        return Err(Error::InsufficientData(format!("{m} rows cannot absorb lag {k} + lead {l}")));
    }
    let rows = m - k - l;
    let blocks = k + l + 1;
    let mut out = Array2::zeros((rows, n * blocks));
    for b in 0..blocks {
        out.slice_mut(s![.., b * n..(b + 1) * n]).assign(&data.slice(s![b..b + rows, ..]));
    }
    Ok(out)
}

/// Difference blocks for a matrix produced by [`shift_lag`].
pub fn difference(shifted: &Array2<f64>, n: usize, k: usize, l: usize) -> Result<Array2<f64>> {
    let blocks = k + l + 1;
    if shifted.ncols() != n * blocks {
        return Err(Error::Shape(format!("{} columns, expected {}", shifted.ncols(), n * blocks)));
    }
    let mut out = Array2::zeros(shifted.dim());
    let block = |b: usize| shifted.slice(s![.., b * n..(b + 1) * n]);
    for b in 0..blocks {
        let d = match b.cmp(&k) {
            std::cmp::Ordering::Less => &block(b + 1) - &block(b),
            std::cmp::Ordering::Equal => continue,
            std::cmp::Ordering::Greater => &block(b) - &block(b - 1),
        };
        out.slice_mut(s![.., b * n..(b + 1) * n]).assign(&d);
    }
    Ok(out)
}

/// First differences of a series; the undefined head is dropped.
pub fn first_difference(series: &[f64]) -> Vec<f64> {
    series.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Per-column min-max scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(train: &Array2<f64>) -> Result<Self> {
        if train.nrows() == 0 {
            return Err(Error::InsufficientData("cannot fit a scaler on zero rows".into()));
        }
        let mut min = vec![f64::INFINITY; train.ncols()];
        let mut max = vec![f64::NEG_INFINITY; train.ncols()];
        for row in train.rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    /// Constant training columns map to 0; nothing is clamped.
    pub fn apply(&self, data: &Array2<f64>) -> Result<Array2<f64>> {
        if data.ncols() != self.min.len() {
            return Err(Error::Shape(format!("{} columns, scaler has {}", data.ncols(), self.min.len())));
        }
        let mut out = data.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let span = self.max[j] - self.min[j];
            if span > 0.0 {
                col.mapv_inplace(|v| (v - self.min[j]) / span);
            } else {
                col.fill(0.0);
            }
        }
        Ok(out)
    }
}

/// Pivot index `⌊⌊r·m′⌋/N⌋·N`.
pub fn split(m_prime: usize, r_training: f64, slots_per_frame: usize) -> Result<usize> {
    if !(r_training > 0.0 && r_training <= 1.0) {
        return Err(Error::Config(format!("training fraction {r_training} outside (0, 1]")));
    }
    if slots_per_frame == 0 {
        return Err(Error::Config("slots per frame must be positive".into()));
    }
    let t = ((r_training * m_prime as f64).floor() as usize / slots_per_frame) * slots_per_frame;
    if t == 0 {
        return Err(Error::InsufficientData(format!("split of {m_prime} rows leaves no training data")));
    }
    Ok(t)
}

/// Categorical encoding fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub feature_set: FeatureSet,
    /// Sorted beams seen in training; index = class.
    pub vocab: Vec<GlobalBeamId>,
}

impl Encoding {
    pub fn fit<'a>(feature_set: FeatureSet, beams: impl IntoIterator<Item = &'a GlobalBeamId>) -> Self {
        let vocab: BTreeSet<GlobalBeamId> = beams.into_iter().copied().collect();
        Self { feature_set, vocab: vocab.into_iter().collect() }
    }

    /// Known classes plus the trailing unknown class.
    pub fn num_classes(&self) -> usize {
        self.vocab.len() + 1
    }

    pub fn unknown_class(&self) -> usize {
        self.vocab.len()
    }

    pub fn class_of(&self, beam: GlobalBeamId) -> usize {
        self.vocab.binary_search(&beam).unwrap_or(self.vocab.len())
    }

    pub fn beam_of(&self, class: usize) -> Option<GlobalBeamId> {
        self.vocab.get(class).copied()
    }

    pub fn base_columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for field in ["current_beam", "previous_beam"] {
            cols.extend(self.vocab.iter().map(|b| format!("{field}={b}")));
            cols.push(format!("{field}=other"));
        }
        cols.extend(["N", "E", "S", "W"].iter().map(|d| format!("ue_direction={d}")));
        cols.extend(["beam_rsrp_dbm", "beam_sinr_db", "ue_speed_mps"].map(String::from));
        if self.feature_set.uses_crnti() {
            cols.push("crnti".into());
        }
        if self.feature_set.uses_coords() {
            cols.extend(["ue_x_m", "ue_y_m"].map(String::from));
        }
        cols.push("rlf".into());
        cols
    }

    pub fn num_base(&self) -> usize {
        2 * (self.vocab.len() + 1) + 4 + 3 + self.feature_set.uses_crnti() as usize + 2 * self.feature_set.uses_coords() as usize + 1
    }

    pub fn encode_row(&self, row: &MeasurementRow, out: &mut [f64]) {
        out.fill(0.0);
        let v = self.vocab.len() + 1;
        out[self.class_of(row.current_beam)] = 1.0;
        out[v + self.class_of(row.previous_beam)] = 1.0;
        let mut j = 2 * v;
        out[j + row.ue_direction.code() as usize] = 1.0;
        j += 4;
        for x in [row.beam_rsrp_dbm, row.beam_sinr_db, row.ue_speed_mps] {
            out[j] = x;
            j += 1;
        }
        if self.feature_set.uses_crnti() {
            out[j] = row.crnti as f64;
            j += 1;
        }
        if self.feature_set.uses_coords() {
            out[j] = row.ue_x_m;
            out[j + 1] = row.ue_y_m;
            j += 2;
        }
        out[j] = if row.rlf { 1.0 } else { 0.0 };
    }

    pub fn encode(&self, rows: &[MeasurementRow]) -> Array2<f64> {
        let mut out = Array2::zeros((rows.len(), self.num_base()));
        for (row, mut dst) in rows.iter().zip(out.rows_mut()) {
            self.encode_row(row, dst.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineSpec {
    pub lookback: usize,
    pub lead: usize,
    pub lookahead: usize,
    pub feature_set: FeatureSet,
}

impl PipelineSpec {
    pub fn causal(lookback: usize, feature_set: FeatureSet) -> Self {
        Self { lookback, lead: 0, lookahead: 1, feature_set }
    }

    pub fn steps(&self) -> usize {
        self.lookback + self.lead + 1
    }

    fn validate(&self, frame: &RawFrame) -> Result<()> {
        if self.lookahead == 0 {
            return Err(Error::Config("lookahead must be at least 1".into()));
        }
        if frame.targets.is_some() && self.lookahead != 1 {
            return Err(Error::Config("explicit targets are next-frame labels; lookahead must be 1".into()));
        }
        Ok(())
    }

    /// Rows dropped after the current step: leads, and the label horizon
    /// when labels come from the rows themselves.
    fn tail(&self, frame: &RawFrame) -> usize {
        if frame.targets.is_some() {
            self.lead
        } else {
            self.lead.max(self.lookahead)
        }
    }

    pub fn engineered_rows(&self, frame: &RawFrame) -> Result<usize> {
        self.validate(frame)?;
        let drop = self.lookback + self.tail(frame);
        if drop >= frame.len() {
            return Err(Error::InsufficientData(format!(
                "{} rows cannot absorb lookback {} and horizon {}",
                frame.len(),
                self.lookback,
                self.tail(frame)
            )));
        }
        Ok(frame.len() - drop)
    }
}

/// Encoding and scaler frozen on one scope's training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    pub spec: PipelineSpec,
    pub encoding: Encoding,
    pub scaler: Scaler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedFrame {
    /// Scaled engineered rows, base blocks then difference blocks.
    pub x: Array2<f64>,
    pub y: Vec<GlobalBeamId>,
    pub classes: Vec<usize>,
    /// Frame of the current (last causal) row of every window.
    pub end_frames: Vec<u32>,
    pub t_star: usize,
    pub lookback: usize,
    pub lead: usize,
    pub lookahead: usize,
    pub num_classes: usize,
    pub unknown_class: usize,
    pub column_catalog: Vec<String>,
}

impl SupervisedFrame {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.lookback + self.lead + 1
    }

    pub fn step_width(&self) -> usize {
        self.x.ncols() / self.steps()
    }

    /// Windows `range` as `(batch, steps, 2n)`.
    pub fn sequences(&self, range: std::ops::Range<usize>) -> Array3<f64> {
        let (t, w) = (self.steps(), self.step_width() / 2);
        let mut out = Array3::zeros((range.len(), t, 2 * w));
        for (i, r) in range.enumerate() {
            for step in 0..t {
                out.slice_mut(s![i, step, ..w]).assign(&self.x.slice(s![r, step * w..(step + 1) * w]));
                let d0 = t * w + step * w;
                out.slice_mut(s![i, step, w..]).assign(&self.x.slice(s![r, d0..d0 + w]));
            }
        }
        out
    }
}

fn engineer(base: &Array2<f64>, n: usize, k: usize, l: usize) -> Result<Array2<f64>> {
    let shifted = shift_lag(base, k, l)?;
    let diffs = difference(&shifted, n, k, l)?;
    Ok(ndarray::concatenate(ndarray::Axis(1), &[shifted.view(), diffs.view()]).expect("equal row counts"))
}

fn labels(frame: &RawFrame, spec: &PipelineSpec, m_prime: usize) -> Vec<GlobalBeamId> {
    let k = spec.lookback;
    match &frame.targets {
        Some(t) => t[k..k + m_prime].to_vec(),
        None => (0..m_prime).map(|r| frame.rows[r + k + spec.lookahead].current_beam).collect(),
    }
}

impl FittedPipeline {
    /// Fits encoding and scaler using only what the first `t_star`
    /// engineered rows can see: their inputs and their labels.
    pub fn fit(frame: &RawFrame, spec: PipelineSpec, t_star: usize) -> Result<Self> {
        let m_prime = spec.engineered_rows(frame)?;
        if t_star == 0 || t_star > m_prime {
            return Err(Error::InsufficientData(format!("training size {t_star} outside 1..={m_prime}")));
        }
        let k = spec.lookback;
        let visible = &frame.rows[..t_star + k + spec.lead];
        let train_labels = labels(frame, &spec, t_star);
        let beams = visible
            .iter()
            .flat_map(|r| [&r.current_beam, &r.previous_beam])
            .chain(train_labels.iter());
        let encoding = Encoding::fit(spec.feature_set, beams);
        let base = encoding.encode(visible);
        let eng = engineer(&base, encoding.num_base(), k, spec.lead)?;
        let scaler = Scaler::fit(&eng)?;
        Ok(Self { spec, encoding, scaler })
    }

    pub fn column_catalog(&self) -> Vec<String> {
        let base = self.encoding.base_columns();
        let (k, l) = (self.spec.lookback as isize, self.spec.lead as isize);
        let tag = |o: isize| match o {
            0 => "t".to_string(),
            o if o < 0 => format!("t{o}"),
            o => format!("t+{o}"),
        };
        let mut cols = Vec::new();
        for prefix in ["", "d:"] {
            for o in -k..=l {
                cols.extend(base.iter().map(|c| format!("{prefix}{c}@{}", tag(o))));
            }
        }
        cols
    }

    pub fn transform(&self, frame: &RawFrame, t_star: usize) -> Result<SupervisedFrame> {
        self.spec.validate(frame)?;
        let m_prime = self.spec.engineered_rows(frame)?;
        let base = self.encoding.encode(&frame.rows);
        let eng = engineer(&base, self.encoding.num_base(), self.spec.lookback, self.spec.lead)?;
        let x = self.scaler.apply(&eng.slice(s![..m_prime, ..]).to_owned())?;
        let y = labels(frame, &self.spec, m_prime);
        let classes = y.iter().map(|&b| self.encoding.class_of(b)).collect();
        let end_frames = frame.rows[self.spec.lookback..self.spec.lookback + m_prime]
            .iter()
            .map(|r| r.frame)
            .collect();
        Ok(SupervisedFrame {
            x,
            y,
            classes,
            end_frames,
            t_star,
            lookback: self.spec.lookback,
            lead: self.spec.lead,
            lookahead: self.spec.lookahead,
            num_classes: self.encoding.num_classes(),
            unknown_class: self.encoding.unknown_class(),
            column_catalog: self.column_catalog(),
        })
    }

    /// Scaled `(steps, 2n)` input for the latest `k + 1` rows of a scope.
    pub fn window(&self, rows: &[MeasurementRow]) -> Result<Array2<f64>> {
        let t = self.spec.lookback + 1;
        if self.spec.lead != 0 {
            return Err(Error::Config("lead shifts need future rows and cannot drive inference".into()));
        }
        if rows.len() < t {
            return Err(Error::InsufficientHistory(format!("window needs {t} rows, have {}", rows.len())));
        }
        let base = self.encoding.encode(&rows[rows.len() - t..]);
        let eng = engineer(&base, self.encoding.num_base(), self.spec.lookback, 0)?;
        let x = self.scaler.apply(&eng)?;
        let n = self.encoding.num_base();
        let mut out = Array2::zeros((t, 2 * n));
        for step in 0..t {
            out.slice_mut(s![step, ..n]).assign(&x.slice(s![0, step * n..(step + 1) * n]));
            out.slice_mut(s![step, n..]).assign(&x.slice(s![0, (t + step) * n..(t + step + 1) * n]));
        }
        Ok(out)
    }
}

/// Full offline pipeline with the pivot from [`split`].
pub fn make_supervised(
    frame: &RawFrame,
    spec: PipelineSpec,
    r_training: f64,
    slots_per_frame: usize,
) -> Result<(FittedPipeline, SupervisedFrame)> {
    let m_prime = spec.engineered_rows(frame)?;
    let t_star = split(m_prime, r_training, slots_per_frame)?;
    let fitted = FittedPipeline::fit(frame, spec, t_star)?;
    let sf = fitted.transform(frame, t_star)?;
    Ok((fitted, sf))
}

pub fn direction_from_code(code: u8) -> Result<Direction> {
    Direction::from_code(code).ok_or_else(|| Error::Parse(format!("unknown direction code {code}")))
}

//! A single-hidden-layer recurrent knowledge tracer.
//!
//! Each response is one-hot encoded in `2I` slots (correct responses in the
//! first `I`, incorrect in the last `I`), mapped to `C` dimensions by a frozen
//! random projection, and fed to
//!
//! ```text
//! h_{t+1} = logistic(h_t W_hh + c(x_t) W_xh + b_h)
//! y_{t+1} = logistic(h_{t+1} W_hy + b_y)
//! ```
//!
//! Vectors are rows, so `W_xh` is `C×H`, `W_hh` is `H×H` and `W_hy` is `H×I`.
//! Coordinate `i` of `y_{t+1}` predicts the next response if it is on item `i`.
//! Training maximizes the response log-likelihood by minibatch gradient ascent
//! with full backpropagation through time and inverted dropout on the hidden
//! activations that feed the output layer.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataio::Dataset;
use crate::error::{Error, Result};

const OUTPUT_FLOOR: f64 = 1e-12;
const WEIGHT_INIT_VARIANCE: f64 = 0.01;
// Stream offsets so projection, weights and dropout/shuffling draw from
// independent generators.
const WEIGHT_STREAM: u64 = 0x5eed_0001;
const TRAIN_STREAM: u64 = 0x5eed_0002;

/// Which label is the network's "item": the dataset item or its group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DktLabels {
    Item,
    Group,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DktHyperparams {
    pub compressed_dim: usize,
    pub hidden_dim: usize,
    pub dropout_p: f64,
    pub step_size: f64,
    pub minibatch_students: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Longest stretch of a sequence unrolled at once; longer sequences are
    /// split with the hidden state carried (but not differentiated) across.
    pub max_unroll: usize,
    pub labels: DktLabels,
    /// Skip the projection and feed the raw one-hot input (`C` must be `2I`).
    pub identity_projection: bool,
}

impl Default for DktHyperparams {
    fn default() -> Self {
        Self {
            compressed_dim: 50,
            hidden_dim: 100,
            dropout_p: 0.25,
            step_size: 0.5,
            minibatch_students: 32,
            epochs: 10,
            seed: 0,
            max_unroll: 500,
            labels: DktLabels::Item,
            identity_projection: false,
        }
    }
}

impl DktHyperparams {
    fn validate(&self, n_labels: usize) -> Result<()> {
        if self.compressed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Argument("C and H must be positive".into()));
        }
        if self.compressed_dim > 2 * n_labels {
            return Err(Error::Argument(format!(
                "compressed dimension {} exceeds 2I = {}",
                self.compressed_dim,
                2 * n_labels
            )));
        }
        if self.identity_projection && self.compressed_dim != 2 * n_labels {
            return Err(Error::Argument("identity projection needs C = 2I".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Argument("dropout_p must lie in [0, 1)".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::Argument("step_size must be positive".into()));
        }
        if self.minibatch_students == 0 || self.epochs == 0 || self.max_unroll == 0 {
            return Err(Error::Argument(
                "minibatch size, epochs and max_unroll must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A one-hot response vector of length `2I`, stored by its hot index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseEncoding {
    pub index: usize,
    pub len: usize,
}

impl ResponseEncoding {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        v[self.index] = 1.0;
        v
    }
}

pub fn encode_response(item: usize, correct: bool, n_items: usize) -> Result<ResponseEncoding> {
    if item >= n_items {
        return Err(Error::Argument(format!("item {item} out of range for I = {n_items}")));
    }
    let index = if correct { item } else { n_items + item };
    Ok(ResponseEncoding { index, len: 2 * n_items })
}

/// `2I×C` matrix with i.i.d. `N(0, 1/C)` entries. Row `k` is the compressed
/// image of one-hot slot `k`.
pub fn make_projection(n_items: usize, compressed_dim: usize, seed: u64) -> Result<Array2<f64>> {
    if compressed_dim == 0 || compressed_dim > 2 * n_items {
        return Err(Error::Argument(format!(
            "compressed dimension {compressed_dim} must lie in 1..={}",
            2 * n_items
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, (1.0 / compressed_dim as f64).sqrt()).expect("valid std");
    Ok(Array2::from_shape_simple_fn((2 * n_items, compressed_dim), || dist.sample(&mut rng)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Dense(Array2<f64>),
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DktParameters {
    pub n_items: usize,
    pub seed: u64,
    pub dropout_p: f64,
    pub projection: Projection,
    pub w_xh: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub w_hy: Array2<f64>,
    pub b_h: Array1<f64>,
    pub b_y: Array1<f64>,
}

impl DktParameters {
    /// Freshly initialized parameters: projection from `seed`, weights
    /// `N(0, 0.01)`, zero biases.
    pub fn initialize(n_items: usize, hp: &DktHyperparams) -> Result<Self> {
        hp.validate(n_items)?;
        let projection = if hp.identity_projection {
            Projection::Identity
        } else {
            Projection::Dense(make_projection(n_items, hp.compressed_dim, hp.seed)?)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ WEIGHT_STREAM);
        let dist = Normal::new(0.0, WEIGHT_INIT_VARIANCE.sqrt()).expect("valid std");
        let mut init = |r, c| Array2::from_shape_simple_fn((r, c), || dist.sample(&mut rng));
        let (c, h) = (hp.compressed_dim, hp.hidden_dim);
        Ok(Self {
            n_items,
            seed: hp.seed,
            dropout_p: hp.dropout_p,
            projection,
            w_xh: init(c, h),
            w_hh: init(h, h),
            w_hy: init(h, n_items),
            b_h: Array1::zeros(h),
            b_y: Array1::zeros(n_items),
        })
    }

    pub fn compressed_dim(&self) -> usize {
        self.w_xh.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.nrows()
    }

    pub fn n_weights(&self) -> usize {
        self.w_xh.len() + self.w_hh.len() + self.w_hy.len() + self.b_h.len() + self.b_y.len()
    }

    fn all_finite(&self) -> bool {
        [&self.w_xh, &self.w_hh, &self.w_hy].iter().all(|m| m.iter().all(|v| v.is_finite()))
            && self.b_h.iter().chain(&self.b_y).all(|v| v.is_finite())
    }

    /// `c(x) W_xh` for the one-hot slot `k`.
    fn input_drive(&self, k: usize) -> Array1<f64> {
        match &self.projection {
            Projection::Identity => self.w_xh.row(k).to_owned(),
            Projection::Dense(p) => p.row(k).dot(&self.w_xh),
        }
    }

    fn accumulate_input_grad(&self, k: usize, da: ArrayView1<f64>, grad: &mut Array2<f64>) {
        match &self.projection {
            Projection::Identity => grad.row_mut(k).scaled_add(1.0, &da),
            Projection::Dense(p) => {
                for (mut row, &c) in grad.rows_mut().into_iter().zip(p.row(k)) {
                    row.scaled_add(c, &da);
                }
            }
        }
    }

    fn step(&self, h: &Array1<f64>, k: usize) -> Array1<f64> {
        let mut a = h.dot(&self.w_hh) + self.input_drive(k) + &self.b_h;
        a.mapv_inplace(logistic);
        a
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hidden states and output probabilities after each input.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub hidden: Vec<Array1<f64>>,
    pub outputs: Vec<Array1<f64>>,
}

/// Runs the recurrence over `inputs` from `h_0 = 0`. With `masks` (one per
/// step, already scaled for inverted dropout) the hidden activations feeding
/// the output layer are masked; without, the network is in evaluation mode.
pub fn rnn_forward(
    params: &DktParameters,
    inputs: &[ResponseEncoding],
    masks: Option<&[Array1<f64>]>,
) -> Result<Forward> {
    let mut h = Array1::zeros(params.hidden_dim());
    let mut out = Forward { hidden: Vec::with_capacity(inputs.len()), outputs: Vec::new() };
    for (t, x) in inputs.iter().enumerate() {
        if x.len != 2 * params.n_items {
            return Err(Error::Argument("input encoding does not match I".into()));
        }
        h = params.step(&h, x.index);
        let fed = match masks {
            Some(m) => &h * &m[t],
            None => h.clone(),
        };
        let mut y = fed.dot(&params.w_hy) + &params.b_y;
        y.mapv_inplace(logistic);
        if !y.iter().all(|v| v.is_finite()) || !h.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { iteration: t, message: "non-finite activation".into() });
        }
        out.hidden.push(h.clone());
        out.outputs.push(y);
    }
    Ok(out)
}

/// A student's responses as `(label, correct)` pairs in time order.
pub type LabelSequence = Vec<(u32, bool)>;

/// Per-student label sequences and the label count `I`.
pub fn label_sequences(d: &Dataset, labels: DktLabels) -> Result<(Vec<LabelSequence>, usize)> {
    let n = match labels {
        DktLabels::Item => d.n_items(),
        DktLabels::Group => d.n_groups(),
    };
    let seqs = (0..d.n_students() as u32)
        .map(|s| {
            d.sequence(s)
                .map(|r| {
                    let label = match labels {
                        DktLabels::Item => Some(r.item),
                        DktLabels::Group => d.item_group(r.item),
                    };
                    label.map(|l| (l, r.correct)).ok_or_else(|| {
                        Error::Structure(format!("item `{}` has no group", d.items().name(r.item)))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((seqs, n))
}

fn encode_all(seq: &[(u32, bool)], n_items: usize) -> Result<Vec<ResponseEncoding>> {
    seq.iter().map(|&(l, r)| encode_response(l as usize, r, n_items)).collect()
}

#[inline]
fn response_ll(y: f64, correct: bool) -> f64 {
    let y = y.clamp(OUTPUT_FLOOR, 1.0 - OUTPUT_FLOOR);
    if correct { y.ln() } else { (1.0 - y).ln() }
}

/// Response log-likelihood `Σ r log y + (1 − r) log(1 − y)` over every
/// predictable response (each student's second onward), in evaluation mode.
pub fn log_likelihood(params: &DktParameters, sequences: &[LabelSequence]) -> Result<f64> {
    Ok(log_likelihood_with_count(params, sequences)?.0)
}

fn log_likelihood_with_count(params: &DktParameters, sequences: &[LabelSequence]) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut n = 0;
    for seq in sequences {
        if seq.len() < 2 {
            continue;
        }
        let inputs = encode_all(&seq[..seq.len() - 1], params.n_items)?;
        let fwd = rnn_forward(params, &inputs, None)?;
        for (y, &(label, correct)) in fwd.outputs.iter().zip(&seq[1..]) {
            total += response_ll(y[label as usize], correct);
            n += 1;
        }
    }
    Ok((total, n))
}

/// Gradient of the log-likelihood with the same shapes as the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DktGradient {
    pub w_xh: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub w_hy: Array2<f64>,
    pub b_h: Array1<f64>,
    pub b_y: Array1<f64>,
}

impl DktGradient {
    fn zeros_like(p: &DktParameters) -> Self {
        Self {
            w_xh: Array2::zeros(p.w_xh.raw_dim()),
            w_hh: Array2::zeros(p.w_hh.raw_dim()),
            w_hy: Array2::zeros(p.w_hy.raw_dim()),
            b_h: Array1::zeros(p.b_h.raw_dim()),
            b_y: Array1::zeros(p.b_y.raw_dim()),
        }
    }
}

/// Backpropagation through time over one student's sequence. Dropout masks,
/// when given, hold one entry per predicted response. Returns the
/// log-likelihood contribution and the number of predicted responses.
fn backprop_sequence(
    params: &DktParameters,
    seq: &[(u32, bool)],
    masks: Option<&[Array1<f64>]>,
    max_unroll: usize,
    grad: &mut DktGradient,
) -> Result<(f64, usize)> {
    let steps = seq.len().saturating_sub(1);
    let hdim = params.hidden_dim();
    let mut h_carry: Array1<f64> = Array1::zeros(hdim);
    let mut total = 0.0;
    let mut start = 0;
    while start < steps {
        let end = (start + max_unroll).min(steps);
        // Forward over the chunk, keeping everything backward needs.
        let mut hs: Vec<Array1<f64>> = Vec::with_capacity(end - start + 1);
        hs.push(h_carry.clone());
        let mut dzs = Vec::with_capacity(end - start);
        for t in start..end {
            let (label, correct) = seq[t];
            let k = encode_response(label as usize, correct, params.n_items)?.index;
            let h = params.step(hs.last().unwrap(), k);
            let (target, r) = seq[t + 1];
            let target = target as usize;
            let fed_dot = match masks {
                Some(m) => (&h * &m[t]).dot(&params.w_hy.column(target)),
                None => h.dot(&params.w_hy.column(target)),
            };
            let y = logistic(fed_dot + params.b_y[target]);
            if !y.is_finite() {
                return Err(Error::Divergence { iteration: t, message: "non-finite activation".into() });
            }
            total += response_ll(y, r);
            let clipped = !(OUTPUT_FLOOR..=1.0 - OUTPUT_FLOOR).contains(&y);
            let dz = if clipped { 0.0 } else if r { 1.0 - y } else { -y };
            dzs.push((k, target, dz));
            hs.push(h);
        }

        // Backward.
        let mut dh_next: Array1<f64> = Array1::zeros(hdim);
        for t in (start..end).rev() {
            let local = t - start;
            let h = &hs[local + 1];
            let h_prev = &hs[local];
            let (k, target, dz) = dzs[local];
            let mask = masks.map(|m| &m[t]);
            let fed = match mask {
                Some(m) => h * m,
                None => h.clone(),
            };
            grad.w_hy.column_mut(target).scaled_add(dz, &fed);
            grad.b_y[target] += dz;
            let mut dh = params.w_hy.column(target).to_owned() * dz;
            if let Some(m) = mask {
                dh *= m;
            }
            dh += &dh_next;
            let da = &dh * &h.mapv(|v| v * (1.0 - v));
            for (mut row, &hp) in grad.w_hh.rows_mut().into_iter().zip(h_prev.iter()) {
                row.scaled_add(hp, &da);
            }
            params.accumulate_input_grad(k, da.view(), &mut grad.w_xh);
            grad.b_h += &da;
            dh_next = params.w_hh.dot(&da);
        }
        h_carry = hs.pop().unwrap();
        start = end;
    }
    Ok((total, steps))
}

/// Exact gradient of [`log_likelihood`] (evaluation mode, no truncation).
pub fn log_likelihood_gradient(params: &DktParameters, sequences: &[LabelSequence]) -> Result<DktGradient> {
    let mut grad = DktGradient::zeros_like(params);
    for seq in sequences {
        backprop_sequence(params, seq, None, usize::MAX, &mut grad)?;
    }
    Ok(grad)
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Mean negative log-likelihood per predicted response (evaluation mode):
    /// entry 0 at initialization, then after each epoch.
    pub cross_entropy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDkt {
    pub params: DktParameters,
    pub report: TrainingReport,
}

/// Trains on every student of `d`.
pub fn train_dkt(d: &Dataset, hp: &DktHyperparams) -> Result<TrainedDkt> {
    let (seqs, n_labels) = label_sequences(d, hp.labels)?;
    train_on_sequences(&seqs, n_labels, hp)
}

pub fn train_on_sequences(seqs: &[LabelSequence], n_labels: usize, hp: &DktHyperparams) -> Result<TrainedDkt> {
    hp.validate(n_labels)?;
    if !seqs.iter().any(|s| s.len() >= 2) {
        return Err(Error::Argument("no student has two or more responses".into()));
    }
    let mut params = DktParameters::initialize(n_labels, hp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ TRAIN_STREAM);
    let keep = 1.0 - hp.dropout_p;
    let cross_entropy = |p: &DktParameters| -> Result<f64> {
        let (ll, n) = log_likelihood_with_count(p, seqs)?;
        Ok(-ll / n as f64)
    };
    let mut trace = vec![cross_entropy(&params)?];
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        for (mb, batch) in order.chunks(hp.minibatch_students).enumerate() {
            let mut grad = DktGradient::zeros_like(&params);
            let mut total = 0.0;
            let mut count = 0;
            for &s in batch {
                let seq = &seqs[s];
                let masks: Option<Vec<Array1<f64>>> = (hp.dropout_p > 0.0).then(|| {
                    (0..seq.len().saturating_sub(1))
                        .map(|_| {
                            Array1::from_shape_simple_fn(params.hidden_dim(), || {
                                if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }
                            })
                        })
                        .collect()
                });
                let (ll, n) =
                    backprop_sequence(&params, seq, masks.as_deref(), hp.max_unroll, &mut grad)
                        .map_err(|_| Error::TrainingDivergence { epoch, minibatch: mb })?;
                total += ll;
                count += n;
            }
            if count == 0 {
                continue;
            }
            if !total.is_finite() {
                return Err(Error::TrainingDivergence { epoch, minibatch: mb });
            }
            let lr = hp.step_size / count as f64;
            params.w_xh.scaled_add(lr, &grad.w_xh);
            params.w_hh.scaled_add(lr, &grad.w_hh);
            params.w_hy.scaled_add(lr, &grad.w_hy);
            params.b_h.scaled_add(lr, &grad.b_h);
            params.b_y.scaled_add(lr, &grad.b_y);
            if !params.all_finite() {
                return Err(Error::TrainingDivergence { epoch, minibatch: mb });
            }
        }
        let ce = cross_entropy(&params)?;
        if !ce.is_finite() {
            return Err(Error::TrainingDivergence { epoch, minibatch: 0 });
        }
        trace.push(ce);
    }
    Ok(TrainedDkt { params, report: TrainingReport { cross_entropy: trace } })
}

/// Probability that the next response, on `item`, is correct after `history`.
/// Unknown labels (outside `0..I`) fall back to 0.5.
pub fn predict_dkt(params: &DktParameters, history: &[(u32, bool)], item: u32) -> Result<f64> {
    if item as usize >= params.n_items {
        return Ok(0.5);
    }
    if history.is_empty() {
        return Ok(logistic(params.b_y[item as usize]));
    }
    let inputs = encode_all(history, params.n_items)?;
    let fwd = rnn_forward(params, &inputs, None)?;
    Ok(fwd.outputs.last().expect("non-empty")[item as usize])
}

/// Predictions for responses `1..T` of one sequence from a single forward
/// pass; entry `t - 1` predicts response `t`.
pub fn predict_sequence(params: &DktParameters, seq: &[(u32, bool)]) -> Result<Vec<f64>> {
    if seq.len() < 2 {
        return Ok(Vec::new());
    }
    let inputs = encode_all(&seq[..seq.len() - 1], params.n_items)?;
    let fwd = rnn_forward(params, &inputs, None)?;
    Ok(fwd.outputs.iter().zip(&seq[1..]).map(|(y, &(l, _))| y[l as usize]).collect())
}

/// Evaluation-mode network state fed one response at a time. Predictions
/// equal [`predict_dkt`] on the same prefix.
#[derive(Debug, Clone)]
pub struct DktState<'a> {
    params: &'a DktParameters,
    h: Array1<f64>,
}

impl<'a> DktState<'a> {
    pub fn new(params: &'a DktParameters) -> Self {
        Self { params, h: Array1::zeros(params.hidden_dim()) }
    }

    pub fn push(&mut self, label: u32, correct: bool) -> Result<()> {
        let x = encode_response(label as usize, correct, self.params.n_items)?;
        self.h = self.params.step(&self.h, x.index);
        if !self.h.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { iteration: 0, message: "non-finite activation".into() });
        }
        Ok(())
    }

    pub fn predict(&self, item: u32) -> f64 {
        let i = item as usize;
        if i >= self.params.n_items {
            return 0.5;
        }
        logistic(self.h.dot(&self.params.w_hy.column(i)) + self.params.b_y[i])
    }
}

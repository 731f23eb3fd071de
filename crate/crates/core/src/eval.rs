//! Online response-prediction protocol: student-level splits, frozen global
//! parameters, per-step student refits, Acc/AUC, cross-validation, sweeps and
//! the windowed percent-correct baseline.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataio::{Dataset, InteractionRecord, SyntheticTruth};
use crate::dkt::{train_dkt, DktHyperparams, DktLabels, DktParameters, DktState};
use crate::error::{Error, Result};
use crate::irt::{fit_hirt, fit_irt, refit_student_from, FitOptions};
use crate::link::probit;
use crate::tirt::{estimate_from_history, DiscountedHistory, TirtConfig};

pub const N_FOLDS: usize = 5;
pub const MIN_STUDENTS: usize = 10;

/// Parameter-selection holdout plus cross-validation folds, as sorted
/// student indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub holdout: Vec<u32>,
    pub folds: Vec<Vec<u32>>,
    pub seed: u64,
}

impl SplitPlan {
    /// Every non-holdout student outside `fold`.
    pub fn training_students(&self, fold: usize) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Every non-holdout student; the training set for sweeps.
    pub fn selection_training_students(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.folds.iter().flatten().copied().collect();
        out.sort_unstable();
        out
    }

    pub fn n_students(&self) -> usize {
        self.holdout.len() + self.folds.iter().map(Vec::len).sum::<usize>()
    }
}

/// Holdout of `floor(0.2 n)` (at least 1) students, the rest dealt into
/// [`N_FOLDS`] folds whose sizes differ by at most one.
pub fn make_split(n_students: usize, seed: u64) -> Result<SplitPlan> {
    if n_students < MIN_STUDENTS {
        return Err(Error::Structure(format!(
            "need at least {MIN_STUDENTS} students to split, got {n_students}"
        )));
    }
    let mut order: Vec<u32> = (0..n_students as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_holdout = (n_students / 5).max(1);
    let mut holdout = order[..n_holdout].to_vec();
    holdout.sort_unstable();
    let mut folds = vec![Vec::new(); N_FOLDS];
    for (k, &s) in order[n_holdout..].iter().enumerate() {
        folds[k % N_FOLDS].push(s);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(SplitPlan { holdout, folds, seed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionEntry {
    pub student: u32,
    pub item: u32,
    pub time_index: u32,
    pub probability: f64,
    pub correct: bool,
    /// The item had no responses in the training data.
    pub unseen: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionLog {
    pub entries: Vec<PredictionEntry>,
}

impl PredictionLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, other: PredictionLog) {
        self.entries.extend(other.entries);
    }

    pub fn write_csv<W: Write>(&self, d: &Dataset, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["student_id", "item_id", "time_index", "prediction", "correct", "unseen_flag"])?;
        for e in &self.entries {
            csv.write_record([
                d.students().name(e.student),
                d.items().name(e.item),
                &e.time_index.to_string(),
                &format!("{:?}", e.probability),
                if e.correct { "1" } else { "0" },
                if e.unseen { "1" } else { "0" },
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Fraction of entries where `p > 0.5` agrees with the observed response.
pub fn accuracy(log: &PredictionLog) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty log".into()));
    }
    let hits = log.entries.iter().filter(|e| (e.probability > 0.5) == e.correct).count();
    Ok(hits as f64 / log.len() as f64)
}

/// Pooled Mann–Whitney AUC with half credit for ties.
pub fn auc(log: &PredictionLog) -> Result<f64> {
    let pairs: Vec<(f64, bool)> = log.entries.iter().map(|e| (e.probability, e.correct)).collect();
    auc_of(&pairs)
}

/// [`auc`] over bare `(score, label)` pairs.
pub fn auc_of(pairs: &[(f64, bool)]) -> Result<f64> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = sorted.iter().filter(|p| p.1).count() as u64;
    let n_neg = sorted.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes ({n_pos} positive, {n_neg} negative)"
        )));
    }
    // Twice the concordant count plus the tie count, kept integral.
    let mut twice = 0u64;
    let mut neg_below = 0u64;
    for group in sorted.chunk_by(|a, b| a.0 == b.0) {
        let pos = group.iter().filter(|p| p.1).count() as u64;
        let neg = group.len() as u64 - pos;
        twice += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
    }
    Ok(twice as f64 / (2 * n_pos * n_neg) as f64)
}

/// Baseline predictions for one history: for each response with at least `w`
/// predecessors, `(index, predict correct)` where the prediction is whether at
/// least half of the previous `w` responses were correct.
pub fn windowed_baseline(history: &[bool], w: usize) -> Result<Vec<(usize, bool)>> {
    if w == 0 {
        return Err(Error::Argument("window length must be positive".into()));
    }
    Ok((w..history.len()).map(|t| (t, window_rule(history[t - w..t].iter().copied()))).collect())
}

fn window_rule(prev: impl ExactSizeIterator<Item = bool>) -> bool {
    let n = prev.len();
    2 * prev.filter(|&r| r).count() >= n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowAccuracy {
    pub w: usize,
    pub accuracy: f64,
    pub n: usize,
    /// Binomial standard error `sqrt(acc (1 - acc) / n)`.
    pub stderr: f64,
}

/// Windowed-baseline accuracy for each `w`, scored on the same responses:
/// those with at least `min_predecessors` earlier responses (which must be at
/// least the largest window).
pub fn window_accuracy_curve(
    d: &Dataset,
    students: &[u32],
    windows: &[usize],
    min_predecessors: usize,
) -> Result<Vec<WindowAccuracy>> {
    let histories: Vec<Vec<bool>> =
        students.iter().map(|&s| d.sequence(s).map(|r| r.correct).collect()).collect();
    windows
        .iter()
        .map(|&w| {
            if w == 0 || w > min_predecessors {
                return Err(Error::Argument(format!(
                    "window {w} must lie in 1..={min_predecessors}"
                )));
            }
            let (mut hits, mut n) = (0usize, 0usize);
            for h in &histories {
                for (t, pred) in windowed_baseline(h, w)? {
                    if t >= min_predecessors {
                        hits += usize::from(pred == h[t]);
                        n += 1;
                    }
                }
            }
            if n == 0 {
                return Err(Error::UndefinedMetric("no response has enough predecessors".into()));
            }
            let accuracy = hits as f64 / n as f64;
            let stderr = (accuracy * (1.0 - accuracy) / n as f64).sqrt();
            Ok(WindowAccuracy { w, accuracy, n, stderr })
        })
        .collect()
}

/// Predictions from the generating parameters for every response after the
/// first of each listed student.
pub fn oracle_prediction_log(d: &Dataset, truth: &SyntheticTruth, students: &[u32]) -> PredictionLog {
    let entries = students
        .iter()
        .flat_map(|&s| d.sequence(s).skip(1))
        .map(|r| PredictionEntry {
            student: r.student,
            item: r.item,
            time_index: r.time_index,
            probability: truth.probability(r.student, r.time_index, r.item),
            correct: r.correct,
            unseen: false,
        })
        .collect();
    PredictionLog { entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Irt,
    Hirt,
    Tirt,
    Dkt,
    Window,
    /// Predicts the training percent correct for every response.
    Constant,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Irt => "irt",
            ModelFamily::Hirt => "hirt",
            ModelFamily::Tirt => "tirt",
            ModelFamily::Dkt => "dkt",
            ModelFamily::Window => "window",
            ModelFamily::Constant => "constant",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "irt" => ModelFamily::Irt,
            "hirt" => ModelFamily::Hirt,
            "tirt" => ModelFamily::Tirt,
            "dkt" => ModelFamily::Dkt,
            "window" => ModelFamily::Window,
            "constant" => ModelFamily::Constant,
            other => return Err(Error::Config(format!("unknown model family `{other}`"))),
        })
    }
}

/// A model family with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Irt,
    Hirt { sigma2: f64, tau2: f64 },
    Tirt { gamma2: f64 },
    Dkt(DktHyperparams),
    Window { w: usize },
    Constant,
}

impl ModelSpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Irt => ModelFamily::Irt,
            ModelSpec::Hirt { .. } => ModelFamily::Hirt,
            ModelSpec::Tirt { .. } => ModelFamily::Tirt,
            ModelSpec::Dkt(_) => ModelFamily::Dkt,
            ModelSpec::Window { .. } => ModelFamily::Window,
            ModelSpec::Constant => ModelFamily::Constant,
        }
    }

    pub fn hyperparameters(&self) -> Vec<(String, String)> {
        let kv = |k: &str, v: String| (k.to_owned(), v);
        match self {
            ModelSpec::Irt | ModelSpec::Constant => Vec::new(),
            ModelSpec::Hirt { sigma2, tau2 } => {
                vec![kv("sigma2", format!("{sigma2:?}")), kv("tau2", format!("{tau2:?}"))]
            }
            ModelSpec::Tirt { gamma2 } => vec![kv("gamma2", format!("{gamma2:?}"))],
            ModelSpec::Window { w } => vec![kv("w", w.to_string())],
            ModelSpec::Dkt(hp) => vec![
                kv("compressed_dim", hp.compressed_dim.to_string()),
                kv("hidden_dim", hp.hidden_dim.to_string()),
                kv("dropout_p", format!("{:?}", hp.dropout_p)),
                kv("step_size", format!("{:?}", hp.step_size)),
                kv("minibatch_students", hp.minibatch_students.to_string()),
                kv("epochs", hp.epochs.to_string()),
                kv("seed", hp.seed.to_string()),
                kv("max_unroll", hp.max_unroll.to_string()),
                kv("labels", match hp.labels {
                    DktLabels::Item => "item".into(),
                    DktLabels::Group => "group".into(),
                }),
                kv("identity_projection", hp.identity_projection.to_string()),
            ],
        }
    }

    /// `family(k=v;...)`, or the bare family without hyperparameters.
    pub fn label(&self) -> String {
        let hp = self.hyperparameters();
        if hp.is_empty() {
            return self.family().to_string();
        }
        let inner: Vec<String> = hp.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.family(), inner.join(";"))
    }

    /// The window baseline emits hard 0/1 predictions and is scored by
    /// accuracy only.
    pub fn scores_auc(&self) -> bool {
        !matches!(self, ModelSpec::Window { .. })
    }
}

/// Frozen global parameters, ready for online prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    /// IRT or HIRT difficulties; students are refit per step.
    Static { beta: Vec<f64>, seen: Vec<bool>, floor: f64 },
    Temporal { beta: Vec<f64>, seen: Vec<bool>, cfg: TirtConfig, floor: f64 },
    Dkt { params: DktParameters, labels: DktLabels, seen: Vec<bool> },
    Window { w: usize },
    Constant { p: f64 },
}

/// Trains the global parameters of `spec` on every student of `train`.
pub fn train(spec: &ModelSpec, train: &Dataset, opts: &FitOptions) -> Result<TrainedModel> {
    let seen_items = || train.item_counts().into_iter().map(|c| c > 0).collect::<Vec<_>>();
    let floor = opts.probability_floor;
    Ok(match spec {
        ModelSpec::Irt => {
            TrainedModel::Static { beta: fit_irt(train, opts)?.params.beta, seen: seen_items(), floor }
        }
        ModelSpec::Hirt { sigma2, tau2 } => TrainedModel::Static {
            beta: fit_hirt(train, *sigma2, *tau2, opts)?.params.beta,
            seen: seen_items(),
            floor,
        },
        ModelSpec::Tirt { gamma2 } => TrainedModel::Temporal {
            beta: fit_irt(train, opts)?.params.beta,
            seen: seen_items(),
            cfg: TirtConfig::new(*gamma2)?,
            floor,
        },
        ModelSpec::Dkt(hp) => {
            let params = train_dkt(train, hp)?.params;
            let mut seen = vec![false; params.n_items];
            for r in train.records() {
                if let Some(l) = dkt_label(train, hp.labels, r.item)? {
                    seen[l as usize] = true;
                }
            }
            TrainedModel::Dkt { params, labels: hp.labels, seen }
        }
        ModelSpec::Window { w } => {
            if *w == 0 {
                return Err(Error::Argument("window length must be positive".into()));
            }
            TrainedModel::Window { w: *w }
        }
        ModelSpec::Constant => {
            if train.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let p = train.records().iter().filter(|r| r.correct).count() as f64 / train.len() as f64;
            TrainedModel::Constant { p }
        }
    })
}

fn dkt_label(d: &Dataset, labels: DktLabels, item: u32) -> Result<Option<u32>> {
    match labels {
        DktLabels::Item => Ok(Some(item)),
        DktLabels::Group => d
            .item_group(item)
            .map(Some)
            .ok_or_else(|| Error::Structure(format!("item `{}` has no group", d.items().name(item)))),
    }
}

/// What a predictor is told about the response it must predict. The
/// correctness is deliberately absent.
#[derive(Debug, Clone, Copy)]
struct Query {
    item: u32,
    time_index: u32,
}

/// Walks a sequence from `start`, handing the predictor only the strictly
/// earlier records and the next item.
fn drive(
    seq: &[InteractionRecord],
    start: usize,
    mut predict: impl FnMut(&[InteractionRecord], Query) -> Result<f64>,
    unseen: impl Fn(u32) -> bool,
) -> Result<Vec<PredictionEntry>> {
    let mut out = Vec::with_capacity(seq.len().saturating_sub(start));
    for t in start..seq.len() {
        let next = &seq[t];
        let p = predict(&seq[..t], Query { item: next.item, time_index: next.time_index })?;
        out.push(PredictionEntry {
            student: next.student,
            item: next.item,
            time_index: next.time_index,
            probability: p,
            correct: next.correct,
            unseen: unseen(next.item),
        });
    }
    Ok(out)
}

impl TrainedModel {
    fn n_items(&self) -> Option<usize> {
        match self {
            TrainedModel::Static { beta, .. } | TrainedModel::Temporal { beta, .. } => Some(beta.len()),
            _ => None,
        }
    }

    /// Online predictions for one student's time-ordered records. `d`
    /// supplies the item-to-group map for group-labelled DKT.
    pub fn predict_sequence(&self, seq: &[InteractionRecord], d: &Dataset) -> Result<Vec<PredictionEntry>> {
        match self {
            TrainedModel::Static { beta, seen, floor } => {
                let mut theta = 0.0;
                let mut pairs = Vec::with_capacity(seq.len());
                drive(
                    seq,
                    1,
                    |hist, q| {
                        pairs.extend(hist[pairs.len()..].iter().map(|r| (beta[r.item as usize], r.correct)));
                        theta = refit_student_from(theta, &pairs, *floor);
                        Ok(probit(theta - beta[q.item as usize]))
                    },
                    |i| !seen[i as usize],
                )
            }
            TrainedModel::Temporal { beta, seen, cfg, floor } => {
                let mut theta = 0.0;
                drive(
                    seq,
                    1,
                    |hist, q| {
                        let h = DiscountedHistory::new(
                            cfg,
                            hist.iter().map(|r| (r.time_index, beta[r.item as usize], r.correct)),
                            q.time_index,
                        )?;
                        theta = estimate_from_history(&h, theta, *floor);
                        Ok(probit(theta - beta[q.item as usize]))
                    },
                    |i| !seen[i as usize],
                )
            }
            TrainedModel::Dkt { params, labels, seen } => {
                let mut state = DktState::new(params);
                let mut fed = 0;
                let mut label_seen = Vec::with_capacity(seq.len());
                for r in seq {
                    let l = dkt_label(d, *labels, r.item)?.expect("labels resolve");
                    label_seen.push(seen.get(l as usize).copied().unwrap_or(false));
                }
                let mut entries = drive(
                    seq,
                    1,
                    |hist, q| {
                        for r in &hist[fed..] {
                            state.push(dkt_label(d, *labels, r.item)?.expect("labels resolve"), r.correct)?;
                        }
                        fed = hist.len();
                        Ok(state.predict(dkt_label(d, *labels, q.item)?.expect("labels resolve")))
                    },
                    |_| false,
                )?;
                for (e, &s) in entries.iter_mut().zip(label_seen.iter().skip(1)) {
                    e.unseen = !s;
                }
                Ok(entries)
            }
            TrainedModel::Window { w } => drive(
                seq,
                (*w).max(1),
                |hist, _| {
                    let prev = hist[hist.len() - w..].iter().map(|r| r.correct);
                    Ok(if window_rule(prev) { 1.0 } else { 0.0 })
                },
                |_| false,
            ),
            TrainedModel::Constant { p } => drive(seq, 1, |_, _| Ok(*p), |_| false),
        }
    }
}

/// Online predictions for `students` of `d`, in student order.
pub fn online_predict(model: &TrainedModel, d: &Dataset, students: &[u32]) -> Result<PredictionLog> {
    if let Some(n) = model.n_items() {
        if n != d.n_items() {
            return Err(Error::Config(format!(
                "model has {n} item difficulties but the dataset has {} items",
                d.n_items()
            )));
        }
    }
    if let TrainedModel::Dkt { params, labels, .. } = model {
        let n = match labels {
            DktLabels::Item => d.n_items(),
            DktLabels::Group => d.n_groups(),
        };
        if n != params.n_items {
            return Err(Error::Config(format!(
                "network has {} labels but the dataset has {n}",
                params.n_items
            )));
        }
    }
    if let Some(&s) = students.iter().find(|&&s| s as usize >= d.n_students()) {
        return Err(Error::Argument(format!("student index {s} out of range")));
    }
    let per_student: Vec<Vec<PredictionEntry>> = students
        .par_iter()
        .map(|&s| model.predict_sequence(&d.sequence_vec(s), d))
        .collect::<Result<_>>()?;
    Ok(PredictionLog { entries: per_student.into_iter().flatten().collect() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    /// `None` when AUC is undefined on the fold or not scored for the model.
    pub auc: Option<f64>,
}

/// Mean and standard error (sample sd / √k) of `values`.
pub fn mean_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return Some((mean, f64::NAN));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Some((mean, (var / k).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// [`ModelSpec::label`] of the evaluated model.
    pub model: String,
    pub hyperparameters: Vec<(String, String)>,
    pub dataset_hash: String,
    pub folds: Vec<FoldMetrics>,
}

impl EvalReport {
    pub fn accuracy(&self) -> Option<(f64, f64)> {
        mean_stderr(&self.folds.iter().map(|f| f.accuracy).collect::<Vec<_>>())
    }

    pub fn auc(&self) -> Option<(f64, f64)> {
        mean_stderr(&self.folds.iter().filter_map(|f| f.auc).collect::<Vec<_>>())
    }

    /// `model,fold,acc,auc` rows per fold, then `mean` and `stderr` rows.
    /// An empty `auc` cell means undefined.
    pub fn write_metrics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["model", "fold", "acc", "auc"])?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        for f in &self.folds {
            csv.write_record([&self.model, &f.fold.to_string(), &format!("{:?}", f.accuracy), &opt(f.auc)])?;
        }
        let (acc, auc) = (self.accuracy(), self.auc());
        csv.write_record([&self.model, "mean", &opt(acc.map(|a| a.0)), &opt(auc.map(|a| a.0))])?;
        csv.write_record([&self.model, "stderr", &opt(acc.map(|a| a.1)), &opt(auc.map(|a| a.1))])?;
        csv.flush()?;
        Ok(())
    }

    /// Reads the per-fold rows written by [`EvalReport::write_metrics_csv`];
    /// summary rows are skipped since they are recomputed.
    pub fn read_metrics_csv<R: Read>(r: R, dataset_hash: &str) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(r);
        let headers = csv.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["model", "fold", "acc", "auc"] {
            return Err(Error::ParamFile("metrics table header must be model,fold,acc,auc".into()));
        }
        let mut model = None;
        let mut folds = Vec::new();
        for (n, rec) in csv.records().enumerate() {
            let rec = rec?;
            let row_err = |m: &str| Error::Row { row: n + 2, message: m.to_owned() };
            let Ok(fold) = rec[1].parse::<usize>() else { continue };
            if model.as_deref().is_some_and(|m| m != &rec[0]) {
                return Err(row_err("mixed models in one metrics table"));
            }
            model = Some(rec[0].to_owned());
            let accuracy = rec[2].parse().map_err(|_| row_err("bad acc"))?;
            let auc = match &rec[3] {
                "" => None,
                v => Some(v.parse().map_err(|_| row_err("bad auc"))?),
            };
            folds.push(FoldMetrics { fold, accuracy, auc });
        }
        Ok(Self {
            model: model.ok_or(Error::EmptyDataset)?,
            hyperparameters: Vec::new(),
            dataset_hash: dataset_hash.to_owned(),
            folds,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model    {}", self.model)?;
        writeln!(f, "dataset  {}", self.dataset_hash)?;
        writeln!(f, "{:>6} {:>10} {:>10}", "fold", "acc", "auc")?;
        let cell = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        for m in &self.folds {
            writeln!(f, "{:>6} {:>10.4} {:>10}", m.fold, m.accuracy, cell(m.auc))?;
        }
        let (acc, auc) = (self.accuracy(), self.auc());
        writeln!(f, "{:>6} {:>10} {:>10}", "mean", cell(acc.map(|a| a.0)), cell(auc.map(|a| a.0)))?;
        write!(f, "{:>6} {:>10} {:>10}", "stderr", cell(acc.map(|a| a.1)), cell(auc.map(|a| a.1)))
    }
}

/// Outcome of [`cross_validate`]: the report and each fold's log.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub report: EvalReport,
    pub logs: Vec<PredictionLog>,
}

/// Trains on four folds and predicts the fifth, for every fold.
pub fn cross_validate(spec: &ModelSpec, d: &Dataset, plan: &SplitPlan, opts: &FitOptions) -> Result<CrossValidation> {
    if plan.n_students() != d.n_students() {
        return Err(Error::Config(format!(
            "split plan covers {} students but the dataset has {}",
            plan.n_students(),
            d.n_students()
        )));
    }
    let results: Vec<(FoldMetrics, PredictionLog)> = (0..plan.folds.len())
        .into_par_iter()
        .map(|k| {
            let run = || -> Result<_> {
                let model = train(spec, &d.subset(&plan.training_students(k)), opts)?;
                let log = online_predict(&model, d, &plan.folds[k])?;
                let accuracy = accuracy(&log)?;
                let auc = if spec.scores_auc() { auc(&log).ok() } else { None };
                Ok((FoldMetrics { fold: k, accuracy, auc }, log))
            };
            run().map_err(|e| Error::Fold { fold: k, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let (folds, logs) = results.into_iter().unzip();
    Ok(CrossValidation {
        report: EvalReport {
            model: spec.label(),
            hyperparameters: spec.hyperparameters(),
            dataset_hash: d.content_hash(),
            folds,
        },
        logs,
    })
}

/// Candidate settings for one family, ordered so that simpler settings
/// come first (ties in the sweep go to the earlier point).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub family: ModelFamily,
    pub points: Vec<ModelSpec>,
}

impl SweepGrid {
    pub fn new(points: Vec<ModelSpec>) -> Result<Self> {
        let family = points.first().ok_or_else(|| Error::Config("empty sweep grid".into()))?.family();
        if points.iter().any(|p| p.family() != family) {
            return Err(Error::Config("a sweep grid must hold a single model family".into()));
        }
        Ok(Self { family, points })
    }

    /// Built-in grid for `family`. DKT points start from `dkt_base` and vary
    /// `C`, `H` and the dropout probability.
    pub fn default_for(family: ModelFamily, dkt_base: &DktHyperparams) -> Self {
        let points = match family {
            ModelFamily::Irt => vec![ModelSpec::Irt],
            ModelFamily::Constant => vec![ModelSpec::Constant],
            ModelFamily::Tirt => [0.0, 0.01, 0.1, 1.0, 10.0, 100.0]
                .into_iter()
                .map(|gamma2| ModelSpec::Tirt { gamma2 })
                .collect(),
            ModelFamily::Hirt => {
                // Tiny τ² with σ² = 1 is plain IRT.
                let mut v = vec![ModelSpec::Hirt { sigma2: 1.0, tau2: 1e-8 }];
                for sigma2 in [0.125, 0.25, 0.5, 1.0] {
                    for tau2 in [0.125, 0.25, 0.5, 1.0] {
                        v.push(ModelSpec::Hirt { sigma2, tau2 });
                    }
                }
                v
            }
            ModelFamily::Dkt => {
                let mut v = Vec::new();
                for (c, h) in [(25, 50), (50, 50), (50, 100), (100, 200)] {
                    for p in [0.0, 0.25, 0.5] {
                        v.push(ModelSpec::Dkt(DktHyperparams {
                            compressed_dim: c,
                            hidden_dim: h,
                            dropout_p: p,
                            ..dkt_base.clone()
                        }));
                    }
                }
                v
            }
            ModelFamily::Window => {
                [1, 2, 3, 5, 9, 17, 33].into_iter().map(|w| ModelSpec::Window { w }).collect()
            }
        };
        Self { family, points }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub spec: ModelSpec,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best: ModelSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["model", "acc", "auc", "selected"])?;
        for r in &self.rows {
            csv.write_record([
                r.spec.label(),
                format!("{:?}", r.accuracy),
                r.auc.map(|v| format!("{v:?}")).unwrap_or_default(),
                u8::from(r.spec == self.best).to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Scores every grid point on the holdout after training on all other
/// students; the best holdout AUC wins (accuracy for the window baseline),
/// with ties going to the earlier point.
pub fn sweep(grid: &SweepGrid, d: &Dataset, plan: &SplitPlan, opts: &FitOptions) -> Result<SweepResult> {
    if grid.points.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    let train_set = d.subset(&plan.selection_training_students());
    let rows: Vec<SweepRow> = grid
        .points
        .par_iter()
        .map(|spec| {
            let model = train(spec, &train_set, opts)?;
            let log = online_predict(&model, d, &plan.holdout)?;
            let auc = if spec.scores_auc() { auc(&log).ok() } else { None };
            Ok(SweepRow { spec: spec.clone(), accuracy: accuracy(&log)?, auc })
        })
        .collect::<Result<_>>()?;
    let score = |r: &SweepRow| {
        if r.spec.scores_auc() { r.auc.unwrap_or(f64::NEG_INFINITY) } else { r.accuracy }
    };
    let mut best = 0;
    for (k, r) in rows.iter().enumerate() {
        if score(r) > score(&rows[best]) {
            best = k;
        }
    }
    Ok(SweepResult { best: rows[best].spec.clone(), rows })
}

/// One line of a cross-report comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub dataset: String,
    pub model: String,
    pub metric: &'static str,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error of each metric of each report, recomputed from the
/// per-fold values. The second value lists warnings such as mismatched
/// dataset hashes.
pub fn consolidate(reports: &[(String, EvalReport)]) -> (Vec<ComparisonRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut first_hash: Option<&str> = None;
    for (dataset, r) in reports {
        match first_hash {
            None => first_hash = Some(&r.dataset_hash),
            Some(h) if h != r.dataset_hash => warnings.push(format!(
                "report for {} was computed on dataset {} but the first report used {h}",
                r.model, r.dataset_hash
            )),
            Some(_) => {}
        }
        for (metric, v) in [("acc", r.accuracy()), ("auc", r.auc())] {
            if let Some((mean, stderr)) = v {
                rows.push(ComparisonRow { dataset: dataset.clone(), model: r.model.clone(), metric, mean, stderr });
            }
        }
    }
    (rows, warnings)
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["dataset", "model", "metric", "mean", "stderr"])?;
    for r in rows {
        csv.write_record([&r.dataset, &r.model, r.metric, &format!("{:?}", r.mean), &format!("{:?}", r.stderr)])?;
    }
    csv.flush()?;
    Ok(())
}

/// Fixed-width rendering of a comparison table.
pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let dw = rows.iter().map(|r| r.dataset.len()).max().unwrap_or(0).max("dataset".len());
    let mw = rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max("model".len());
    let mut out = format!("{:<dw$}  {:<mw$}  {:<6}  {:>8}  {:>8}\n", "dataset", "model", "metric", "mean", "stderr");
    for r in rows {
        out.push_str(&format!(
            "{:<dw$}  {:<mw$}  {:<6}  {:>8.4}  {:>8.4}\n",
            r.dataset, r.model, r.metric, r.mean, r.stderr
        ));
    }
    out
}

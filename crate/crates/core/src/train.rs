//! Cross-validated training with early stopping, window-level metrics and
//! the inference timing protocol.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState};
use crate::dataset::{FoldPlan, Split, WindowSample};
use crate::error::{Error, Result};
use crate::model::{self, ModelConfig, ModelParams, Variant};
use crate::types::BehaviorCategory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-loss decrease before stopping.
    pub patience: usize,
    pub seed: u64,
    pub positive_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 16,
            max_epochs: 200,
            patience: 5,
            seed: 0,
            positive_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size, patience and max_epochs must be ≥ 1".into()));
        }
        if !(self.positive_weight > 0.0) {
            return Err(Error::Config("positive_weight must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
}

/// Mini-batch Adam on `train`, validation loss after every epoch; returns
/// the parameters of the epoch with the lowest validation loss.
pub fn train_windows(
    train: &[&WindowSample],
    val: &[&WindowSample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config(format!(
            "empty split: {} train, {} validation windows",
            train.len(),
            val.len()
        )));
    }
    let mut warnings = Vec::new();
    let positives = train.iter().filter(|w| w.label).count();
    if positives == 0 || positives == train.len() {
        warnings.push(format!(
            "training split is single-class ({positives}/{} positive)",
            train.len()
        ));
    }

    let mut params = ModelParams::init(model_cfg, cfg.seed)?;
    params.input_norm = model::InputNorm::fit(train);
    let mut adam = AdamState::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best = (params.clone(), f64::INFINITY, 0usize);
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut seen = 0.0;
        let mut train_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, grads) = model::loss_and_grads(&params, model_cfg, &batch, cfg.positive_weight)?;
            adam.apply(&mut params.tensors, &grads)?;
            train_loss += loss * batch.len() as f64;
            seen += batch.len() as f64;
        }
        let val_loss = model::mean_loss(&params, model_cfg, val, cfg.positive_weight)?;
        epochs.push(EpochLog {
            epoch,
            train_loss: train_loss / seen,
            val_loss,
        });
        if val_loss < best.1 {
            best = (params.clone(), val_loss, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (params, best_val_loss, best_epoch) = best;
    Ok((
        params,
        TrainLog {
            epochs,
            best_epoch,
            best_val_loss,
            stopped_early,
            warnings,
        },
    ))
}

/// Trains fold `fold` of `plan` over `windows`.
pub fn train_fold(
    windows: &[WindowSample],
    plan: &FoldPlan,
    fold: usize,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    let pick = |s| plan.indices(fold, s).into_iter().map(|i| &windows[i]).collect::<Vec<_>>();
    let (train, val, test) = (pick(Split::Train), pick(Split::Val), pick(Split::Test));
    if test.is_empty() {
        return Err(Error::Config(format!("fold {fold} has no test windows")));
    }
    train_windows(&train, &val, model_cfg, cfg)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Confusion::default();
        for (label, predicted) in pairs {
            match (label, predicted) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Precision, recall and F1, each 0 when its denominator is 0.
    pub fn rates(&self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// No positives predicted and none present.
    pub degenerate: bool,
}

impl FoldMetrics {
    pub fn from_confusion(fold: usize, confusion: Confusion) -> Self {
        let (precision, recall, f1) = confusion.rates();
        FoldMetrics {
            fold,
            precision,
            recall,
            f1,
            confusion,
            degenerate: confusion.tp + confusion.fp + confusion.fn_ == 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub end_frame: u64,
    pub label: bool,
    pub probability: f64,
    pub predicted: bool,
}

pub fn predict_windows(
    params: &ModelParams,
    cfg: &ModelConfig,
    windows: &[&WindowSample],
    threshold: f64,
) -> Result<Vec<Prediction>> {
    windows
        .iter()
        .map(|w| {
            let (predicted, probability) = model::predict(params, cfg, w, threshold)?;
            Ok(Prediction {
                video_id: w.video_id.clone(),
                end_frame: w.end_frame,
                label: w.label,
                probability,
                predicted,
            })
        })
        .collect()
}

/// Window-level confusion counts and P/R/F1 on `test`.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    test: &[&WindowSample],
    threshold: f64,
    fold: usize,
) -> Result<(FoldMetrics, Vec<Prediction>)> {
    if test.is_empty() {
        return Err(Error::Invalid("no test windows".into()));
    }
    let preds = predict_windows(params, cfg, test, threshold)?;
    let confusion = Confusion::from_pairs(preds.iter().map(|p| (p.label, p.predicted)));
    Ok((FoldMetrics::from_confusion(fold, confusion), preds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub resamples: usize,
    pub seed: u64,
    pub lower: f64,
    pub upper: f64,
    /// Half the width of the percentile interval.
    pub half_width: f64,
}

/// Fold mean and normal-approximation half-width `1.96·sd/√n`.
pub fn aggregate_cv(f1s: &[f64]) -> Result<(f64, f64)> {
    let n = f1s.len();
    if n < 2 {
        return Err(Error::Invalid(format!("need ≥ 2 folds to aggregate, got {n}")));
    }
    let mean = f1s.iter().sum::<f64>() / n as f64;
    let var = f1s.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, 1.96 * var.sqrt() / (n as f64).sqrt()))
}

/// Percentile bootstrap of pooled window-level F1.
pub fn bootstrap_f1(predictions: &[Prediction], resamples: usize, seed: u64) -> Result<BootstrapCi> {
    if predictions.is_empty() || resamples == 0 {
        return Err(Error::Invalid("bootstrap needs predictions and ≥ 1 resample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = predictions.len();
    let mut f1s: Vec<f64> = (0..resamples)
        .map(|_| {
            Confusion::from_pairs((0..n).map(|_| {
                let p = &predictions[rng.gen_range(0..n)];
                (p.label, p.predicted)
            }))
            .rates()
            .2
        })
        .collect();
    f1s.sort_by(f64::total_cmp);
    let at = |q: f64| f1s[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    let (lower, upper) = (at(0.025), at(0.975));
    Ok(BootstrapCi {
        resamples,
        seed,
        lower,
        upper,
        half_width: (upper - lower) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRate {
    /// Positive windows carrying the category.
    pub count: usize,
    pub hits: usize,
    /// `None` when `count` is 0.
    pub rate: Option<f64>,
}

/// True-positive rate per category over positive windows; a window with
/// several categories counts toward each. Every category gets an entry.
pub fn tpr_from_predictions(windows: &[&WindowSample], predicted: &[bool]) -> BTreeMap<BehaviorCategory, CategoryRate> {
    let mut out: BTreeMap<_, _> = BehaviorCategory::ALL
        .iter()
        .map(|&c| (c, CategoryRate { count: 0, hits: 0, rate: None }))
        .collect();
    for (w, &p) in windows.iter().zip(predicted) {
        if !w.label {
            continue;
        }
        for c in &w.categories {
            let e = out.get_mut(c).expect("all categories present");
            e.count += 1;
            e.hits += p as usize;
        }
    }
    for e in out.values_mut() {
        e.rate = (e.count > 0).then(|| e.hits as f64 / e.count as f64);
    }
    out
}

pub fn tpr_per_category(
    params: &ModelParams,
    cfg: &ModelConfig,
    test: &[&WindowSample],
    threshold: f64,
) -> Result<BTreeMap<BehaviorCategory, CategoryRate>> {
    let preds = predict_windows(params, cfg, test, threshold)?;
    let flags: Vec<bool> = preds.iter().map(|p| p.predicted).collect();
    Ok(tpr_from_predictions(test, &flags))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub mean_seconds: f64,
    pub stddev_seconds: f64,
    pub runs: usize,
    pub warmups: usize,
    pub clip_count: usize,
    pub window_count: usize,
}

pub const BENCH_BATCH: usize = 16;
pub const BENCH_WARMUPS: usize = 2;

/// Wall-clock of forward passes over every clip in batches of 16, averaged
/// over `runs` timed passes after `warmups` untimed ones.
pub fn benchmark_inference(
    params: &ModelParams,
    cfg: &ModelConfig,
    clips: &[Vec<WindowSample>],
    runs: usize,
    warmups: usize,
) -> Result<RuntimeStats> {
    let window_count: usize = clips.iter().map(Vec::len).sum();
    if window_count == 0 || runs == 0 {
        return Err(Error::Invalid("benchmark needs ≥ 1 window and ≥ 1 run".into()));
    }
    let pass = || -> Result<f64> {
        let start = Instant::now();
        let mut sink = 0.0;
        for clip in clips {
            for batch in clip.chunks(BENCH_BATCH) {
                for w in batch {
                    sink += model::forward(params, cfg, w)?.logit;
                }
            }
        }
        std::hint::black_box(sink);
        Ok(start.elapsed().as_secs_f64())
    };
    for _ in 0..warmups {
        pass()?;
    }
    let times = (0..runs).map(|_| pass()).collect::<Result<Vec<_>>>()?;
    let mean = times.iter().sum::<f64>() / runs as f64;
    let var = if runs > 1 {
        times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (runs - 1) as f64
    } else {
        0.0
    };
    Ok(RuntimeStats {
        mean_seconds: mean,
        stddev_seconds: var.sqrt(),
        runs,
        warmups,
        clip_count: clips.len(),
        window_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub threshold: f64,
    pub folds: Vec<FoldMetrics>,
    pub f1_mean: f64,
    pub f1_ci95: f64,
    /// `"fold_normal"`; the bootstrap interval is reported alongside when enabled.
    pub ci_method: String,
    pub bootstrap: Option<BootstrapCi>,
    pub tpr_per_category: BTreeMap<BehaviorCategory, CategoryRate>,
    pub runtime_stats: Option<RuntimeStats>,
}

/// Output of one cross-validated fold.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub params: ModelParams,
    pub log: TrainLog,
    pub metrics: FoldMetrics,
    pub predictions: Vec<Prediction>,
}

/// Fold seeds are `seed + fold`, so results do not depend on `jobs`.
pub fn fold_train_config(cfg: &TrainConfig, fold: usize) -> TrainConfig {
    TrainConfig {
        seed: cfg.seed.wrapping_add(fold as u64),
        ..cfg.clone()
    }
}

/// Trains and evaluates every fold, up to `jobs` folds at a time.
pub fn cross_validate(
    windows: &[WindowSample],
    plan: &FoldPlan,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    threshold: f64,
    jobs: usize,
) -> Result<Vec<FoldOutcome>> {
    let run = |fold: usize| -> Result<FoldOutcome> {
        let (params, log) = train_fold(windows, plan, fold, model_cfg, &fold_train_config(cfg, fold))?;
        let test: Vec<&WindowSample> = plan.indices(fold, Split::Test).into_iter().map(|i| &windows[i]).collect();
        let (metrics, predictions) = evaluate(&params, model_cfg, &test, threshold, fold)?;
        Ok(FoldOutcome {
            fold,
            params,
            log,
            metrics,
            predictions,
        })
    };
    let folds: Vec<usize> = (0..plan.fold_count).collect();
    let mut out = Vec::with_capacity(folds.len());
    for group in folds.chunks(jobs.max(1)) {
        let results: Vec<Result<FoldOutcome>> = std::thread::scope(|s| {
            let handles: Vec<_> = group.iter().map(|&f| s.spawn(move || run(f))).collect();
            handles.into_iter().map(|h| h.join().expect("fold thread panicked")).collect()
        });
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

/// Builds the report from fold outcomes; `bootstrap` is `(resamples, seed)`.
pub fn build_report(
    variant: Variant,
    windows: &[WindowSample],
    plan: &FoldPlan,
    outcomes: &[FoldOutcome],
    threshold: f64,
    bootstrap: Option<(usize, u64)>,
) -> Result<EvalReport> {
    let f1s: Vec<f64> = outcomes.iter().map(|o| o.metrics.f1).collect();
    let (f1_mean, f1_ci95) = aggregate_cv(&f1s)?;
    let mut test_windows = Vec::new();
    let mut flags = Vec::new();
    for o in outcomes {
        for (i, p) in plan.indices(o.fold, Split::Test).into_iter().zip(&o.predictions) {
            test_windows.push(&windows[i]);
            flags.push(p.predicted);
        }
    }
    let pooled: Vec<Prediction> = outcomes.iter().flat_map(|o| o.predictions.iter().cloned()).collect();
    let bootstrap = bootstrap
        .map(|(n, seed)| bootstrap_f1(&pooled, n, seed))
        .transpose()?;
    Ok(EvalReport {
        variant,
        threshold,
        folds: outcomes.iter().map(|o| o.metrics.clone()).collect(),
        f1_mean,
        f1_ci95,
        ci_method: "fold_normal".into(),
        bootstrap,
        tpr_per_category: tpr_from_predictions(&test_windows, &flags),
        runtime_stats: None,
    })
}

/// Plain-text results table, one row per report.
pub fn results_table(reports: &[EvalReport]) -> String {
    let mark = |b: bool| if b { "✓" } else { "" };
    let mut s = String::new();
    let _ = writeln!(s, "{:<8} {:^5} {:^5} {:^5}  {:<14} {:>11}", "Model", "J-Att", "T-Att", "P-Att", "F1", "Runtime(s)");
    for r in reports {
        let v = r.variant;
        let runtime = r
            .runtime_stats
            .as_ref()
            .map(|t| format!("{:.4}", t.mean_seconds))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<8} {:^5} {:^5} {:^5}  {:<14} {:>11}",
            v.label(),
            mark(v.has_joint_attention()),
            mark(v.has_time_attention()),
            mark(v.has_person_attention()),
            format!("{:.3} ± {:.3}", r.f1_mean, r.f1_ci95),
            runtime
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_formula_examples() {
        let c = Confusion { tp: 3, fp: 1, tn: 0, fn_: 1 };
        let (p, r, f1) = c.rates();
        assert_eq!((p, r), (0.75, 0.75));
        assert!((f1 - 0.75).abs() < 1e-15);

        let all_right = Confusion::from_pairs([(true, true), (false, false), (true, true)]);
        assert_eq!(all_right.rates().2, 1.0);

        let m = FoldMetrics::from_confusion(0, Confusion { tp: 0, fp: 0, tn: 7, fn_: 0 });
        assert_eq!(m.f1, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn aggregate_examples() {
        let (m, ci) = aggregate_cv(&[0.8, 0.8, 0.8]).unwrap();
        assert!((m - 0.8).abs() < 1e-15 && ci.abs() < 1e-15);
        let (m, ci) = aggregate_cv(&[0.7, 0.8]).unwrap();
        assert!((m - 0.75).abs() < 1e-15);
        let sd = 0.1 / 2f64.sqrt();
        assert!((ci - 1.96 * sd / 2f64.sqrt()).abs() < 1e-12);
        assert!((ci - 0.098).abs() < 5e-4);
        assert!(aggregate_cv(&[0.5]).is_err());
    }

    #[test]
    fn bootstrap_of_perfect_predictions_is_tight() {
        let preds: Vec<Prediction> = (0..40)
            .map(|i| Prediction {
                video_id: "v".into(),
                end_frame: i,
                label: i % 2 == 0,
                probability: 0.5,
                predicted: i % 2 == 0,
            })
            .collect();
        let ci = bootstrap_f1(&preds, 500, 3).unwrap();
        assert_eq!((ci.lower, ci.upper, ci.half_width), (1.0, 1.0, 0.0));
        assert_eq!(bootstrap_f1(&preds, 500, 3).unwrap(), ci);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}

mod common;

use behavior_attn::dataset::WindowSample;
use behavior_attn::model::{mean_loss, Variant};
use behavior_attn::train::{
    aggregate_cv, bootstrap_f1, evaluate, tpr_from_predictions, train_windows, Confusion, Prediction, TrainConfig,
};
use behavior_attn::types::BehaviorCategory;
use common::{random_window, tiny_config};
use proptest::prelude::*;

/// Positives carry a large constant offset on every coordinate of one
/// person; negatives are small noise.
fn toy(n: usize, seed: u64) -> Vec<WindowSample> {
    (0..n)
        .map(|i| {
            let mut w = random_window(2, 8, seed * 1000 + i as u64);
            w.label = i % 2 == 0;
            for v in w.persons.iter_mut() {
                *v *= 0.1;
            }
            if w.label {
                let half = w.persons.len() / 2;
                w.persons[..half].iter_mut().for_each(|v| *v += 0.8);
                w.categories.insert(BehaviorCategory::Disruptive);
            }
            w
        })
        .collect()
}

fn refs(ws: &[WindowSample]) -> Vec<&WindowSample> {
    ws.iter().collect()
}

#[test]
fn separable_toy_is_learned_perfectly() {
    let (train, val, test) = (toy(64, 1), toy(16, 2), toy(32, 3));
    let cfg = tiny_config(Variant::PAtt);
    let tc = TrainConfig {
        lr: 1e-2,
        batch_size: 8,
        max_epochs: 60,
        patience: 10,
        ..TrainConfig::default()
    };
    let (params, log) = train_windows(&refs(&train), &refs(&val), &cfg, &tc).unwrap();
    assert!(log.best_val_loss < 0.1, "{log:?}");
    let (m, _) = evaluate(&params, &cfg, &refs(&test), 0.5, 0).unwrap();
    assert_eq!(m.f1, 1.0, "{m:?}");
}

#[test]
fn training_is_deterministic() {
    let (train, val) = (toy(24, 4), toy(8, 5));
    let cfg = tiny_config(Variant::PtjAtt);
    let tc = TrainConfig {
        max_epochs: 3,
        batch_size: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train_windows(&refs(&train), &refs(&val), &cfg, &tc).unwrap();
    let b = train_windows(&refs(&train), &refs(&val), &cfg, &tc).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let c = train_windows(&refs(&train), &refs(&val), &cfg, &TrainConfig { seed: 10, ..tc }).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn early_stopping_returns_the_best_epoch() {
    let train = toy(48, 6);
    let mut val = toy(16, 7);
    for w in &mut val {
        w.label = !w.label;
    }
    let cfg = tiny_config(Variant::PAtt);
    let tc = TrainConfig {
        lr: 1e-2,
        batch_size: 8,
        max_epochs: 100,
        patience: 3,
        ..TrainConfig::default()
    };
    let (params, log) = train_windows(&refs(&train), &refs(&val), &cfg, &tc).unwrap();
    assert!(log.stopped_early);
    assert_eq!(log.epochs.len(), log.best_epoch + 3);
    let best = log.epochs[log.best_epoch - 1].val_loss;
    assert_eq!(best, log.best_val_loss);
    assert!(log.epochs.iter().all(|e| e.val_loss >= best));
    let again = mean_loss(&params, &cfg, &refs(&val), 1.0).unwrap();
    assert!((again - best).abs() < 1e-12);
}

#[test]
fn single_class_training_warns() {
    let mut train = toy(8, 8);
    train.iter_mut().for_each(|w| w.label = false);
    let tc = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };
    let (_, log) = train_windows(&refs(&train), &refs(&toy(4, 9)), &tiny_config(Variant::Tcn), &tc).unwrap();
    assert_eq!(log.warnings.len(), 1);
}

#[test]
fn fold_interval_arithmetic() {
    let (mean, ci) = aggregate_cv(&[0.8, 0.9, 1.0]).unwrap();
    assert!((mean - 0.9).abs() < 1e-15);
    assert!((ci - 1.96 * 0.1 / 3f64.sqrt()).abs() < 1e-15);
    assert_eq!(aggregate_cv(&[0.5, 0.5]).unwrap(), (0.5, 0.0));
    assert!(aggregate_cv(&[0.5]).is_err());
}

#[test]
fn zero_denominators_give_zero() {
    let c = Confusion { tp: 0, fp: 0, tn: 10, fn_: 0 };
    assert_eq!(c.rates(), (0.0, 0.0, 0.0));
    let c = Confusion { tp: 3, fp: 1, tn: 5, fn_: 2 };
    let (p, r, f1) = c.rates();
    assert_eq!((p, r), (0.75, 0.6));
    assert!((f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
}

#[test]
fn tpr_counts_each_category() {
    let mut ws = toy(6, 10);
    ws[2].categories.insert(BehaviorCategory::Aggressive);
    let flags = [true, false, false, false, true, false];
    let rates = tpr_from_predictions(&refs(&ws), &flags);
    let d = &rates[&BehaviorCategory::Disruptive];
    assert_eq!((d.count, d.hits), (3, 2));
    let a = &rates[&BehaviorCategory::Aggressive];
    assert_eq!((a.count, a.hits, a.rate), (1, 0, Some(0.0)));
    assert_eq!(rates[&BehaviorCategory::Elopement].rate, None);
    assert_eq!(rates.len(), 6);
}

fn predictions() -> impl Strategy<Value = Vec<Prediction>> {
    prop::collection::vec((any::<bool>(), any::<bool>()), 1..80).prop_map(|pairs| {
        pairs
            .into_iter()
            .enumerate()
            .map(|(i, (label, predicted))| Prediction {
                video_id: "v".into(),
                end_frame: i as u64,
                label,
                probability: if predicted { 0.9 } else { 0.1 },
                predicted,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bootstrap_interval_is_ordered_and_reproducible(preds in predictions(), seed in any::<u64>()) {
        let a = bootstrap_f1(&preds, 200, seed).unwrap();
        prop_assert!(0.0 <= a.lower && a.lower <= a.upper && a.upper <= 1.0);
        prop_assert!((a.half_width - (a.upper - a.lower) / 2.0).abs() < 1e-15);
        prop_assert_eq!(bootstrap_f1(&preds, 200, seed).unwrap(), a);
    }

    #[test]
    fn f1_is_bounded_and_symmetric_in_errors(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
        let (p, r, f1) = Confusion { tp, fp, tn, fn_ }.rates();
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&f1));
        let (_, _, swapped) = Confusion { tp, fp: fn_, tn, fn_: fp }.rates();
        prop_assert!((f1 - swapped).abs() < 1e-12);
        if tp > 0 {
            prop_assert!((f1 - 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64).abs() < 1e-12);
        }
    }
}

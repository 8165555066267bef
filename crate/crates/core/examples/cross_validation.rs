//! Cross-validated training of the person-attention model on synthetic
//! scenes, with a fold-level and a bootstrap interval on F1.

use std::time::Instant;

use behavior_attn::dataset::{make_windows, plan_folds, WindowConfig};
use behavior_attn::model::{ModelConfig, Variant};
use behavior_attn::synth::{generate_synthetic_scene, scene_tracks, MotifKind, MotifPlan, SynthSceneSpec};
use behavior_attn::train::{aggregate_cv, bootstrap_f1, cross_validate, TrainConfig};

fn main() -> behavior_attn::Result<()> {
    let plan = MotifPlan {
        count: 2,
        min_seconds: 20.0,
        max_seconds: 30.0,
        kinds: vec![MotifKind::Jump, MotifKind::HeadShake],
    };
    let (mut tracks, mut episodes) = (Vec::new(), Vec::new());
    for s in 0..8 {
        let spec = SynthSceneSpec::with_random_motifs(format!("scene{s:02}"), 3, 120 * 30, 30.0, 1.5, &plan, 100 + s)?;
        let scene = generate_synthetic_scene(&spec)?;
        tracks.push(scene_tracks(&spec, &scene));
        episodes.extend(scene.episodes);
    }
    let cfg = WindowConfig {
        stride_frames: 60,
        ..WindowConfig::default()
    };
    let windows = make_windows(&tracks, &episodes, &cfg)?.windows;
    let positives = windows.iter().filter(|w| w.label).count();
    println!("{} windows, {positives} positive", windows.len());

    let folds = plan_folds(&windows, 3, 0)?;
    let model = ModelConfig::compact(Variant::PAtt, 120);
    let tc = TrainConfig {
        lr: 3e-3,
        batch_size: 8,
        max_epochs: 15,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let outcomes = cross_validate(&windows, &folds, &model, &tc, 0.5, jobs)?;
    for o in &outcomes {
        println!(
            "fold {}: best epoch {}, precision {:.3} recall {:.3} F1 {:.3}",
            o.fold, o.log.best_epoch, o.metrics.precision, o.metrics.recall, o.metrics.f1
        );
    }
    let f1s: Vec<f64> = outcomes.iter().map(|o| o.metrics.f1).collect();
    let (mean, half) = aggregate_cv(&f1s)?;
    let predictions: Vec<_> = outcomes.iter().flat_map(|o| o.predictions.clone()).collect();
    let boot = bootstrap_f1(&predictions, 1000, 0)?;
    println!("F1 {mean:.3} ± {half:.3} over folds, bootstrap [{:.3}, {:.3}]", boot.lower, boot.upper);
    println!("trained in {:.1?}", start.elapsed());
    Ok(())
}

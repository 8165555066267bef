//! Cut labeled multi-person windows and plan leakage-free folds.

use behavior_attn::dataset::{make_windows, plan_folds, Split, Task, WindowConfig};
use behavior_attn::synth::{generate_synthetic_scene, scene_tracks, MotifKind, MotifPlan, SynthSceneSpec};

fn main() -> behavior_attn::Result<()> {
    let plan = MotifPlan {
        count: 2,
        min_seconds: 10.0,
        max_seconds: 20.0,
        kinds: vec![MotifKind::Jump, MotifKind::HeadShake],
    };
    let (mut tracks, mut episodes) = (Vec::new(), Vec::new());
    for s in 0..4 {
        let spec = SynthSceneSpec::with_random_motifs(format!("room{s}"), 3, 90 * 30, 30.0, 1.0, &plan, s)?;
        let scene = generate_synthetic_scene(&spec)?;
        tracks.push(scene_tracks(&spec, &scene));
        episodes.extend(scene.episodes);
    }

    for task in [Task::Detect, Task::Predict] {
        let cfg = WindowConfig {
            task,
            horizon_seconds: 10.0,
            ..WindowConfig::default()
        };
        let set = make_windows(&tracks, &episodes, &cfg)?;
        let positives = set.windows.iter().filter(|w| w.label).count();
        println!("{task:?}: {} windows, {positives} positive", set.windows.len());
    }

    let windows = make_windows(&tracks, &episodes, &WindowConfig::default())?.windows;
    let folds = plan_folds(&windows, 5, 0)?;
    println!("{} blocks", folds.block_count);
    for f in 0..folds.fold_count {
        let n = |s| folds.indices(f, s).len();
        println!("fold {f}: train {} val {} test {}", n(Split::Train), n(Split::Val), n(Split::Test));
    }
    Ok(())
}

//! Train on one fold, cluster the attended person's features over confident
//! positive windows and render the representative as an SVG strip.

use behavior_attn::dataset::{make_windows, plan_folds, WindowConfig};
use behavior_attn::model::{ModelConfig, Variant};
use behavior_attn::phenotype::{extract_phenotype, render_svg, PhenotypeConfig};
use behavior_attn::synth::{generate_synthetic_scene, scene_tracks, MotifKind, MotifPlan, SynthSceneSpec};
use behavior_attn::train::{train_fold, TrainConfig};
use behavior_attn::types::BehaviorCategory;

fn main() -> behavior_attn::Result<()> {
    let plan = MotifPlan {
        count: 2,
        min_seconds: 20.0,
        max_seconds: 30.0,
        kinds: vec![MotifKind::Jump],
    };
    let (mut tracks, mut episodes) = (Vec::new(), Vec::new());
    for s in 0..6 {
        let spec = SynthSceneSpec::with_random_motifs(format!("scene{s:02}"), 3, 120 * 30, 30.0, 1.5, &plan, 200 + s)?;
        let scene = generate_synthetic_scene(&spec)?;
        tracks.push(scene_tracks(&spec, &scene));
        episodes.extend(scene.episodes);
    }
    let cfg = WindowConfig {
        stride_frames: 60,
        ..WindowConfig::default()
    };
    let windows = make_windows(&tracks, &episodes, &cfg)?.windows;
    let folds = plan_folds(&windows, 3, 0)?;
    let model = ModelConfig::compact(Variant::PAtt, 120);
    let tc = TrainConfig {
        lr: 3e-3,
        batch_size: 8,
        max_epochs: 15,
        ..TrainConfig::default()
    };
    let (params, log) = train_fold(&windows, &folds, 0, &model, &tc)?;
    println!("trained {} epochs, best val loss {:.4}", log.epochs.len(), log.best_val_loss);

    let pc = PhenotypeConfig {
        k: 3,
        floor: 0.5,
        ..PhenotypeConfig::default()
    };
    let result = extract_phenotype(&params, &model, &windows, &tracks, BehaviorCategory::RestrictedRepetitive, &pc)?;
    println!("{} qualifying windows", result.qualifying_windows);
    for c in &result.clusters {
        println!("  medoid {}@{} track {}: {} members", c.medoid.video_id, c.medoid.end_frame, c.medoid_track_id, c.member_count);
    }
    let rep = &result.representative;
    println!("representative: track {} frames {}..={}", rep.track_id, rep.first_frame, rep.last_frame);

    let path = std::env::temp_dir().join("phenotype.svg");
    std::fs::write(&path, render_svg(&result, &tracks)).map_err(|e| behavior_attn::Error::Invalid(e.to_string()))?;
    println!("wrote {}", path.display());
    Ok(())
}

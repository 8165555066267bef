//! Inference timing of the four model variants on the same clips. The
//! backbone is narrow and the attention heads full width, so the cost each
//! head adds stands out from timer noise.

use behavior_attn::dataset::{make_windows, WindowConfig};
use behavior_attn::model::{ModelConfig, ModelParams, Variant};
use behavior_attn::synth::{generate_synthetic_scene, scene_tracks, SynthSceneSpec};
use behavior_attn::train::benchmark_inference;

fn main() -> behavior_attn::Result<()> {
    let mut clips = Vec::new();
    for s in 0..4 {
        let spec = SynthSceneSpec {
            video_id: format!("clip{s}"),
            person_count: 4,
            duration_frames: 240,
            fps: 30.0,
            motif_schedule: vec![],
            noise_std: 1.0,
            seed: s,
        };
        let scene = generate_synthetic_scene(&spec)?;
        let cfg = WindowConfig {
            stride_frames: 120,
            ..WindowConfig::default()
        };
        clips.push(make_windows(&[scene_tracks(&spec, &scene)], &[], &cfg)?.windows);
    }
    for variant in Variant::ALL {
        let cfg = ModelConfig {
            backbone_channels: vec![8, 8, 8, 8],
            ..ModelConfig::full(variant, 120)
        };
        let params = ModelParams::init(&cfg, 0)?;
        let stats = benchmark_inference(&params, &cfg, &clips, 20, 3)?;
        println!(
            "{:>8}: {:.2} ± {:.2} ms for {} windows ({} params)",
            variant.label(),
            stats.mean_seconds * 1e3,
            stats.stddev_seconds * 1e3,
            stats.window_count,
            params.param_count()
        );
    }
    Ok(())
}

//! Train every model variant briefly on a scene with one jumper, then read
//! out the person, time and joint attention on a jumping window.

use behavior_attn::dataset::{make_windows, WindowConfig};
use behavior_attn::model::{forward, ModelConfig, Variant};
use behavior_attn::synth::{generate_synthetic_scene, scene_tracks, MotifKind, ScheduledMotif, SynthSceneSpec};
use behavior_attn::train::{train_windows, TrainConfig};
use behavior_attn::types::{BehaviorCategory, JOINT_COUNT, JOINT_NAMES};

fn main() -> behavior_attn::Result<()> {
    let spec = SynthSceneSpec {
        video_id: "gym".into(),
        person_count: 4,
        duration_frames: 1800,
        fps: 30.0,
        motif_schedule: vec![ScheduledMotif {
            person: 2,
            category: BehaviorCategory::RestrictedRepetitive,
            onset: 600,
            offset: 1199,
            motif: MotifKind::Jump,
        }],
        noise_std: 1.0,
        seed: 5,
    };
    let scene = generate_synthetic_scene(&spec)?;
    let tracks = vec![scene_tracks(&spec, &scene)];
    let windows = make_windows(&tracks, &scene.episodes, &WindowConfig::default())?.windows;
    let (train, val): (Vec<_>, Vec<_>) = windows.iter().partition(|w| w.end_frame % 90 != 29);
    let w = windows.iter().find(|w| w.end_frame == 929).expect("held-out window inside the jump");
    println!(
        "{} training windows; reading held-out window ending at frame {}: {} persons, tracks {:?}, jumper is track {:?}",
        train.len(),
        w.end_frame,
        w.person_count(),
        w.track_ids,
        w.actor_track_id
    );
    let train_cfg = TrainConfig {
        lr: 3e-3,
        batch_size: 8,
        max_epochs: 6,
        ..TrainConfig::default()
    };

    for variant in Variant::ALL {
        let cfg = ModelConfig::compact(variant, w.frames);
        let (params, _) = train_windows(&train, &val, &cfg, &train_cfg)?;
        let rec = forward(&params, &cfg, w)?;
        let persons: Vec<String> = rec.a_person.iter().map(|a| format!("{a:.3}")).collect();
        let mut line = format!("{:>8}: p = {:.3}, persons [{}]", variant.label(), rec.probability(), persons.join(", "));
        // Heads a variant lacks are uniform; only report the ones it has.
        let k = rec.attended_person();
        if variant.has_person_attention() {
            line += &format!(", attended track {}", w.track_ids[k]);
        }
        if variant.has_time_attention() {
            let a_time = &rec.a_time[k * rec.frames..(k + 1) * rec.frames];
            let peak = (0..rec.frames).max_by(|&a, &b| a_time[a].total_cmp(&a_time[b])).unwrap();
            line += &format!(", time peak t={peak}");
        }
        if variant.has_joint_attention() {
            let mut joint_mass = [0.0; JOINT_COUNT];
            for t in 0..rec.frames {
                for (j, m) in joint_mass.iter_mut().enumerate() {
                    *m += rec.a_joint[(k * rec.frames + t) * JOINT_COUNT + j] / rec.frames as f64;
                }
            }
            let top = (0..JOINT_COUNT).max_by(|&a, &b| joint_mass[a].total_cmp(&joint_mass[b])).unwrap();
            line += &format!(", top joint {}", JOINT_NAMES[top]);
        }
        println!("{line}");
    }
    Ok(())
}

//! Link per-frame detections into tracks and normalize one track.

use behavior_attn::synth::{generate_synthetic_scene, SynthSceneSpec};
use behavior_attn::tracking::{normalize_track, TrackSet};

fn main() -> behavior_attn::Result<()> {
    let spec = SynthSceneSpec {
        video_id: "hall".into(),
        person_count: 5,
        duration_frames: 300,
        fps: 30.0,
        motif_schedule: vec![],
        noise_std: 2.0,
        seed: 3,
    };
    let scene = generate_synthetic_scene(&spec)?;
    let set = TrackSet::build("hall", 30.0, &scene.frames, None);
    for t in &set.tracks {
        println!(
            "track {}: frames {}..={}, detection {:?}",
            t.track_id,
            t.start_frame,
            t.end_frame(),
            t.dominant_detection_id()
        );
    }

    let track = &set.tracks[0];
    let norm = normalize_track(track, 0..=119)?;
    let nose = norm.coords[0][0];
    println!("normalized nose at frame 0: ({:.3}, {:.3})", nose[0], nose[1]);
    Ok(())
}

//! Generate a synthetic classroom scene with planted motifs and write it
//! out as a pose stream plus an annotation file.

use behavior_attn::synth::{generate_synthetic_scene, MotifKind, MotifPlan, SynthSceneSpec};
use behavior_attn::types::{read_pose_stream, write_annotations, write_pose_stream};

fn main() -> behavior_attn::Result<()> {
    let plan = MotifPlan {
        count: 3,
        min_seconds: 5.0,
        max_seconds: 12.0,
        kinds: vec![MotifKind::Jump, MotifKind::HeadShake],
    };
    let spec = SynthSceneSpec::with_random_motifs("classroom", 4, 60 * 30, 30.0, 1.5, &plan, 42)?;
    let scene = generate_synthetic_scene(&spec)?;
    println!("{} frames, {} persons", scene.frames.len(), spec.person_count);
    for e in &scene.episodes {
        println!("  {:?} frames {}..={} by {:?}", e.category, e.onset_frame, e.offset_frame, e.subject_id);
    }

    let dir = std::env::temp_dir().join("behavior-attn-synth");
    std::fs::create_dir_all(&dir).map_err(|e| behavior_attn::Error::Invalid(e.to_string()))?;
    let stream = dir.join("classroom.poses.jsonl");
    write_pose_stream(&stream, &scene.frames)?;
    write_annotations(&dir.join("annotations.csv"), &scene.episodes)?;
    assert_eq!(read_pose_stream(&stream)?.len(), scene.frames.len());
    println!("wrote {}", dir.display());
    Ok(())
}

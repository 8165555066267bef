//! Synthetic classroom scenes: seated people with pose jitter plus planted
//! behavior motifs, with matching annotations and ground-truth actors.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AnnotationEpisode, BehaviorCategory, Keypoint, PoseFrame, Skeleton, JOINT_COUNT};

/// Standing pose relative to the hip center, in pixels (y grows downward).
const TEMPLATE: [[f64; 2]; JOINT_COUNT] = [
    [0.0, -80.0],
    [4.0, -84.0],
    [-4.0, -84.0],
    [9.0, -82.0],
    [-9.0, -82.0],
    [18.0, -60.0],
    [-18.0, -60.0],
    [22.0, -32.0],
    [-22.0, -32.0],
    [24.0, -8.0],
    [-24.0, -8.0],
    [10.0, 0.0],
    [-10.0, 0.0],
    [11.0, 40.0],
    [-11.0, 40.0],
    [11.0, 80.0],
    [-11.0, 80.0],
];
const TORSO_LENGTH: f64 = 60.0;
const HEAD_WIDTH: f64 = 18.0;

pub const JUMP_HZ: f64 = 1.5;
pub const HEAD_SHAKE_HZ: f64 = 2.5;
/// Fraction of the body displacement carried by knees and ankles during a
/// jump; the feet stay nearer the floor than the hips.
const JUMP_KNEE_FOLLOW: f64 = 0.6;
const JUMP_ANKLE_FOLLOW: f64 = 0.25;
const LEAVE_DISTANCE: f64 = 400.0;
const LEAVE_WALK_SECONDS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotifKind {
    Jump,
    HeadShake,
    LeaveSeat,
}

impl MotifKind {
    pub fn default_category(self) -> BehaviorCategory {
        match self {
            MotifKind::Jump => BehaviorCategory::RestrictedRepetitive,
            MotifKind::HeadShake => BehaviorCategory::Disruptive,
            MotifKind::LeaveSeat => BehaviorCategory::OutOfSeat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledMotif {
    pub person: usize,
    pub category: BehaviorCategory,
    pub onset: u64,
    pub offset: u64,
    pub motif: MotifKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSceneSpec {
    pub video_id: String,
    pub person_count: usize,
    pub duration_frames: u64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub motif_schedule: Vec<ScheduledMotif>,
    #[serde(default)]
    pub noise_std: f64,
    pub seed: u64,
}

fn default_fps() -> f64 {
    crate::types::DEFAULT_FPS
}

/// How many motifs to plant and how long each lasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifPlan {
    pub count: usize,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub kinds: Vec<MotifKind>,
}

impl SynthSceneSpec {
    /// A scene with `plan.count` non-overlapping motifs on random actors,
    /// spaced evenly through the recording.
    pub fn with_random_motifs(
        video_id: impl Into<String>,
        person_count: usize,
        duration_frames: u64,
        fps: f64,
        noise_std: f64,
        plan: &MotifPlan,
        seed: u64,
    ) -> Result<Self> {
        if plan.kinds.is_empty() && plan.count > 0 {
            return Err(Error::Config("motif plan has no motif kinds".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let slot = duration_frames / plan.count.max(1) as u64;
        let mut schedule = Vec::with_capacity(plan.count);
        for i in 0..plan.count {
            let len = (rng.gen_range(plan.min_seconds..=plan.max_seconds) * fps).round() as u64;
            if len == 0 || len >= slot {
                return Err(Error::Config(format!(
                    "motif of {len} frames does not fit a {slot}-frame slot"
                )));
            }
            let start = i as u64 * slot + rng.gen_range(0..slot - len);
            let motif = plan.kinds[rng.gen_range(0..plan.kinds.len())];
            schedule.push(ScheduledMotif {
                person: rng.gen_range(0..person_count),
                category: motif.default_category(),
                onset: start,
                offset: start + len - 1,
                motif,
            });
        }
        Ok(SynthSceneSpec {
            video_id: video_id.into(),
            person_count,
            duration_frames,
            fps,
            motif_schedule: schedule,
            noise_std,
            seed,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Config("fps must be positive and noise_std nonnegative".into()));
        }
        let mut by_person: BTreeMap<usize, Vec<&ScheduledMotif>> = BTreeMap::new();
        for m in &self.motif_schedule {
            if m.person >= self.person_count {
                return Err(Error::Config(format!(
                    "motif actor {} but only {} persons",
                    m.person, self.person_count
                )));
            }
            if m.onset > m.offset || m.offset >= self.duration_frames {
                return Err(Error::Config(format!(
                    "motif interval {}..={} outside scene of {} frames",
                    m.onset, m.offset, self.duration_frames
                )));
            }
            by_person.entry(m.person).or_default().push(m);
        }
        for (person, mut motifs) in by_person {
            motifs.sort_by_key(|m| m.onset);
            for pair in motifs.windows(2) {
                if pair[1].onset <= pair[0].offset {
                    return Err(Error::Config(format!(
                        "overlapping motifs on person {person}: {}..={} and {}..={}",
                        pair[0].onset, pair[0].offset, pair[1].onset, pair[1].offset
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A family of scenes sharing one motif plan; scene `i` is seeded with
/// `seed + i` and named `{video_prefix}{i:02}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetSpec {
    pub scene_count: usize,
    pub person_count: usize,
    pub duration_seconds: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub noise_std: f64,
    pub motifs: MotifPlan,
    pub seed: u64,
    #[serde(default = "default_prefix")]
    pub video_prefix: String,
}

fn default_prefix() -> String {
    "scene".into()
}

impl SynthDatasetSpec {
    pub fn scene_specs(&self) -> Result<Vec<SynthSceneSpec>> {
        let frames = (self.duration_seconds * self.fps).round() as u64;
        (0..self.scene_count)
            .map(|i| {
                SynthSceneSpec::with_random_motifs(
                    format!("{}{i:02}", self.video_prefix),
                    self.person_count,
                    frames,
                    self.fps,
                    self.noise_std,
                    &self.motifs,
                    self.seed.wrapping_add(i as u64),
                )
            })
            .collect()
    }
}

/// Accepted shapes of a synth spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SynthSpecFile {
    Dataset(SynthDatasetSpec),
    Scenes { scenes: Vec<SynthSceneSpec> },
    Scene(SynthSceneSpec),
}

impl SynthSpecFile {
    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Replaces every seed with one derived from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        match self {
            SynthSpecFile::Dataset(d) => d.seed = seed,
            SynthSpecFile::Scenes { scenes } => {
                for (i, s) in scenes.iter_mut().enumerate() {
                    s.seed = seed.wrapping_add(i as u64);
                }
            }
            SynthSpecFile::Scene(s) => s.seed = seed,
        }
    }

    pub fn scene_specs(&self) -> Result<Vec<SynthSceneSpec>> {
        match self {
            SynthSpecFile::Dataset(d) => d.scene_specs(),
            SynthSpecFile::Scenes { scenes } => Ok(scenes.clone()),
            SynthSpecFile::Scene(s) => Ok(vec![s.clone()]),
        }
    }
}

/// Ground truth linking annotation subjects to generator detection ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorEntry {
    pub subject_id: String,
    pub detection_id: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorMap {
    pub video_id: String,
    pub actors: Vec<ActorEntry>,
}

impl ActorMap {
    /// Detection id → subject id.
    pub fn lookup(&self) -> BTreeMap<i64, String> {
        self.actors.iter().map(|a| (a.detection_id, a.subject_id.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub frames: Vec<PoseFrame>,
    pub episodes: Vec<AnnotationEpisode>,
    pub actors: ActorMap,
}

pub fn subject_name(person: usize) -> String {
    format!("p{person}")
}

fn anchor(person: usize) -> (f64, f64, f64) {
    let col = (person % 4) as f64;
    let row = (person / 4) as f64;
    let scale = 0.9 + 0.05 * ((person * 7) % 5) as f64;
    (180.0 + 300.0 * col, 200.0 + 320.0 * row, scale)
}

pub fn generate_synthetic_scene(spec: &SynthSceneSpec) -> Result<SynthScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut frames = Vec::with_capacity(spec.duration_frames as usize);
    for f in 0..spec.duration_frames {
        let mut skeletons = Vec::with_capacity(spec.person_count);
        for person in 0..spec.person_count {
            let motif = spec
                .motif_schedule
                .iter()
                .find(|m| m.person == person && m.onset <= f && f <= m.offset);
            if let Some(pose) = pose_at(person, f, motif, spec.fps) {
                let joints = pose.map(|[x, y]| {
                    if spec.noise_std > 0.0 {
                        Keypoint::new(x + noise.sample(&mut rng), y + noise.sample(&mut rng))
                    } else {
                        Keypoint::new(x, y)
                    }
                });
                skeletons.push(Skeleton::new(person as i64, joints));
            }
        }
        frames.push(PoseFrame {
            frame_index: f,
            skeletons,
        });
    }
    let episodes = spec
        .motif_schedule
        .iter()
        .map(|m| AnnotationEpisode {
            video_id: spec.video_id.clone(),
            onset_frame: m.onset,
            offset_frame: m.offset,
            category: m.category,
            subject_id: Some(subject_name(m.person)),
        })
        .collect();
    let actors = ActorMap {
        video_id: spec.video_id.clone(),
        actors: (0..spec.person_count)
            .map(|p| ActorEntry {
                subject_id: subject_name(p),
                detection_id: p as i64,
            })
            .collect(),
    };
    Ok(SynthScene {
        frames,
        episodes,
        actors,
    })
}

/// Noise-free joint positions, or `None` while the person is away.
fn pose_at(person: usize, frame: u64, motif: Option<&ScheduledMotif>, fps: f64) -> Option<[[f64; 2]; JOINT_COUNT]> {
    let (ax, ay, scale) = anchor(person);
    let mut pose = TEMPLATE.map(|[x, y]| [ax + scale * x, ay + scale * y]);
    let Some(m) = motif else { return Some(pose) };
    let t = (frame - m.onset) as f64 / fps;
    match m.motif {
        MotifKind::Jump => {
            let lift = -0.8 * TORSO_LENGTH * scale * (TAU * JUMP_HZ * t).sin();
            for (j, p) in pose.iter_mut().enumerate() {
                let follow = match j {
                    13 | 14 => JUMP_KNEE_FOLLOW,
                    15 | 16 => JUMP_ANKLE_FOLLOW,
                    _ => 1.0,
                };
                p[1] += follow * lift;
            }
        }
        MotifKind::HeadShake => {
            let dx = 0.5 * HEAD_WIDTH * scale * (TAU * HEAD_SHAKE_HZ * t).sin();
            for p in pose.iter_mut().take(5) {
                p[0] += dx;
            }
        }
        MotifKind::LeaveSeat => {
            let interval = (m.offset - m.onset + 1) as f64;
            let walk = (LEAVE_WALK_SECONDS * fps).min(interval / 2.0).max(1.0);
            let elapsed = (frame - m.onset) as f64;
            if elapsed >= walk {
                return None;
            }
            let dx = LEAVE_DISTANCE * elapsed / walk;
            for p in pose.iter_mut() {
                p[0] += dx;
            }
        }
    }
    Some(pose)
}

/// Tracks a generated scene with the default gate and links tracks to the
/// generator's subjects.
pub fn scene_tracks(spec: &SynthSceneSpec, scene: &SynthScene) -> crate::tracking::TrackSet {
    let mut set = crate::tracking::TrackSet::build(spec.video_id.clone(), spec.fps, &scene.frames, None);
    set.assign_subjects(&scene.actors.lookup());
    set
}

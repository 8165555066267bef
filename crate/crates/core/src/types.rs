//! Shared domain types, keypoint conventions and the on-disk formats for
//! pose streams, behavior annotations and stream metadata.
//!
//! Keypoints follow the 17-point COCO order:
//!
//! | idx | joint          | idx | joint          |
//! |-----|----------------|-----|----------------|
//! | 0   | nose           | 9   | left_wrist     |
//! | 1   | left_eye       | 10  | right_wrist    |
//! | 2   | right_eye      | 11  | left_hip       |
//! | 3   | left_ear       | 12  | right_hip      |
//! | 4   | right_ear      | 13  | left_knee      |
//! | 5   | left_shoulder  | 14  | right_knee     |
//! | 6   | right_shoulder | 15  | left_ankle     |
//! | 7   | left_elbow     | 16  | right_ankle    |
//! | 8   | right_elbow    |     |                |

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const JOINT_COUNT: usize = 17;
pub const LEFT_HIP: usize = 11;
pub const RIGHT_HIP: usize = 12;
pub const DEFAULT_FPS: f64 = 30.0;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// Skeleton edges used when drawing stick figures.
pub const LIMBS: [(usize, usize); 16] = [
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (5, 6),
    (5, 7),
    (7, 9),
    (6, 8),
    (8, 10),
    (5, 11),
    (6, 12),
    (11, 12),
    (11, 13),
    (13, 15),
    (12, 14),
    (14, 16),
];

/// One 2D keypoint. Missing keypoints always carry `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl Keypoint {
    pub fn new(x: f64, y: f64) -> Self {
        Keypoint { x, y, valid: true }
    }

    pub fn missing() -> Self {
        Keypoint {
            x: 0.0,
            y: 0.0,
            valid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub joints: [Keypoint; JOINT_COUNT],
    pub detection_id: i64,
}

impl Skeleton {
    pub fn new(detection_id: i64, joints: [Keypoint; JOINT_COUNT]) -> Self {
        Skeleton {
            joints,
            detection_id,
        }
    }

    pub fn valid_count(&self) -> usize {
        self.joints.iter().filter(|k| k.valid).count()
    }

    /// Skeletons with fewer than two valid joints are not usable.
    pub fn is_degenerate(&self) -> bool {
        self.valid_count() < 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame_index: u64,
    pub skeletons: Vec<Skeleton>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorCategory {
    RestrictedRepetitive,
    SelfInjurious,
    Disruptive,
    Aggressive,
    Elopement,
    OutOfSeat,
}

impl BehaviorCategory {
    pub const ALL: [BehaviorCategory; 6] = [
        BehaviorCategory::RestrictedRepetitive,
        BehaviorCategory::SelfInjurious,
        BehaviorCategory::Disruptive,
        BehaviorCategory::Aggressive,
        BehaviorCategory::Elopement,
        BehaviorCategory::OutOfSeat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BehaviorCategory::RestrictedRepetitive => "restricted_repetitive",
            BehaviorCategory::SelfInjurious => "self_injurious",
            BehaviorCategory::Disruptive => "disruptive",
            BehaviorCategory::Aggressive => "aggressive",
            BehaviorCategory::Elopement => "elopement",
            BehaviorCategory::OutOfSeat => "out_of_seat",
        }
    }
}

impl fmt::Display for BehaviorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BehaviorCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        BehaviorCategory::ALL
            .iter()
            .copied()
            .find(|c| c.name() == lower)
            .ok_or_else(|| {
                let names: Vec<_> = BehaviorCategory::ALL.iter().map(|c| c.name()).collect();
                Error::Format(format!(
                    "unknown behavior category {s:?}; expected one of: {}",
                    names.join(", ")
                ))
            })
    }
}

/// An annotated behavior episode. Frame bounds are inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationEpisode {
    pub video_id: String,
    pub onset_frame: u64,
    pub offset_frame: u64,
    pub category: BehaviorCategory,
    pub subject_id: Option<String>,
}

impl AnnotationEpisode {
    pub fn covers(&self, frame_index: u64) -> bool {
        self.onset_frame <= frame_index && frame_index <= self.offset_frame
    }
}

/// Label of a single frame: whether any episode covers it, and which categories.
pub fn frame_label(
    frame_index: u64,
    episodes: &[AnnotationEpisode],
) -> (bool, BTreeSet<BehaviorCategory>) {
    let categories: BTreeSet<_> = episodes
        .iter()
        .filter(|e| e.covers(frame_index))
        .map(|e| e.category)
        .collect();
    (!categories.is_empty(), categories)
}

/// Per-stream metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub video_id: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

impl StreamMeta {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta: StreamMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if !(meta.fps.is_finite() && meta.fps > 0.0) {
            return Err(Error::Format(format!("fps must be positive, got {}", meta.fps)));
        }
        Ok(meta)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("meta serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct RawSkeleton {
    pub id: i64,
    pub joints: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    frame: u64,
    skeletons: Vec<RawSkeleton>,
}

pub(crate) fn joints_from_raw(raw: &[[f64; 3]]) -> std::result::Result<[Keypoint; JOINT_COUNT], String> {
    if raw.len() != JOINT_COUNT {
        return Err(format!(
            "skeleton has {} joints, expected {JOINT_COUNT}",
            raw.len()
        ));
    }
    let mut joints = [Keypoint::missing(); JOINT_COUNT];
    for (slot, &[x, y, v]) in joints.iter_mut().zip(raw) {
        *slot = if v == 1.0 {
            if !(x.is_finite() && y.is_finite()) {
                return Err("non-finite coordinate on a valid joint".into());
            }
            Keypoint::new(x, y)
        } else if v == 0.0 {
            Keypoint::missing()
        } else {
            return Err(format!("validity flag must be 0 or 1, got {v}"));
        };
    }
    Ok(joints)
}

pub(crate) fn joints_to_raw(joints: &[Keypoint; JOINT_COUNT]) -> Vec<[f64; 3]> {
    joints
        .iter()
        .map(|k| [k.x, k.y, if k.valid { 1.0 } else { 0.0 }])
        .collect()
}

/// Reads a JSON-lines pose stream. Frames come back sorted by index;
/// skeletons with fewer than two valid joints are dropped.
pub fn read_pose_stream(path: &Path) -> Result<Vec<PoseFrame>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut frames = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.into(),
            line: line_no,
            message,
        };
        let raw: RawFrame = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert(raw.frame) {
            return Err(Error::Format(format!(
                "line {line_no}: duplicate frame index {}",
                raw.frame
            )));
        }
        let mut ids = HashSet::new();
        let mut skeletons = Vec::with_capacity(raw.skeletons.len());
        for s in raw.skeletons {
            let joints = joints_from_raw(&s.joints)
                .map_err(|m| Error::Format(format!("line {line_no}: {m}")))?;
            if !ids.insert(s.id) {
                return Err(Error::Format(format!(
                    "line {line_no}: duplicate detection id {}",
                    s.id
                )));
            }
            let skeleton = Skeleton::new(s.id, joints);
            if !skeleton.is_degenerate() {
                skeletons.push(skeleton);
            }
        }
        frames.push(PoseFrame {
            frame_index: raw.frame,
            skeletons,
        });
    }
    frames.sort_by_key(|f| f.frame_index);
    Ok(frames)
}

pub fn write_pose_stream(path: &Path, frames: &[PoseFrame]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for frame in frames {
        let raw = RawFrame {
            frame: frame.frame_index,
            skeletons: frame
                .skeletons
                .iter()
                .map(|s| RawSkeleton {
                    id: s.detection_id,
                    joints: joints_to_raw(&s.joints),
                })
                .collect(),
        };
        let line = serde_json::to_string(&raw).expect("frame serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub const ANNOTATION_HEADER: [&str; 5] =
    ["video_id", "onset_frame", "offset_frame", "category", "subject_id"];

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationEpisode>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(file, path)
}

fn parse_annotations<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<AnnotationEpisode>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: path.into(),
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != ANNOTATION_HEADER {
        return Err(Error::Format(format!(
            "annotation header must be `{}`",
            ANNOTATION_HEADER.join(",")
        )));
    }
    let mut episodes = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        })?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let parse_frame = |i: usize| {
            field(i).parse::<u64>().map_err(|e| Error::Parse {
                path: path.into(),
                line,
                message: format!("{}: {e}", ANNOTATION_HEADER[i]),
            })
        };
        let onset_frame = parse_frame(1)?;
        let offset_frame = parse_frame(2)?;
        if onset_frame > offset_frame {
            return Err(Error::Format(format!(
                "row {line}: onset {onset_frame} is after offset {offset_frame}"
            )));
        }
        let category = field(3)
            .parse()
            .map_err(|e: Error| Error::Format(format!("row {line}: {e}")))?;
        let subject = field(4);
        episodes.push(AnnotationEpisode {
            video_id: field(0).to_string(),
            onset_frame,
            offset_frame,
            category,
            subject_id: (!subject.is_empty()).then(|| subject.to_string()),
        });
    }
    Ok(episodes)
}

pub fn write_annotations(path: &Path, episodes: &[AnnotationEpisode]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    wtr.write_record(ANNOTATION_HEADER).map_err(csv_err)?;
    for e in episodes {
        wtr.write_record([
            e.video_id.as_str(),
            &e.onset_frame.to_string(),
            &e.offset_frame.to_string(),
            e.category.name(),
            e.subject_id.as_deref().unwrap_or(""),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

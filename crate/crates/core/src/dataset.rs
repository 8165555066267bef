//! Labeled window samples and adjacency-aware cross-validation folds.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracking::{normalize_track, Track, TrackSet};
use crate::types::{frame_label, AnnotationEpisode, BehaviorCategory, JOINT_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Label by the window's last frame.
    Detect,
    /// Label by the frame one horizon after the window's last frame.
    Predict,
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "detect" => Ok(Task::Detect),
            "predict" => Ok(Task::Predict),
            _ => Err(Error::Config(format!("unknown task {s:?} (detect|predict)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_seconds: f64,
    pub stride_frames: u64,
    pub task: Task,
    pub horizon_seconds: f64,
    /// Fraction of the window a track must cover to enter it.
    pub min_coverage: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_seconds: 4.0,
            stride_frames: 30,
            task: Task::Detect,
            horizon_seconds: 180.0,
            min_coverage: 0.25,
        }
    }
}

impl WindowConfig {
    pub fn window_frames(&self, fps: f64) -> Result<usize> {
        let t = (self.window_seconds * fps).round();
        if !(t >= 2.0) {
            return Err(Error::Config(format!(
                "window of {} s at {fps} fps is shorter than 2 frames",
                self.window_seconds
            )));
        }
        if self.stride_frames == 0 {
            return Err(Error::Config("stride must be at least one frame".into()));
        }
        Ok(t as usize)
    }

    pub fn horizon_frames(&self, fps: f64) -> u64 {
        match self.task {
            Task::Detect => 0,
            Task::Predict => (self.horizon_seconds * fps).round() as u64,
        }
    }
}

/// One fixed-length multi-person sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub video_id: String,
    pub end_frame: u64,
    /// Frames per window (`T`).
    pub frames: usize,
    /// `[K, T, 17, 2]` normalized coordinates, row-major.
    pub persons: Vec<f64>,
    /// `[K, T]`: whether the person was observed (not edge-held) at each frame.
    pub presence_mask: Vec<bool>,
    pub track_ids: Vec<u32>,
    pub label: bool,
    pub categories: BTreeSet<BehaviorCategory>,
    pub actor_track_id: Option<u32>,
}

impl WindowSample {
    pub fn person_count(&self) -> usize {
        self.track_ids.len()
    }

    pub fn span(&self) -> RangeInclusive<u64> {
        self.end_frame + 1 - self.frames as u64..=self.end_frame
    }

    /// Coordinates of person `k` at frame offset `t`.
    pub fn joint(&self, k: usize, t: usize, j: usize) -> [f64; 2] {
        let at = ((k * self.frames + t) * JOINT_COUNT + j) * 2;
        [self.persons[at], self.persons[at + 1]]
    }

    /// The same window with persons reordered (`order[i]` is the old index).
    pub fn permuted(&self, order: &[usize]) -> WindowSample {
        let stride = self.frames * JOINT_COUNT * 2;
        let mut out = self.clone();
        out.persons.clear();
        out.presence_mask.clear();
        out.track_ids.clear();
        for &k in order {
            out.persons
                .extend_from_slice(&self.persons[k * stride..(k + 1) * stride]);
            out.presence_mask
                .extend_from_slice(&self.presence_mask[k * self.frames..(k + 1) * self.frames]);
            out.track_ids.push(self.track_ids[k]);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<WindowSample>,
    /// Windows skipped because no track covered enough of them.
    pub dropped_empty: usize,
    /// Prediction windows whose target frame lies past the end of the stream.
    pub dropped_horizon: usize,
}

/// Slides a window over each video and labels it from the annotations.
pub fn make_windows(
    videos: &[TrackSet],
    episodes: &[AnnotationEpisode],
    cfg: &WindowConfig,
) -> Result<WindowSet> {
    let mut set = WindowSet::default();
    for video in videos {
        let t_len = cfg.window_frames(video.fps)?;
        let horizon = cfg.horizon_frames(video.fps);
        let min_overlap = ((cfg.min_coverage * t_len as f64).ceil() as u64).max(1);
        let eps: Vec<AnnotationEpisode> = episodes
            .iter()
            .filter(|e| e.video_id == video.video_id)
            .cloned()
            .collect();
        let mut tracks: Vec<&Track> = video.tracks.iter().collect();
        tracks.sort_by_key(|t| t.track_id);

        let mut end = video.first_frame + t_len as u64 - 1;
        while end <= video.last_frame {
            let target = end + horizon;
            if target > video.last_frame {
                set.dropped_horizon += 1;
                end += cfg.stride_frames;
                continue;
            }
            let span = end + 1 - t_len as u64..=end;
            let members: Vec<&Track> = tracks
                .iter()
                .copied()
                .filter(|t| t.overlap(&span) >= min_overlap)
                .collect();
            if members.is_empty() {
                set.dropped_empty += 1;
                end += cfg.stride_frames;
                continue;
            }
            let (label, categories) = frame_label(target, &eps);
            let mut sample = WindowSample {
                video_id: video.video_id.clone(),
                end_frame: end,
                frames: t_len,
                persons: Vec::with_capacity(members.len() * t_len * JOINT_COUNT * 2),
                presence_mask: Vec::with_capacity(members.len() * t_len),
                track_ids: Vec::with_capacity(members.len()),
                label,
                categories: if cfg.task == Task::Detect || label {
                    categories
                } else {
                    BTreeSet::new()
                },
                actor_track_id: None,
            };
            for track in &members {
                push_person(&mut sample, track, &span)?;
            }
            if label {
                sample.actor_track_id = eps
                    .iter()
                    .filter(|e| e.covers(target))
                    .filter_map(|e| e.subject_id.as_deref())
                    .find_map(|subject| {
                        members
                            .iter()
                            .find(|t| t.subject_id.as_deref() == Some(subject))
                            .map(|t| t.track_id)
                    });
            }
            set.windows.push(sample);
            end += cfg.stride_frames;
        }
    }
    Ok(set)
}

/// Appends one normalized, edge-hold padded person to the window.
fn push_person(sample: &mut WindowSample, track: &Track, span: &RangeInclusive<u64>) -> Result<()> {
    let norm = normalize_track(track, span.clone())?;
    let first = norm.start_frame;
    let last = first + norm.coords.len() as u64 - 1;
    for f in span.clone() {
        let idx = f.clamp(first, last) - first;
        for c in &norm.coords[idx as usize] {
            sample.persons.extend_from_slice(c);
        }
        sample.presence_mask.push((first..=last).contains(&f));
    }
    sample.track_ids.push(track.track_id);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Per-fold split role of every window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_count: usize,
    pub seed: u64,
    /// `roles[fold][window]`.
    pub roles: Vec<Vec<Split>>,
    /// Number of independent blocks the windows were grouped into.
    pub block_count: usize,
}

pub const SPLIT_RATIOS: (f64, f64, f64) = (0.5, 0.2, 0.3);

impl FoldPlan {
    pub fn indices(&self, fold: usize, split: Split) -> Vec<usize> {
        self.roles[fold]
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn hash(&self) -> String {
        crate::provenance::sha256_bytes(serde_json::to_string(self).expect("plan serializes").as_bytes())
    }
}

/// Groups windows into blocks that no split boundary may cross: within a
/// video, windows whose end frames are less than one window apart are
/// chained into the same block.
pub fn window_blocks(windows: &[WindowSample]) -> Vec<Vec<usize>> {
    let mut by_video: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        by_video.entry(w.video_id.as_str()).or_default().push(i);
    }
    let mut blocks = Vec::new();
    for (_, mut idx) in by_video {
        idx.sort_by_key(|&i| windows[i].end_frame);
        let mut current: Vec<usize> = Vec::new();
        for i in idx {
            if let Some(&prev) = current.last() {
                let gap = windows[i].end_frame - windows[prev].end_frame;
                if gap >= windows[i].frames.max(windows[prev].frames) as u64 {
                    blocks.push(std::mem::take(&mut current));
                }
            }
            current.push(i);
        }
        if !current.is_empty() {
            blocks.push(current);
        }
    }
    blocks
}

/// Rotating 50/20/30 train/val/test assignment of shuffled blocks.
pub fn plan_folds(windows: &[WindowSample], fold_count: usize, seed: u64) -> Result<FoldPlan> {
    if fold_count < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 folds, got {fold_count}"
        )));
    }
    if windows.len() < fold_count {
        return Err(Error::Config(format!(
            "{} windows cannot fill {fold_count} folds",
            windows.len()
        )));
    }
    let mut blocks = window_blocks(windows);
    if blocks.len() < 3 {
        return Err(Error::Config(format!(
            "only {} independent block(s) of adjacent windows; train/val/test cannot be \
             separated without splitting adjacent windows. Use more videos or a stride of \
             at least one window length",
            blocks.len()
        )));
    }
    blocks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = windows.len() as f64;
    let nb = blocks.len();
    let mut roles = Vec::with_capacity(fold_count);
    for fold in 0..fold_count {
        let mut order: Vec<&Vec<usize>> = blocks.iter().collect();
        order.rotate_left(fold * nb / fold_count);
        let cum: Vec<usize> = order
            .iter()
            .scan(0, |acc, b| {
                *acc += b.len();
                Some(*acc)
            })
            .collect();
        // cut after block `i` means blocks[..=i] are on the left side
        let closest = |target: f64, lo: usize, hi: usize| {
            (lo..=hi)
                .min_by(|&a, &b| {
                    let da = (cum[a] as f64 - target).abs();
                    let db = (cum[b] as f64 - target).abs();
                    da.total_cmp(&db)
                })
                .expect("nonempty range")
        };
        let test_end = closest(SPLIT_RATIOS.2 * n, 0, nb - 3);
        let val_end = closest((SPLIT_RATIOS.2 + SPLIT_RATIOS.1) * n, test_end + 1, nb - 2);
        let mut fold_roles = vec![Split::Train; windows.len()];
        for (bi, block) in order.iter().enumerate() {
            let role = if bi <= test_end {
                Split::Test
            } else if bi <= val_end {
                Split::Val
            } else {
                Split::Train
            };
            for &w in block.iter() {
                fold_roles[w] = role;
            }
        }
        roles.push(fold_roles);
    }
    Ok(FoldPlan {
        fold_count,
        seed,
        roles,
        block_count: nb,
    })
}

//! Frame-to-frame person tracking by minimum-cost bipartite matching,
//! ghost-track filtering and hip-centered pose normalization.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::InputRef;
use crate::types::{
    joints_from_raw, joints_to_raw, PoseFrame, Skeleton, JOINT_COUNT, LEFT_HIP, RIGHT_HIP,
};

/// Cost assigned when two skeletons share no valid joint and nothing else
/// in the matrix gives a scale.
pub const FALLBACK_PENALTY: f64 = 1e6;

/// Dense row-major matrix of pose distances between two frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
    /// Entries where no joint was valid in both skeletons.
    penalized: Vec<bool>,
}

impl CostMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("cost matrix rows differ in length".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Invalid("costs must be finite and nonnegative".into()));
        }
        Ok(CostMatrix {
            rows: n,
            cols: m,
            penalized: vec![false; data.len()],
            data,
        })
    }

    /// Pairwise L2 distances between two sets of skeletons over mutually
    /// valid joints.
    pub fn between(from: &[Skeleton], to: &[Skeleton]) -> Self {
        let (rows, cols) = (from.len(), to.len());
        let mut data = vec![0.0; rows * cols];
        let mut penalized = vec![false; rows * cols];
        let mut max_finite: f64 = 0.0;
        for (i, a) in from.iter().enumerate() {
            for (j, b) in to.iter().enumerate() {
                match pose_distance(a, b) {
                    Some(d) => {
                        data[i * cols + j] = d;
                        max_finite = max_finite.max(d);
                    }
                    None => penalized[i * cols + j] = true,
                }
            }
        }
        let penalty = if max_finite > 0.0 {
            2.0 * max_finite
        } else {
            FALLBACK_PENALTY
        };
        for (c, p) in data.iter_mut().zip(&penalized) {
            if *p {
                *c = penalty;
            }
        }
        CostMatrix {
            rows,
            cols,
            data,
            penalized,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn is_penalized(&self, row: usize, col: usize) -> bool {
        self.penalized[row * self.cols + col]
    }
}

/// `‖a − b‖₂` over joints valid in both skeletons; `None` if none are.
pub fn pose_distance(a: &Skeleton, b: &Skeleton) -> Option<f64> {
    let mut sum = 0.0;
    let mut shared = 0;
    for (ja, jb) in a.joints.iter().zip(&b.joints) {
        if ja.valid && jb.valid {
            let (dx, dy) = (ja.x - jb.x, ja.y - jb.y);
            sum += dx * dx + dy * dy;
            shared += 1;
        }
    }
    (shared > 0).then(|| sum.sqrt())
}

pub fn build_cost_matrix(frame_t: &PoseFrame, frame_t1: &PoseFrame) -> CostMatrix {
    CostMatrix::between(&frame_t.skeletons, &frame_t1.skeletons)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self, costs: &CostMatrix) -> f64 {
        self.matches.iter().map(|&(r, c)| costs.get(r, c)).sum()
    }
}

/// Minimum-cost maximum matching (Kuhn–Munkres with row potentials,
/// O(n²m)). Rectangular inputs are solved on the smaller side; ties are
/// broken toward lower indices by scan order.
pub fn hungarian_assign(costs: &CostMatrix) -> Assignment {
    let (n, m) = (costs.rows, costs.cols);
    if n == 0 || m == 0 {
        return Assignment {
            matches: Vec::new(),
            unmatched_rows: (0..n).collect(),
            unmatched_cols: (0..m).collect(),
        };
    }
    let transpose = n > m;
    let (small, large) = if transpose { (m, n) } else { (n, m) };
    let cost = |i: usize, j: usize| {
        if transpose {
            costs.get(j, i)
        } else {
            costs.get(i, j)
        }
    };
    let row_of_col = solve_rows_le_cols(small, large, cost);

    let mut matches = Vec::with_capacity(small);
    for (j, r) in row_of_col.iter().enumerate() {
        if let Some(i) = *r {
            matches.push(if transpose { (j, i) } else { (i, j) });
        }
    }
    matches.sort_unstable();
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; m];
    for &(r, c) in &matches {
        row_used[r] = true;
        col_used[c] = true;
    }
    Assignment {
        matches,
        unmatched_rows: (0..n).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..m).filter(|&c| !col_used[c]).collect(),
    }
}

/// Shortest-augmenting-path assignment for `n ≤ m`. Returns, per column,
/// the row assigned to it.
fn solve_rows_le_cols(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    // 1-based internally; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m).map(|j| (p[j] != 0).then(|| p[j] - 1)).collect()
}

/// One person's contiguous trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u32,
    pub start_frame: u64,
    pub poses: Vec<Skeleton>,
    pub subject_id: Option<String>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn end_frame(&self) -> u64 {
        self.start_frame + self.poses.len() as u64 - 1
    }

    pub fn frames(&self) -> RangeInclusive<u64> {
        self.start_frame..=self.end_frame()
    }

    pub fn pose_at(&self, frame: u64) -> Option<&Skeleton> {
        frame
            .checked_sub(self.start_frame)
            .and_then(|i| self.poses.get(i as usize))
    }

    /// Number of frames in `span` covered by this track.
    pub fn overlap(&self, span: &RangeInclusive<u64>) -> u64 {
        let lo = self.start_frame.max(*span.start());
        let hi = self.end_frame().min(*span.end());
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }

    /// Most frequent detection id along the track (lowest id on ties).
    pub fn dominant_detection_id(&self) -> Option<i64> {
        let mut counts = std::collections::BTreeMap::new();
        for p in &self.poses {
            *counts.entry(p.detection_id).or_insert(0usize) += 1;
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(id, _)| id)
    }
}

/// Minimum track length in frames for a given frame rate: one second.
pub fn min_track_frames(fps: f64) -> usize {
    (fps * 1.0).ceil() as usize
}

/// Default matching gate: half the diagonal of the image extent implied by
/// the largest observed coordinates.
pub fn default_gate(frames: &[PoseFrame]) -> f64 {
    let (mut max_x, mut max_y) = (0.0f64, 0.0f64);
    for k in frames
        .iter()
        .flat_map(|f| &f.skeletons)
        .flat_map(|s| &s.joints)
        .filter(|k| k.valid)
    {
        max_x = max_x.max(k.x.abs());
        max_y = max_y.max(k.y.abs());
    }
    0.5 * max_x.hypot(max_y)
}

/// Chains per-frame assignments into tracks without the duration filter.
/// Every input skeleton lands in exactly one returned track.
pub fn chain_tracks(frames: &[PoseFrame], gate: f64) -> Vec<Track> {
    let mut tracks: Vec<Track> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    let mut prev_frame: Option<u64> = None;
    for frame in frames {
        if prev_frame.map_or(true, |p| frame.frame_index != p + 1) {
            active.clear();
        }
        let last: Vec<Skeleton> = active
            .iter()
            .map(|&t| tracks[t].poses.last().expect("tracks are nonempty").clone())
            .collect();
        let costs = CostMatrix::between(&last, &frame.skeletons);
        let assignment = hungarian_assign(&costs);
        let mut owner: Vec<Option<usize>> = vec![None; frame.skeletons.len()];
        for &(r, c) in &assignment.matches {
            if !costs.is_penalized(r, c) && costs.get(r, c) <= gate {
                owner[c] = Some(active[r]);
            }
        }
        let mut next_active = Vec::with_capacity(frame.skeletons.len());
        for (c, skeleton) in frame.skeletons.iter().enumerate() {
            let idx = match owner[c] {
                Some(t) => {
                    tracks[t].poses.push(skeleton.clone());
                    t
                }
                None => {
                    tracks.push(Track {
                        track_id: tracks.len() as u32,
                        start_frame: frame.frame_index,
                        poses: vec![skeleton.clone()],
                        subject_id: None,
                    });
                    tracks.len() - 1
                }
            };
            next_active.push(idx);
        }
        active = next_active;
        prev_frame = Some(frame.frame_index);
    }
    tracks
}

/// Builds tracks and discards those shorter than one second.
pub fn assemble_tracks(frames: &[PoseFrame], fps: f64, gate: f64) -> Vec<Track> {
    let min_len = min_track_frames(fps);
    chain_tracks(frames, gate)
        .into_iter()
        .filter(|t| t.len() >= min_len)
        .collect()
}

/// Hip-centered, window-scaled coordinates of one track.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrack {
    pub track_id: u32,
    pub start_frame: u64,
    pub coords: Vec<[[f64; 2]; JOINT_COUNT]>,
    pub valid_mask: Vec<[bool; JOINT_COUNT]>,
    /// Set when the window scale collapsed and `1` was used instead.
    pub degenerate_scale: bool,
}

/// Subtracts each frame's hip center (centroid of valid joints when both
/// hips are missing) and divides the whole window by one scale: the largest
/// centered joint norm. Covers the frames of `window_span` the track spans.
pub fn normalize_track(track: &Track, window_span: RangeInclusive<u64>) -> Result<NormalizedTrack> {
    let lo = track.start_frame.max(*window_span.start());
    let hi = track.end_frame().min(*window_span.end());
    if track.is_empty() || lo > hi {
        return Err(Error::Invalid(format!(
            "track {} does not overlap window {}..={}",
            track.track_id,
            window_span.start(),
            window_span.end()
        )));
    }
    let mut coords = Vec::with_capacity((hi - lo + 1) as usize);
    let mut valid_mask = Vec::with_capacity(coords.capacity());
    let mut any_valid = false;
    for f in lo..=hi {
        let pose = track.pose_at(f).expect("frame within track");
        let mut frame = [[0.0; 2]; JOINT_COUNT];
        let mut mask = [false; JOINT_COUNT];
        if let Some((cx, cy)) = hip_center(pose) {
            any_valid = true;
            for (j, k) in pose.joints.iter().enumerate() {
                if k.valid {
                    frame[j] = [k.x - cx, k.y - cy];
                    mask[j] = true;
                }
            }
        }
        coords.push(frame);
        valid_mask.push(mask);
    }
    if !any_valid {
        return Err(Error::Invalid(format!(
            "track {} has no valid joints in the window",
            track.track_id
        )));
    }
    let mut scale: f64 = 0.0;
    for (frame, mask) in coords.iter().zip(&valid_mask) {
        for (c, _) in frame.iter().zip(mask).filter(|(_, m)| **m) {
            scale = scale.max(c[0].hypot(c[1]));
        }
    }
    let degenerate_scale = scale < 1e-6;
    if degenerate_scale {
        scale = 1.0;
    }
    for frame in &mut coords {
        for c in frame.iter_mut() {
            c[0] /= scale;
            c[1] /= scale;
        }
    }
    Ok(NormalizedTrack {
        track_id: track.track_id,
        start_frame: lo,
        coords,
        valid_mask,
        degenerate_scale,
    })
}

fn hip_center(pose: &Skeleton) -> Option<(f64, f64)> {
    let hips: Vec<_> = [LEFT_HIP, RIGHT_HIP]
        .iter()
        .map(|&j| pose.joints[j])
        .filter(|k| k.valid)
        .collect();
    let pts: Vec<_> = if hips.is_empty() {
        pose.joints.iter().copied().filter(|k| k.valid).collect()
    } else {
        hips
    };
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    Some((
        pts.iter().map(|k| k.x).sum::<f64>() / n,
        pts.iter().map(|k| k.y).sum::<f64>() / n,
    ))
}

/// All tracks of one video, as persisted between pipeline stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    pub video_id: String,
    pub fps: f64,
    pub first_frame: u64,
    pub last_frame: u64,
    pub tracks: Vec<Track>,
    pub inputs: Vec<InputRef>,
}

#[derive(Serialize, Deserialize)]
struct TrackLine {
    video_id: String,
    fps: f64,
    first_frame: u64,
    last_frame: u64,
    track_id: u32,
    start_frame: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subject_id: Option<String>,
    detection_ids: Vec<i64>,
    frames: Vec<Vec<[f64; 3]>>,
    #[serde(default)]
    inputs: Vec<InputRef>,
}

impl TrackSet {
    /// Tracks `frames` (default gate when `gate` is `None`) and drops ghosts.
    pub fn build(video_id: impl Into<String>, fps: f64, frames: &[PoseFrame], gate: Option<f64>) -> Self {
        let gate = gate.unwrap_or_else(|| default_gate(frames));
        TrackSet {
            video_id: video_id.into(),
            fps,
            first_frame: frames.first().map_or(0, |f| f.frame_index),
            last_frame: frames.last().map_or(0, |f| f.frame_index),
            tracks: assemble_tracks(frames, fps, gate),
            inputs: Vec::new(),
        }
    }

    /// Sets each track's subject from its most frequent detection id.
    pub fn assign_subjects(&mut self, subjects: &BTreeMap<i64, String>) {
        for t in &mut self.tracks {
            t.subject_id = t.dominant_detection_id().and_then(|d| subjects.get(&d).cloned());
        }
    }

    /// One JSON line per track; stream-level fields repeat on each line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for t in &self.tracks {
            let line = TrackLine {
                video_id: self.video_id.clone(),
                fps: self.fps,
                first_frame: self.first_frame,
                last_frame: self.last_frame,
                track_id: t.track_id,
                start_frame: t.start_frame,
                subject_id: t.subject_id.clone(),
                detection_ids: t.poses.iter().map(|p| p.detection_id).collect(),
                frames: t.poses.iter().map(|p| joints_to_raw(&p.joints)).collect(),
                inputs: self.inputs.clone(),
            };
            let text = serde_json::to_string(&line).expect("track serializes");
            writeln!(out, "{text}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a track file. An empty file yields no tracks and an unnamed video.
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut set: Option<TrackSet> = None;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.into(),
                line: idx + 1,
                message,
            };
            let raw: TrackLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            if raw.frames.is_empty() || raw.frames.len() != raw.detection_ids.len() {
                return Err(parse_err("track frames and detection ids disagree".into()));
            }
            let poses = raw
                .frames
                .iter()
                .zip(&raw.detection_ids)
                .map(|(joints, &id)| joints_from_raw(joints).map(|j| Skeleton::new(id, j)))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(parse_err)?;
            let set = set.get_or_insert_with(|| TrackSet {
                video_id: raw.video_id.clone(),
                fps: raw.fps,
                first_frame: raw.first_frame,
                last_frame: raw.last_frame,
                tracks: Vec::new(),
                inputs: raw.inputs.clone(),
            });
            if set.video_id != raw.video_id {
                return Err(parse_err(format!(
                    "mixed videos in one track file: {} and {}",
                    set.video_id, raw.video_id
                )));
            }
            set.tracks.push(Track {
                track_id: raw.track_id,
                start_frame: raw.start_frame,
                poses,
                subject_id: raw.subject_id,
            });
        }
        Ok(set.unwrap_or(TrackSet {
            video_id: String::new(),
            fps: crate::types::DEFAULT_FPS,
            first_frame: 0,
            last_frame: 0,
            tracks: Vec::new(),
            inputs: Vec::new(),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Keypoint;

    fn single_joint(x: f64, y: f64) -> Skeleton {
        let mut joints = [Keypoint::missing(); JOINT_COUNT];
        joints[0] = Keypoint::new(x, y);
        Skeleton::new(0, joints)
    }

    fn full(id: i64, dx: f64, dy: f64) -> Skeleton {
        let mut joints = [Keypoint::missing(); JOINT_COUNT];
        for (j, k) in joints.iter_mut().enumerate() {
            *k = Keypoint::new(dx + j as f64 * 3.0, dy + (j as f64 * 7.0) % 11.0);
        }
        Skeleton::new(id, joints)
    }

    #[test]
    fn cost_three_four_five() {
        let c = CostMatrix::between(&[single_joint(0.0, 0.0)], &[single_joint(3.0, 4.0)]);
        assert_eq!(c.get(0, 0), 5.0);
    }

    #[test]
    fn identical_skeletons_cost_zero_on_diagonal() {
        let a = vec![full(0, 0.0, 0.0), full(1, 200.0, 50.0)];
        let c = CostMatrix::between(&a, &a);
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(1, 1), 0.0);
        assert!(c.get(0, 1) > 0.0);
    }

    #[test]
    fn disjoint_joints_get_penalty() {
        let mut b = [Keypoint::missing(); JOINT_COUNT];
        b[5] = Keypoint::new(1.0, 1.0);
        let other = Skeleton::new(1, b);
        let c = CostMatrix::between(&[single_joint(0.0, 0.0)], &[other.clone()]);
        assert!(c.is_penalized(0, 0));
        assert_eq!(c.get(0, 0), FALLBACK_PENALTY);

        let c = CostMatrix::between(&[single_joint(0.0, 0.0)], &[single_joint(3.0, 4.0), other]);
        assert_eq!(c.get(0, 1), 10.0);
    }

    #[test]
    fn empty_frames_give_empty_matrix() {
        let c = CostMatrix::between(&[], &[full(0, 0.0, 0.0)]);
        assert_eq!((c.rows, c.cols), (0, 1));
        let a = hungarian_assign(&c);
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_cols, vec![0]);
    }

    #[test]
    fn hungarian_small_cases() {
        let c = CostMatrix::from_rows(&[vec![0.0, 9.0], vec![9.0, 0.0]]).unwrap();
        let a = hungarian_assign(&c);
        assert_eq!(a.matches, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost(&c), 0.0);

        let c = CostMatrix::from_rows(&[vec![4.0, 1.0], vec![2.0, 8.0]]).unwrap();
        let a = hungarian_assign(&c);
        assert_eq!(a.matches, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total_cost(&c), 3.0);
    }

    #[test]
    fn hungarian_rectangular() {
        let c = CostMatrix::from_rows(&[vec![5.0], vec![1.0], vec![3.0]]).unwrap();
        let a = hungarian_assign(&c);
        assert_eq!(a.matches, vec![(1, 0)]);
        assert_eq!(a.unmatched_rows, vec![0, 2]);

        let c = CostMatrix::from_rows(&[vec![5.0, 2.0, 7.0]]).unwrap();
        let a = hungarian_assign(&c);
        assert_eq!(a.matches, vec![(0, 1)]);
        assert_eq!(a.unmatched_cols, vec![0, 2]);
    }

    #[test]
    fn hungarian_ties_are_deterministic() {
        let c = CostMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let a = hungarian_assign(&c);
        assert_eq!(a, hungarian_assign(&c));
        assert_eq!(a.matches.len(), 2);
    }

    fn stationary_frames(n: u64, skeleton: &Skeleton) -> Vec<PoseFrame> {
        (0..n)
            .map(|f| PoseFrame {
                frame_index: f,
                skeletons: vec![skeleton.clone()],
            })
            .collect()
    }

    #[test]
    fn stationary_person_is_one_track() {
        let frames = stationary_frames(120, &full(0, 100.0, 100.0));
        let tracks = assemble_tracks(&frames, 30.0, 50.0);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].len(), 120);
    }

    #[test]
    fn ghost_tracks_are_dropped() {
        let frames = stationary_frames(20, &full(0, 100.0, 100.0));
        assert!(assemble_tracks(&frames, 30.0, 50.0).is_empty());
        let frames = stationary_frames(30, &full(0, 100.0, 100.0));
        assert_eq!(assemble_tracks(&frames, 30.0, 50.0).len(), 1);
    }

    #[test]
    fn gate_splits_teleporting_person() {
        let mut frames = stationary_frames(40, &full(0, 100.0, 100.0));
        for f in 40..80 {
            frames.push(PoseFrame {
                frame_index: f,
                skeletons: vec![full(0, 900.0, 100.0)],
            });
        }
        let tracks = chain_tracks(&frames, 50.0);
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[1].start_frame, 40);
    }

    #[test]
    fn frame_gap_ends_tracks() {
        let mut frames = stationary_frames(10, &full(0, 0.0, 0.0));
        frames.push(PoseFrame {
            frame_index: 12,
            skeletons: vec![full(0, 0.0, 0.0)],
        });
        assert_eq!(chain_tracks(&frames, 1e9).len(), 2);
    }

    #[test]
    fn normalize_arithmetic() {
        let mut joints = [Keypoint::missing(); JOINT_COUNT];
        joints[LEFT_HIP] = Keypoint::new(100.0, 200.0);
        joints[RIGHT_HIP] = Keypoint::new(102.0, 200.0);
        joints[0] = Keypoint::new(101.0, 180.0);
        let track = Track {
            track_id: 3,
            start_frame: 10,
            poses: vec![Skeleton::new(0, joints)],
            subject_id: None,
        };
        let n = normalize_track(&track, 0..=100).unwrap();
        let s = 20.0;
        assert_eq!(n.coords[0][0], [0.0, -20.0 / s]);
        assert_eq!(n.coords[0][LEFT_HIP], [-1.0 / s, 0.0]);
        assert!(!n.degenerate_scale);
        assert!(!n.valid_mask[0][1]);
        assert_eq!(n.coords[0][1], [0.0, 0.0]);
    }

    #[test]
    fn normalize_coincident_joints_is_degenerate() {
        let mut joints = [Keypoint::missing(); JOINT_COUNT];
        for k in joints.iter_mut().take(5) {
            *k = Keypoint::new(7.0, 7.0);
        }
        let track = Track {
            track_id: 0,
            start_frame: 0,
            poses: vec![Skeleton::new(0, joints); 3],
            subject_id: None,
        };
        let n = normalize_track(&track, 0..=2).unwrap();
        assert!(n.degenerate_scale);
        assert!(n.coords.iter().flatten().all(|c| *c == [0.0, 0.0]));
    }

    #[test]
    fn normalize_rejects_empty_or_disjoint() {
        let track = Track {
            track_id: 0,
            start_frame: 0,
            poses: vec![Skeleton::new(0, [Keypoint::missing(); JOINT_COUNT])],
            subject_id: None,
        };
        assert!(normalize_track(&track, 0..=5).is_err());
        let track = Track {
            poses: vec![full(0, 0.0, 0.0)],
            ..track
        };
        assert!(normalize_track(&track, 5..=9).is_err());
    }
}

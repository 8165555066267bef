//! Representative behavior phenotypes: K-medoids over the features of the
//! most-attended person in confidently detected windows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::WindowSample;
use crate::error::{Error, Result};
use crate::model::{self, ModelConfig, ModelParams};
use crate::tracking::TrackSet;
use crate::types::{BehaviorCategory, Skeleton, LIMBS};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    L2,
    L1,
}

impl DistanceMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let pairs = a.iter().zip(b);
        match self {
            DistanceMetric::L2 => pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            DistanceMetric::L1 => pairs.map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowRef {
    /// Index into the window list the phenotype was extracted from.
    pub index: usize,
    pub video_id: String,
    pub end_frame: u64,
}

impl WindowRef {
    fn of(index: usize, w: &WindowSample) -> Self {
        WindowRef {
            index,
            video_id: w.video_id.clone(),
            end_frame: w.end_frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttendedFeature {
    pub window: WindowRef,
    pub track_id: u32,
    pub probability: f64,
    /// Flattened `[17, C]` time-pooled features of the attended person.
    pub feature: Vec<f64>,
}

/// Attended-person features of every window positive for `category` whose
/// predicted probability reaches `floor`.
pub fn collect_attended_features(
    params: &ModelParams,
    cfg: &ModelConfig,
    windows: &[WindowSample],
    category: BehaviorCategory,
    floor: f64,
) -> Result<Vec<AttendedFeature>> {
    if !cfg.variant.has_person_attention() {
        return Err(Error::Config(format!(
            "phenotype extraction needs person attention; {} has none",
            cfg.variant
        )));
    }
    let mut out = Vec::new();
    for (i, w) in windows.iter().enumerate() {
        if !w.label || !w.categories.contains(&category) {
            continue;
        }
        let rec = model::forward(params, cfg, w)?;
        let probability = rec.probability();
        if probability < floor {
            continue;
        }
        let k = rec.attended_person();
        out.push(AttendedFeature {
            window: WindowRef::of(i, w),
            track_id: w.track_ids[k],
            probability,
            feature: rec.person_feature(k).to_vec(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMedoids {
    /// Point indices, ascending.
    pub medoids: Vec<usize>,
    /// Cluster index (into `medoids`) per point.
    pub assignment: Vec<usize>,
    pub cost: f64,
    /// Total within-cluster distance at the start and after every swap.
    pub cost_history: Vec<f64>,
    pub converged: bool,
}

impl KMedoids {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.medoids.len()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn distance_matrix(points: &[Vec<f64>], metric: DistanceMetric) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = metric.distance(&points[i], &points[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Nearest medoid per point (lowest position on ties) and the total cost.
fn assign(dist: &[Vec<f64>], medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut cost = 0.0;
    let assignment = (0..dist.len())
        .map(|i| {
            let (best, d) = medoids
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (c, &m)| if dist[i][m] < acc.1 { (c, dist[i][m]) } else { acc });
            cost += d;
            best
        })
        .collect();
    (assignment, cost)
}

/// k-medoids++ seeding: first medoid uniform, the rest drawn with
/// probability proportional to squared distance to the nearest chosen one.
fn seed_medoids(dist: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = dist.len();
    let mut medoids = vec![rng.gen_range(0..n)];
    while medoids.len() < k {
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let d = medoids.iter().map(|&m| dist[i][m]).fold(f64::INFINITY, f64::min);
                d * d
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            let mut chosen = None;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 && r < w {
                    chosen = Some(i);
                    break;
                }
                r -= w;
            }
            chosen.unwrap_or_else(|| weights.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            (0..n).find(|i| !medoids.contains(i)).expect("k ≤ n")
        };
        medoids.push(pick);
    }
    medoids
}

/// PAM: assign points to the nearest medoid, then apply the single
/// medoid/non-medoid swap that lowers total cost the most, until no swap
/// helps or `max_iters` swaps have been made.
pub fn kmedoids_from_distances(dist: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMedoids> {
    let n = dist.len();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("k-medoids needs 1 ≤ k ≤ n, got k = {k}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = seed_medoids(dist, k, &mut rng);
    let (_, mut cost) = assign(dist, &medoids);
    let mut history = vec![cost];
    let mut converged = false;
    for _ in 0..max_iters {
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..k {
            for cand in 0..n {
                if medoids.contains(&cand) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = cand;
                let (_, c) = assign(dist, &trial);
                if c < best.map_or(cost, |b| b.2) - 1e-12 * cost.abs().max(1.0) {
                    best = Some((slot, cand, c));
                }
            }
        }
        match best {
            Some((slot, cand, c)) => {
                medoids[slot] = cand;
                cost = c;
                history.push(cost);
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    medoids.sort_unstable();
    let (assignment, cost) = assign(dist, &medoids);
    Ok(KMedoids {
        medoids,
        assignment,
        cost,
        cost_history: history,
        converged,
    })
}

pub fn kmedoids(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize, metric: DistanceMetric) -> Result<KMedoids> {
    kmedoids_from_distances(&distance_matrix(points, metric), k, seed, max_iters)
}

/// Mean silhouette width; 0 when there is a single cluster.
pub fn silhouette(dist: &[Vec<f64>], assignment: &[usize], k: usize) -> f64 {
    let n = dist.len();
    if k < 2 || n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sums[assignment[j]] += dist[i][j];
                counts[assignment[j]] += 1;
            }
        }
        let own = assignment[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() && a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

/// Silhouette for each k in `ks` that does not exceed the point count.
pub fn silhouette_sweep(
    points: &[Vec<f64>],
    ks: std::ops::RangeInclusive<usize>,
    seed: u64,
    max_iters: usize,
    metric: DistanceMetric,
) -> Result<Vec<(usize, f64)>> {
    let dist = distance_matrix(points, metric);
    ks.filter(|&k| k <= points.len())
        .map(|k| {
            let km = kmedoids_from_distances(&dist, k, seed, max_iters)?;
            Ok((k, silhouette(&dist, &km.assignment, k)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBox {
    pub frame: u64,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl FrameBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

/// Bounds of the valid joints, grown by `pad` of the extent on every side.
pub fn pose_box(frame: u64, pose: &Skeleton, pad: f64) -> Option<FrameBox> {
    let valid: Vec<_> = pose.joints.iter().filter(|k| k.valid).collect();
    if valid.is_empty() {
        return None;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in valid {
        x0 = x0.min(k.x);
        y0 = y0.min(k.y);
        x1 = x1.max(k.x);
        y1 = y1.max(k.y);
    }
    let (px, py) = ((x1 - x0) * pad, (y1 - y0) * pad);
    Some(FrameBox {
        frame,
        x_min: x0 - px,
        y_min: y0 - py,
        x_max: x1 + px,
        y_max: y1 + py,
    })
}

pub const BOX_PADDING: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub medoid: WindowRef,
    pub member_count: usize,
    pub medoid_track_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub window: WindowRef,
    pub track_id: u32,
    pub first_frame: u64,
    pub last_frame: u64,
    pub boxes: Vec<FrameBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeResult {
    pub category: BehaviorCategory,
    pub k: usize,
    pub floor: f64,
    pub metric: DistanceMetric,
    pub qualifying_windows: usize,
    pub clusters: Vec<ClusterSummary>,
    pub representative: Representative,
    pub cost_history: Vec<f64>,
    /// Set for categories defined by a person's absence, where attention on
    /// the people still present is a known failure mode.
    pub caveat: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhenotypeConfig {
    pub k: usize,
    pub floor: f64,
    pub metric: DistanceMetric,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for PhenotypeConfig {
    fn default() -> Self {
        PhenotypeConfig {
            k: 5,
            floor: 0.8,
            metric: DistanceMetric::L2,
            seed: 0,
            max_iters: 100,
        }
    }
}

fn find_track<'a>(tracks: &'a [TrackSet], video_id: &str, track_id: u32) -> Option<&'a crate::tracking::Track> {
    tracks
        .iter()
        .filter(|s| s.video_id == video_id)
        .flat_map(|s| &s.tracks)
        .find(|t| t.track_id == track_id)
}

/// Clusters attended features and returns the medoid of the largest cluster
/// (lowest cluster index on ties), with per-frame boxes around the attended
/// track taken from `tracks`.
pub fn extract_phenotype(
    params: &ModelParams,
    cfg: &ModelConfig,
    windows: &[WindowSample],
    tracks: &[TrackSet],
    category: BehaviorCategory,
    pc: &PhenotypeConfig,
) -> Result<PhenotypeResult> {
    let feats = collect_attended_features(params, cfg, windows, category, pc.floor)?;
    if feats.len() < pc.k || pc.k == 0 {
        return Err(Error::Invalid(format!(
            "{category}: {} windows reach confidence {}, need at least k = {}",
            feats.len(),
            pc.floor,
            pc.k
        )));
    }
    let points: Vec<Vec<f64>> = feats.iter().map(|f| f.feature.clone()).collect();
    let km = kmedoids(&points, pc.k, pc.seed, pc.max_iters, pc.metric)?;
    let sizes = km.cluster_sizes();
    let clusters: Vec<ClusterSummary> = km
        .medoids
        .iter()
        .zip(&sizes)
        .map(|(&m, &count)| ClusterSummary {
            medoid: feats[m].window.clone(),
            member_count: count,
            medoid_track_id: feats[m].track_id,
        })
        .collect();
    let largest = sizes
        .iter()
        .enumerate()
        .fold((0, 0), |best, (c, &s)| if s > best.1 { (c, s) } else { best })
        .0;
    let rep = &feats[km.medoids[largest]];
    let w = &windows[rep.window.index];
    let span = w.span();
    let boxes = find_track(tracks, &w.video_id, rep.track_id)
        .map(|t| {
            span.clone()
                .filter_map(|f| t.pose_at(f).and_then(|p| pose_box(f, p, BOX_PADDING)))
                .collect()
        })
        .unwrap_or_default();
    let caveat = matches!(category, BehaviorCategory::Elopement | BehaviorCategory::OutOfSeat).then(|| {
        format!(
            "{category} is marked by a person's absence; attention falls on people still in view, \
             so the representative may not show the behavior"
        )
    });
    Ok(PhenotypeResult {
        category,
        k: pc.k,
        floor: pc.floor,
        metric: pc.metric,
        qualifying_windows: feats.len(),
        clusters,
        representative: Representative {
            window: rep.window.clone(),
            track_id: rep.track_id,
            first_frame: *span.start(),
            last_frame: *span.end(),
            boxes,
        },
        cost_history: km.cost_history,
        caveat,
    })
}

pub const SVG_PANELS: usize = 12;
const PANEL_COLUMNS: usize = 6;
const PANEL_SIZE: f64 = 200.0;

/// Stick figures of every track in the representative window at 12 evenly
/// spaced frames, with the attended person's box drawn in red.
pub fn render_svg(result: &PhenotypeResult, tracks: &[TrackSet]) -> String {
    let rep = &result.representative;
    let (first, last) = (rep.first_frame, rep.last_frame);
    let span = last - first;
    let frames: Vec<u64> = (0..SVG_PANELS)
        .map(|i| first + (span as f64 * i as f64 / (SVG_PANELS - 1) as f64).round() as u64)
        .collect();
    let video: Vec<&crate::tracking::Track> = tracks
        .iter()
        .filter(|s| s.video_id == rep.window.video_id)
        .flat_map(|s| &s.tracks)
        .collect();
    let boxes: BTreeMap<u64, &FrameBox> = rep.boxes.iter().map(|b| (b.frame, b)).collect();

    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &f in &frames {
        for p in video.iter().filter_map(|t| t.pose_at(f)) {
            for k in p.joints.iter().filter(|k| k.valid) {
                x0 = x0.min(k.x);
                y0 = y0.min(k.y);
                x1 = x1.max(k.x);
                y1 = y1.max(k.y);
            }
        }
        if let Some(b) = boxes.get(&f) {
            x0 = x0.min(b.x_min);
            y0 = y0.min(b.y_min);
            x1 = x1.max(b.x_max);
            y1 = y1.max(b.y_max);
        }
    }
    if !x0.is_finite() {
        (x0, y0, x1, y1) = (0.0, 0.0, 1.0, 1.0);
    }
    let scale = (PANEL_SIZE - 10.0) / (x1 - x0).max(y1 - y0).max(1e-9);
    let rows = SVG_PANELS.div_ceil(PANEL_COLUMNS);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        PANEL_SIZE * PANEL_COLUMNS as f64,
        PANEL_SIZE * rows as f64 + 24.0,
        PANEL_SIZE * PANEL_COLUMNS as f64,
        PANEL_SIZE * rows as f64 + 24.0
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="16" font-family="sans-serif" font-size="13">{} · {} frames {}–{} · track {}</text>"#,
        result.category, rep.window.video_id, first, last, rep.track_id
    );
    for (i, &f) in frames.iter().enumerate() {
        let ox = (i % PANEL_COLUMNS) as f64 * PANEL_SIZE + 5.0;
        let oy = (i / PANEL_COLUMNS) as f64 * PANEL_SIZE + 24.0 + 5.0;
        let px = |x: f64| ox + (x - x0) * scale;
        let py = |y: f64| oy + (y - y0) * scale;
        let _ = writeln!(
            s,
            r##"<g><rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#ccc"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" fill="#666">{f}</text>"##,
            ox - 5.0,
            oy - 5.0,
            PANEL_SIZE,
            PANEL_SIZE,
            ox - 2.0,
            oy + 6.0
        );
        for t in &video {
            let Some(p) = t.pose_at(f) else { continue };
            let colour = if t.track_id == rep.track_id { "#c00" } else { "#333" };
            for &(a, b) in &LIMBS {
                let (ja, jb) = (p.joints[a], p.joints[b]);
                if ja.valid && jb.valid {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="1.5"/>"#,
                        px(ja.x),
                        py(ja.y),
                        px(jb.x),
                        py(jb.y)
                    );
                }
            }
        }
        if let Some(b) = boxes.get(&f) {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="red" stroke-width="2"/>"#,
                px(b.x_min),
                py(b.y_min),
                (b.x_max - b.x_min) * scale,
                (b.y_max - b.y_min) * scale
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: &Path, result: &PhenotypeResult, tracks: &[TrackSet]) -> Result<()> {
    std::fs::write(path, render_svg(result, tracks)).map_err(|e| Error::io(path, e))
}

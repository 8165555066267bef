mod common;

use behavior_attn::dataset::{make_windows, WindowConfig};
use behavior_attn::model::{ModelConfig, ModelParams, Variant};
use behavior_attn::phenotype::{
    distance_matrix, extract_phenotype, kmedoids, kmedoids_from_distances, pose_box, render_svg, silhouette,
    DistanceMetric, PhenotypeConfig, BOX_PADDING, SVG_PANELS,
};
use behavior_attn::synth::{MotifKind, MotifPlan};
use behavior_attn::types::BehaviorCategory;
use common::synth_corpus;
use proptest::prelude::*;

fn points() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-10.0..10.0f64, d), 1..25))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn kmedoids_invariants(pts in points(), k_frac in 0.0..1.0f64, seed in any::<u64>(), l1 in any::<bool>()) {
        let n = pts.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let metric = if l1 { DistanceMetric::L1 } else { DistanceMetric::L2 };
        let r = kmedoids(&pts, k, seed, 100, metric).unwrap();
        prop_assert_eq!(r.medoids.len(), k);
        prop_assert!(r.medoids.windows(2).all(|w| w[0] < w[1]) && r.medoids.iter().all(|&m| m < n));
        prop_assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
        let dist = distance_matrix(&pts, metric);
        let recomputed: f64 = (0..n).map(|i| dist[i][r.medoids[r.assignment[i]]]).sum();
        prop_assert!((recomputed - r.cost).abs() < 1e-9 * r.cost.max(1.0));
        for i in 0..n {
            let nearest = r.medoids.iter().map(|&m| dist[i][m]).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(dist[i][r.medoids[r.assignment[i]]], nearest);
        }
        for (c, &m) in r.medoids.iter().enumerate() {
            prop_assert_eq!(r.assignment[m], c);
        }
        prop_assert_eq!(kmedoids(&pts, k, seed, 100, metric).unwrap(), r);
    }
}

#[test]
fn every_point_its_own_medoid() {
    let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let r = kmedoids(&pts, 7, 0, 10, DistanceMetric::L2).unwrap();
    assert_eq!(r.cost, 0.0);
    assert_eq!(r.medoids, (0..7).collect::<Vec<_>>());
}

#[test]
fn single_medoid_is_the_distance_minimizer() {
    let pts: Vec<Vec<f64>> = [[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [2.0, 1.0], [1.5, 0.5], [9.0, -3.0]]
        .iter()
        .map(|p| p.to_vec())
        .collect();
    let dist = distance_matrix(&pts, DistanceMetric::L2);
    let best = (0..pts.len())
        .min_by(|&a, &b| dist[a].iter().sum::<f64>().total_cmp(&dist[b].iter().sum::<f64>()))
        .unwrap();
    for seed in 0..10 {
        assert_eq!(kmedoids_from_distances(&dist, 1, seed, 100).unwrap().medoids, vec![best]);
    }
}

#[test]
fn separated_blobs_get_one_medoid_each() {
    let mut pts = Vec::new();
    for i in 0..6 {
        pts.push(vec![i as f64 * 0.1, 0.0]);
        pts.push(vec![100.0 + i as f64 * 0.1, 50.0]);
    }
    for seed in 0..20 {
        let r = kmedoids(&pts, 2, seed, 100, DistanceMetric::L2).unwrap();
        let sides: Vec<bool> = r.medoids.iter().map(|&m| pts[m][0] > 50.0).collect();
        assert_ne!(sides[0], sides[1]);
        assert_eq!(r.cluster_sizes(), vec![6, 6]);
    }
    let dist = distance_matrix(&pts, DistanceMetric::L2);
    let r = kmedoids_from_distances(&dist, 2, 0, 100).unwrap();
    assert!(silhouette(&dist, &r.assignment, 2) > 0.99);
}

#[test]
fn phenotype_of_a_synthetic_corpus() {
    let plan = MotifPlan {
        count: 2,
        min_seconds: 15.0,
        max_seconds: 20.0,
        kinds: vec![MotifKind::Jump],
    };
    let corpus = synth_corpus(3, 3, 60.0, 1.0, &plan, 2);
    let windows = make_windows(&corpus.tracks, &corpus.episodes, &WindowConfig::default())
        .unwrap()
        .windows;
    let cfg = ModelConfig::compact(Variant::PAtt, 120);
    let params = ModelParams::init(&cfg, 3).unwrap();
    let pc = PhenotypeConfig {
        k: 3,
        floor: 0.0,
        ..PhenotypeConfig::default()
    };
    let cat = BehaviorCategory::RestrictedRepetitive;
    let result = extract_phenotype(&params, &cfg, &windows, &corpus.tracks, cat, &pc).unwrap();
    let positives = windows.iter().filter(|w| w.categories.contains(&cat)).count();
    assert_eq!(result.qualifying_windows, positives);
    assert_eq!(result.clusters.iter().map(|c| c.member_count).sum::<usize>(), positives);
    let largest = result.clusters.iter().map(|c| c.member_count).max().unwrap();
    let rep = &result.representative;
    assert!(result.clusters.iter().any(|c| c.medoid == rep.window && c.member_count == largest));
    assert_eq!(rep.last_frame - rep.first_frame + 1, 120);
    assert_eq!(rep.boxes.len(), 120);
    assert!(result.caveat.is_none());

    let track = corpus
        .tracks
        .iter()
        .find(|s| s.video_id == rep.window.video_id)
        .and_then(|s| s.tracks.iter().find(|t| t.track_id == rep.track_id))
        .unwrap();
    for b in &rep.boxes {
        let pose = track.pose_at(b.frame).unwrap();
        assert!(pose.joints.iter().filter(|k| k.valid).all(|k| b.contains(k.x, k.y)));
        assert_eq!(Some(*b), pose_box(b.frame, pose, BOX_PADDING));
    }

    let svg = render_svg(&result, &corpus.tracks);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<g>").count(), SVG_PANELS);
    assert_eq!(svg.matches("stroke=\"red\"").count(), SVG_PANELS);

    let too_strict = PhenotypeConfig { floor: 1.01, ..pc };
    assert!(extract_phenotype(&params, &cfg, &windows, &corpus.tracks, cat, &too_strict).is_err());
    let tcn = ModelConfig::compact(Variant::Tcn, 120);
    let tcn_params = ModelParams::init(&tcn, 3).unwrap();
    assert!(extract_phenotype(&tcn_params, &tcn, &windows, &corpus.tracks, cat, &PhenotypeConfig::default()).is_err());
}

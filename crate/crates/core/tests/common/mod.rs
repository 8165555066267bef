#![allow(dead_code)]

use std::collections::BTreeSet;

use behavior_attn::autodiff::{Graph, Tensor, Var};
use behavior_attn::dataset::WindowSample;
use behavior_attn::model::{HeadConfig, InputNorm, ModelConfig, ModelParams, Variant};
use behavior_attn::synth::{generate_synthetic_scene, scene_tracks, MotifPlan, SynthSceneSpec};
use behavior_attn::tracking::TrackSet;
use behavior_attn::types::{AnnotationEpisode, JOINT_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Outcome of one finite-difference check.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub worst: f64,
    pub probes: usize,
    /// Probes discarded because `±h` flipped a ReLU.
    pub kinks: usize,
}

/// Central differences of `<build(inputs), proj>` against the tape gradient,
/// over every element of every input (or `sample` random ones if set).
/// Relative error uses a floor of 1 on the denominator.
pub fn check_grad(
    seed: u64,
    inputs: &[Tensor],
    sample: Option<usize>,
    build: impl Fn(&mut Graph, &[Var]) -> Var,
) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval = |inputs: &[Tensor], proj: Option<&Tensor>| -> (Graph, Vec<Var>, Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone()).unwrap()).collect();
        let out = build(&mut g, &vars);
        let Some(p) = proj else { return (g, vars, out) };
        let pv = g.input(p.clone()).unwrap();
        let prod = g.mul(out, pv).unwrap();
        let n = g.value(prod).len();
        let flat = g.reshape(prod, &[n]).unwrap();
        let s = g.sum(flat, 0).unwrap();
        (g, vars, s)
    };
    let (g, _, out) = eval(inputs, None);
    let proj = rand_tensor(&mut rng, g.value(out).shape());
    let (g, vars, loss) = eval(inputs, Some(&proj));
    let base_pattern = g.relu_pattern();
    let grads = g.backward(loss).unwrap();

    let mut probes: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(k, t)| (0..t.len()).map(move |i| (k, i)))
        .collect();
    if let Some(n) = sample {
        let all = probes;
        probes = (0..n).map(|_| all[rng.gen_range(0..all.len())]).collect();
    }
    let h = 1e-5;
    let mut out = GradCheck::default();
    for (k, i) in probes {
        let shifted = |delta: f64| {
            let mut moved = inputs.to_vec();
            moved[k].data_mut()[i] += delta;
            let (g, _, l) = eval(&moved, Some(&proj));
            (g.value(l).item(), g.relu_pattern())
        };
        let (up, pu) = shifted(h);
        let (down, pd) = shifted(-h);
        if pu != base_pattern || pd != base_pattern {
            out.kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(vars[k]).map_or(0.0, |t| t.data()[i]);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
        out.worst = out.worst.max(rel);
        out.probes += 1;
    }
    out
}

/// Smallest configuration that still exercises every head.
pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        frames: 8,
        joint_count: JOINT_COUNT,
        backbone_channels: vec![3, 4],
        backbone_kernel: 3,
        jatt: HeadConfig {
            tcn_layers: 1,
            tcn_channels: 3,
            kernel: 3,
            fc: vec![6],
        },
        tatt: HeadConfig {
            tcn_layers: 1,
            tcn_channels: 3,
            kernel: 3,
            fc: vec![5],
        },
        patt_fc: vec![6, 4],
        classifier_fc: vec![6, 4],
    }
}

pub fn random_window(persons: usize, frames: usize, seed: u64) -> WindowSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WindowSample {
        video_id: "v".into(),
        end_frame: frames as u64 - 1,
        frames,
        persons: (0..persons * frames * JOINT_COUNT * 2)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
        presence_mask: vec![true; persons * frames],
        track_ids: (0..persons as u32).collect(),
        label: rng.gen_bool(0.5),
        categories: BTreeSet::new(),
        actor_track_id: None,
    }
}

pub struct Corpus {
    pub tracks: Vec<TrackSet>,
    pub episodes: Vec<AnnotationEpisode>,
}

/// `scenes` synthetic recordings, tracked with ground-truth subject ids.
pub fn synth_corpus(
    scenes: usize,
    persons: usize,
    seconds: f64,
    noise: f64,
    plan: &MotifPlan,
    seed: u64,
) -> Corpus {
    let fps = 30.0;
    let mut corpus = Corpus {
        tracks: Vec::new(),
        episodes: Vec::new(),
    };
    for s in 0..scenes {
        let id = format!("scene{s:02}");
        let spec = SynthSceneSpec::with_random_motifs(
            &id,
            persons,
            (seconds * fps) as u64,
            fps,
            noise,
            plan,
            seed + s as u64,
        )
        .unwrap();
        let scene = generate_synthetic_scene(&spec).unwrap();
        corpus.tracks.push(scene_tracks(&spec, &scene));
        corpus.episodes.extend(scene.episodes);
    }
    corpus
}

const HEAD: [usize; 5] = [0, 1, 2, 3, 4];
const LEGS: [usize; 4] = [13, 14, 15, 16];

fn centroid(w: &WindowSample, k: usize, t: usize, joints: &[usize], axis: usize) -> f64 {
    joints.iter().map(|&j| w.joint(k, t, j)[axis]).sum::<f64>() / joints.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Largest per-person temporal spread, over the last `tail` frames, of the
/// head's horizontal position and the legs' vertical position.
pub fn amplitude_features(w: &WindowSample, tail: usize) -> [f64; 2] {
    let start = w.frames - tail.min(w.frames);
    let mut out = [0.0f64; 2];
    for k in 0..w.person_count() {
        let head: Vec<f64> = (start..w.frames).map(|t| centroid(w, k, t, &HEAD, 0)).collect();
        let legs: Vec<f64> = (start..w.frames).map(|t| centroid(w, k, t, &LEGS, 1)).collect();
        out[0] = out[0].max(std_dev(&head));
        out[1] = out[1].max(std_dev(&legs));
    }
    out
}

/// Logistic regression by full-batch gradient descent on standardized
/// features. Returns a classifier closure.
pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], iters: usize, lr: f64) -> impl Fn(&[f64]) -> bool {
    let d = x[0].len();
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            v.sqrt().max(1e-12)
        })
        .collect();
    let z = move |r: &[f64]| -> Vec<f64> { (0..d).map(|j| (r[j] - mean[j]) / sd[j]).collect() };
    let zs: Vec<Vec<f64>> = x.iter().map(|r| z(r)).collect();
    let mut w = vec![0.0; d + 1];
    for _ in 0..iters {
        let mut grad = vec![0.0; d + 1];
        for (r, &label) in zs.iter().zip(y) {
            let s = w[d] + (0..d).map(|j| w[j] * r[j]).sum::<f64>();
            let err = 1.0 / (1.0 + (-s).exp()) - if label { 1.0 } else { 0.0 };
            for j in 0..d {
                grad[j] += err * r[j];
            }
            grad[d] += err;
        }
        for j in 0..=d {
            w[j] -= lr * grad[j] / n;
        }
    }
    move |r: &[f64]| {
        let r = z(r);
        w[d] + (0..d).map(|j| w[j] * r[j]).sum::<f64>() > 0.0
    }
}

/// Precision/recall F1 with 0/0 taken as 0.
pub fn f1(pairs: impl IntoIterator<Item = (bool, bool)>) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (label, pred) in pairs {
        match (label, pred) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            _ => {}
        }
    }
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

/// Initialized parameters with random attention score weights and a random
/// input standardization, so no head starts out uniform.
pub fn random_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa77e);
    for (name, t) in p.tensors.iter_mut() {
        if ["jatt.out.w", "tatt.out.w", "patt.out.w"].contains(&name.as_str()) {
            let bound = (6.0 / t.shape()[0] as f64).sqrt();
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        }
    }
    let dims = JOINT_COUNT * 2;
    p.input_norm = InputNorm {
        shift: (0..dims).map(|_| rng.gen_range(-0.3..0.3)).collect(),
        scale: (0..dims).map(|_| rng.gen_range(0.5..2.0)).collect(),
    };
    p
}

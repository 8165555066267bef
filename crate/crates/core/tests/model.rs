//! The graph-built model against a reference written as plain loops.

mod common;

use behavior_attn::dataset::WindowSample;
use behavior_attn::model::{forward, load_checkpoint, loss_and_grads, save_checkpoint, ModelConfig, ModelParams, Variant};
use behavior_attn::types::JOINT_COUNT;
use common::{random_params, random_window, tiny_config};
use proptest::prelude::*;

type Seq = Vec<Vec<f64>>; // [time][channel]

struct Ref<'a> {
    p: &'a ModelParams,
}

impl Ref<'_> {
    fn t(&self, name: &str) -> (&[usize], &[f64]) {
        let t = self.p.get(name).unwrap();
        (t.shape(), t.data())
    }

    fn conv(&self, name: &str, x: &Seq) -> Seq {
        let (ws, w) = self.t(&format!("{name}.w"));
        let (_, b) = self.t(&format!("{name}.b"));
        let (k, cin, cout) = (ws[0], ws[1], ws[2]);
        let len = x.len();
        (0..len)
            .map(|t| {
                (0..cout)
                    .map(|co| {
                        let mut s = b[co];
                        for o in 0..k {
                            let src = t as isize + o as isize - (k / 2) as isize;
                            if src < 0 || src >= len as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                s += w[(o * cin + ci) * cout + co] * x[src as usize][ci];
                            }
                        }
                        s.max(0.0)
                    })
                    .collect()
            })
            .collect()
    }

    fn dense(&self, name: &str, x: &[f64], relu: bool) -> Vec<f64> {
        let (ws, w) = self.t(&format!("{name}.w"));
        let (_, b) = self.t(&format!("{name}.b"));
        let (i, o) = (ws[0], ws[1]);
        (0..o)
            .map(|c| {
                let s = b[c] + (0..i).map(|r| x[r] * w[r * o + c]).sum::<f64>();
                if relu {
                    s.max(0.0)
                } else {
                    s
                }
            })
            .collect()
    }

    fn mlp(&self, prefix: &str, layers: usize, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for i in 0..layers {
            h = self.dense(&format!("{prefix}.fc{i}"), &h, true);
        }
        self.dense(&format!("{prefix}.out"), &h, false)
    }
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Logit, a_joint [K][T][17], a_time [K][T], a_person [K].
fn reference(p: &ModelParams, cfg: &ModelConfig, w: &WindowSample) -> (f64, Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>, Vec<f64>) {
    let r = Ref { p };
    let (kp, t, j) = (w.person_count(), w.frames, JOINT_COUNT);
    let c = cfg.feature_channels();
    let n = &p.input_norm;
    let raw = |k: usize, jj: usize| -> Seq {
        (0..t)
            .map(|f| {
                let [x, y] = w.joint(k, f, jj);
                let (a, b) = (2 * jj, 2 * jj + 1);
                vec![(x - n.shift[a]) * n.scale[a], (y - n.shift[b]) * n.scale[b]]
            })
            .collect()
    };
    let mut person_feats = Vec::new();
    let mut a_joint_all = Vec::new();
    let mut a_time_all = Vec::new();
    for k in 0..kp {
        // feats[j][t][c]
        let mut feats: Vec<Seq> = (0..j)
            .map(|jj| {
                let mut h = raw(k, jj);
                for i in 0..cfg.backbone_channels.len() {
                    h = r.conv(&format!("backbone.conv{i}"), &h);
                }
                h
            })
            .collect();
        let mut a_joint = vec![vec![1.0 / j as f64; j]; t];
        if cfg.variant.has_joint_attention() {
            let hj: Vec<Seq> = (0..j)
                .map(|jj| {
                    let mut h = raw(k, jj);
                    for i in 0..cfg.jatt.tcn_layers {
                        h = r.conv(&format!("jatt.conv{i}"), &h);
                    }
                    h
                })
                .collect();
            for f in 0..t {
                let cat: Vec<f64> = (0..j).flat_map(|jj| hj[jj][f].clone()).collect();
                a_joint[f] = softmax(&r.mlp("jatt", cfg.jatt.fc.len(), &cat));
                for jj in 0..j {
                    for v in feats[jj][f].iter_mut() {
                        *v *= a_joint[f][jj];
                    }
                }
            }
        }
        let mut a_time = vec![1.0 / t as f64; t];
        if cfg.variant.has_time_attention() {
            let mean: Seq = (0..t)
                .map(|f| (0..c).map(|ch| (0..j).map(|jj| feats[jj][f][ch]).sum::<f64>() / j as f64).collect())
                .collect();
            let mut h = mean;
            for i in 0..cfg.tatt.tcn_layers {
                h = r.conv(&format!("tatt.conv{i}"), &h);
            }
            let scores: Vec<f64> = h.iter().map(|row| r.mlp("tatt", cfg.tatt.fc.len(), row)[0]).collect();
            a_time = softmax(&scores);
        }
        let pooled: Vec<f64> = (0..j)
            .flat_map(|jj| {
                let feats = &feats;
                let a_time = &a_time;
                (0..c).map(move |ch| (0..t).map(|f| a_time[f] * feats[jj][f][ch]).sum::<f64>())
            })
            .collect();
        person_feats.push(pooled);
        a_joint_all.push(a_joint);
        a_time_all.push(a_time);
    }
    let a_person = if cfg.variant.has_person_attention() {
        let scores: Vec<f64> = person_feats.iter().map(|x| r.mlp("patt", cfg.patt_fc.len(), x)[0]).collect();
        softmax(&scores)
    } else {
        vec![1.0 / kp as f64; kp]
    };
    let scene: Vec<f64> = (0..j * c).map(|i| (0..kp).map(|k| a_person[k] * person_feats[k][i]).sum()).collect();
    let logit = r.mlp("classifier", cfg.classifier_fc.len(), &scene)[0];
    (logit, a_joint_all, a_time_all, a_person)
}

fn check(variant: Variant, cfg: ModelConfig, persons: usize, seed: u64) {
    let params = random_params(&cfg, seed);
    let w = random_window(persons, cfg.frames, seed + 1);
    let rec = forward(&params, &cfg, &w).unwrap();
    let (logit, aj, at, ap) = reference(&params, &cfg, &w);
    let tol = 1e-9 * logit.abs().max(1.0);
    assert!((rec.logit - logit).abs() < tol, "{variant}: {} vs {logit}", rec.logit);
    let aj: Vec<f64> = aj.into_iter().flatten().flatten().collect();
    let at: Vec<f64> = at.into_iter().flatten().collect();
    for (got, want) in [(&rec.a_joint, &aj), (&rec.a_time, &at), (&rec.a_person, &ap)] {
        assert_eq!(got.len(), want.len(), "{variant}");
        assert!(got.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-9), "{variant}");
    }
}

#[test]
fn every_variant_matches_the_loop_reference() {
    for variant in Variant::ALL {
        for (persons, seed) in [(1, 1), (3, 2), (5, 3)] {
            check(variant, tiny_config(variant), persons, seed);
        }
        let mut cfg = ModelConfig::compact(variant, 24);
        cfg.backbone_channels = vec![4, 6];
        check(variant, cfg, 2, 4);
    }
}

#[test]
fn parameters_do_not_depend_on_person_count() {
    let cfg = tiny_config(Variant::PtjAtt);
    let params = ModelParams::init(&cfg, 0).unwrap();
    for k in [1, 2, 7] {
        let w = random_window(k, cfg.frames, k as u64);
        let (_, grads) = loss_and_grads(&params, &cfg, &[&w], 1.0).unwrap();
        assert_eq!(grads.len(), params.tensors.len());
        for (name, g) in &grads {
            assert_eq!(g.shape(), params.get(name).unwrap().shape());
        }
    }
}

#[test]
fn checkpoints_reload_to_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    for variant in Variant::ALL {
        let cfg = tiny_config(variant);
        let params = random_params(&cfg, 5);
        let path = dir.path().join(format!("{variant}.json"));
        save_checkpoint(&path, &cfg, &params).unwrap();
        let (cfg2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg2, cfg);
        let w = random_window(3, cfg.frames, 8);
        assert_eq!(forward(&params, &cfg, &w).unwrap(), forward(&params2, &cfg2, &w).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attention_is_a_simplex_and_persons_are_exchangeable(
        variant in prop::sample::select(Variant::ALL.to_vec()),
        persons in 1usize..6,
        seed in any::<u64>(),
        rot in 0usize..6,
    ) {
        let cfg = tiny_config(variant);
        let params = random_params(&cfg, seed);
        let w = random_window(persons, cfg.frames, seed ^ 1);
        let rec = forward(&params, &cfg, &w).unwrap();
        for (vals, group) in [(&rec.a_joint, JOINT_COUNT), (&rec.a_time, cfg.frames), (&rec.a_person, persons)] {
            for chunk in vals.chunks(group) {
                prop_assert!(chunk.iter().all(|&v| v >= 0.0));
                prop_assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        let mut order: Vec<usize> = (0..persons).collect();
        order.rotate_left(rot % persons);
        let moved = forward(&params, &cfg, &w.permuted(&order)).unwrap();
        prop_assert!((moved.logit - rec.logit).abs() < 1e-9);
    }
}

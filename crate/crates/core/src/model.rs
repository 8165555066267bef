//! Person-, time- and joint-attention models over multi-person pose windows.
//!
//! All variants share the same person-level pipeline: an optional joint
//! attention head weighting a per-joint temporal convolution backbone, then
//! temporal pooling (attention or mean), then person pooling (attention or
//! mean), then a small classifier producing one logit per window.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid_scalar, Graph, Tensor, Var};
use crate::dataset::WindowSample;
use crate::error::{Error, Result};
use crate::types::JOINT_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "tcn")]
    Tcn,
    #[serde(rename = "p_att")]
    PAtt,
    #[serde(rename = "pt_att")]
    PtAtt,
    #[serde(rename = "ptj_att")]
    PtjAtt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Tcn, Variant::PAtt, Variant::PtAtt, Variant::PtjAtt];

    pub fn has_person_attention(self) -> bool {
        self != Variant::Tcn
    }

    pub fn has_time_attention(self) -> bool {
        matches!(self, Variant::PtAtt | Variant::PtjAtt)
    }

    pub fn has_joint_attention(self) -> bool {
        self == Variant::PtjAtt
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Tcn => "TCN",
            Variant::PAtt => "P-Att",
            Variant::PtAtt => "PT-Att",
            Variant::PtjAtt => "PTJ-Att",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "tcn" => Ok(Variant::Tcn),
            "patt" => Ok(Variant::PAtt),
            "ptatt" => Ok(Variant::PtAtt),
            "ptjatt" => Ok(Variant::PtjAtt),
            _ => Err(Error::Config(format!(
                "unknown variant {s:?} (tcn, p-att, pt-att, ptj-att)"
            ))),
        }
    }
}

/// Temporal-convolution stack followed by dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub tcn_layers: usize,
    pub tcn_channels: usize,
    pub kernel: usize,
    pub fc: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Frames per window.
    pub frames: usize,
    pub joint_count: usize,
    pub backbone_channels: Vec<usize>,
    pub backbone_kernel: usize,
    pub jatt: HeadConfig,
    pub tatt: HeadConfig,
    pub patt_fc: Vec<usize>,
    pub classifier_fc: Vec<usize>,
}

impl ModelConfig {
    /// Full-width configuration: 4-layer 64/128/256/256 backbone, joint head
    /// 2×64 conv + 512/128 dense, time head 2×64 conv + 128 dense, person
    /// head and classifier 1024/256 dense.
    pub fn full(variant: Variant, frames: usize) -> Self {
        ModelConfig {
            variant,
            frames,
            joint_count: JOINT_COUNT,
            backbone_channels: vec![64, 128, 256, 256],
            backbone_kernel: 5,
            jatt: HeadConfig {
                tcn_layers: 2,
                tcn_channels: 64,
                kernel: 5,
                fc: vec![512, 128],
            },
            tatt: HeadConfig {
                tcn_layers: 2,
                tcn_channels: 64,
                kernel: 5,
                fc: vec![128],
            },
            patt_fc: vec![1024, 256],
            classifier_fc: vec![1024, 256],
        }
    }

    /// Same topology with narrow layers, for single-core training runs.
    pub fn compact(variant: Variant, frames: usize) -> Self {
        ModelConfig {
            variant,
            frames,
            joint_count: JOINT_COUNT,
            backbone_channels: vec![8, 8, 8, 8],
            backbone_kernel: 5,
            jatt: HeadConfig {
                tcn_layers: 2,
                tcn_channels: 8,
                kernel: 5,
                fc: vec![32, 16],
            },
            tatt: HeadConfig {
                tcn_layers: 2,
                tcn_channels: 8,
                kernel: 5,
                fc: vec![16],
            },
            patt_fc: vec![32, 16],
            classifier_fc: vec![32, 16],
        }
    }

    pub fn feature_channels(&self) -> usize {
        *self.backbone_channels.last().expect("backbone has layers")
    }

    pub fn validate(&self) -> Result<()> {
        let odd = |k: usize| k % 2 == 1;
        if self.joint_count != JOINT_COUNT {
            return Err(Error::Config(format!("joint_count must be {JOINT_COUNT}")));
        }
        if self.frames < 2 || self.backbone_channels.is_empty() {
            return Err(Error::Config("need ≥2 frames and ≥1 backbone layer".into()));
        }
        if !odd(self.backbone_kernel) || !odd(self.jatt.kernel) || !odd(self.tatt.kernel) {
            return Err(Error::Config("temporal kernels must be odd".into()));
        }
        let widths = self
            .backbone_channels
            .iter()
            .chain(&self.patt_fc)
            .chain(&self.classifier_fc)
            .chain(&self.jatt.fc)
            .chain(&self.tatt.fc);
        if widths.into_iter().any(|&w| w == 0) || self.jatt.tcn_channels == 0 || self.tatt.tcn_channels == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Every parameter tensor of this variant, in initialization order.
    pub fn layer_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let conv_stack = |out: &mut Vec<(String, Vec<usize>)>, prefix: &str, c_in: usize, widths: &[usize], k: usize| {
            let mut c = c_in;
            for (i, &w) in widths.iter().enumerate() {
                out.push((format!("{prefix}.conv{i}.w"), vec![k, c, w]));
                out.push((format!("{prefix}.conv{i}.b"), vec![w]));
                c = w;
            }
            c
        };
        let dense_stack = |out: &mut Vec<(String, Vec<usize>)>, prefix: &str, c_in: usize, widths: &[usize], n_out: usize| {
            let mut c = c_in;
            for (i, &w) in widths.iter().enumerate() {
                out.push((format!("{prefix}.fc{i}.w"), vec![c, w]));
                out.push((format!("{prefix}.fc{i}.b"), vec![w]));
                c = w;
            }
            out.push((format!("{prefix}.out.w"), vec![c, n_out]));
            out.push((format!("{prefix}.out.b"), vec![n_out]));
        };
        let c = self.feature_channels();
        conv_stack(&mut out, "backbone", 2, &self.backbone_channels, self.backbone_kernel);
        if self.variant.has_joint_attention() {
            let widths = vec![self.jatt.tcn_channels; self.jatt.tcn_layers];
            let jc = conv_stack(&mut out, "jatt", 2, &widths, self.jatt.kernel);
            dense_stack(&mut out, "jatt", jc * self.joint_count, &self.jatt.fc, self.joint_count);
        }
        if self.variant.has_time_attention() {
            let widths = vec![self.tatt.tcn_channels; self.tatt.tcn_layers];
            let tc = conv_stack(&mut out, "tatt", c, &widths, self.tatt.kernel);
            dense_stack(&mut out, "tatt", tc, &self.tatt.fc, 1);
        }
        if self.variant.has_person_attention() {
            dense_stack(&mut out, "patt", self.joint_count * c, &self.patt_fc, 1);
        }
        dense_stack(&mut out, "classifier", self.joint_count * c, &self.classifier_fc, 1);
        out
    }
}

const ATTENTION_SCORES: [&str; 3] = ["jatt.out.w", "tatt.out.w", "patt.out.w"];

/// Named learnable tensors of one model. Person-level weights exist once
/// and are shared by every person in a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tensors: BTreeMap<String, Tensor>,
    pub input_norm: InputNorm,
}

/// Per joint and axis standardization of input coordinates,
/// `(x − shift) · scale`, fitted on training windows and never learned.
/// Motion of a few joints (a shaking head) is small next to the static
/// skeleton; standardizing puts every joint's motion on the same footing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Floor on the standard deviation so a motionless joint is not blown up.
pub const INPUT_SD_FLOOR: f64 = 1e-3;

impl Default for InputNorm {
    fn default() -> Self {
        InputNorm {
            shift: vec![0.0; JOINT_COUNT * 2],
            scale: vec![1.0; JOINT_COUNT * 2],
        }
    }
}

impl InputNorm {
    /// Mean and inverse standard deviation of every joint coordinate over
    /// all persons and frames of `windows`.
    pub fn fit(windows: &[&WindowSample]) -> Self {
        let dims = JOINT_COUNT * 2;
        let mut sum = vec![0.0; dims];
        let mut sq = vec![0.0; dims];
        let mut n = 0.0;
        for w in windows {
            for frame in w.persons.chunks_exact(dims) {
                n += 1.0;
                for (d, &v) in frame.iter().enumerate() {
                    sum[d] += v;
                    sq[d] += v * v;
                }
            }
        }
        if n == 0.0 {
            return InputNorm::default();
        }
        let shift: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let scale = sq
            .iter()
            .zip(&shift)
            .map(|(q, m)| 1.0 / (q / n - m * m).max(0.0).sqrt().max(INPUT_SD_FLOOR))
            .collect();
        InputNorm { shift, scale }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = JOINT_COUNT * 2;
        if self.shift.len() != dims || self.scale.len() != dims {
            return Err(Error::Format(format!("input_norm needs {dims} shifts and scales")));
        }
        if self.shift.iter().chain(&self.scale).any(|v| !v.is_finite()) {
            return Err(Error::NumericFault("input_norm is not finite".into()));
        }
        Ok(())
    }
}

impl ModelParams {
    /// He-uniform weights (bound `√(6 / fan_in)`), zero biases. Attention
    /// score projections start at zero, so every head begins as a plain mean
    /// and no person, frame or joint is favored before training.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape) in cfg.layer_shapes() {
            let t = if name.ends_with(".b") || ATTENTION_SCORES.contains(&name.as_str()) {
                Tensor::zeros(&shape)
            } else {
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let bound = (6.0 / fan_in as f64).sqrt();
                Tensor::from_fn(&shape, |_| rng.gen_range(-bound..bound))
            };
            tensors.insert(name, t);
        }
        Ok(ModelParams {
            tensors,
            input_norm: InputNorm::default(),
        })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("missing parameter {name}")))
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Confirms the tensors match the layer layout of `cfg`.
    pub fn check_layout(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = cfg.layer_shapes();
        if expected.len() != self.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, config expects {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for (name, shape) in expected {
            let t = self.get(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Format(format!(
                    "{name}: checkpoint shape {:?}, config expects {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Attention outputs and pooled features for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    /// `[K, T, 17]`, each `(k, t)` row on the simplex; uniform without a joint head.
    pub a_joint: Vec<f64>,
    /// `[K, T]`, each person's row on the simplex; uniform without a time head.
    pub a_time: Vec<f64>,
    /// `[K]` on the simplex; uniform without a person head.
    pub a_person: Vec<f64>,
    /// `[K, 17, C]` time-pooled person features.
    pub person_features: Vec<f64>,
    pub persons: usize,
    pub frames: usize,
    pub channels: usize,
    pub logit: f64,
}

impl AttentionRecord {
    pub fn probability(&self) -> f64 {
        sigmoid_scalar(self.logit)
    }

    /// Person with the largest attention weight (lowest index on ties).
    pub fn attended_person(&self) -> usize {
        self.a_person
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &a)| if a > best.1 { (i, a) } else { best })
            .0
    }

    pub fn person_feature(&self, k: usize) -> &[f64] {
        let n = JOINT_COUNT * self.channels;
        &self.person_features[k * n..(k + 1) * n]
    }
}

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub logit: Var,
    pub a_joint: Option<Var>,
    pub a_time: Option<Var>,
    pub a_person: Option<Var>,
    pub person_features: Var,
}

/// `[K, T, 17, 2]` window coordinates, standardized by `norm` and
/// rearranged to per-joint sequences `[K·17, T, 2]`.
pub fn joint_sequences(window: &WindowSample, norm: &InputNorm) -> Result<Tensor> {
    let (k, t) = (window.person_count(), window.frames);
    let mut data = Vec::with_capacity(window.persons.len());
    for p in 0..k {
        for j in 0..JOINT_COUNT {
            for f in 0..t {
                let [x, y] = window.joint(p, f, j);
                let (a, b) = (2 * j, 2 * j + 1);
                data.push((x - norm.shift[a]) * norm.scale[a]);
                data.push((y - norm.shift[b]) * norm.scale[b]);
            }
        }
    }
    Tensor::new(vec![k * JOINT_COUNT, t, 2], data)
}

fn conv_stack(g: &mut Graph, p: &BTreeMap<String, Var>, prefix: &str, layers: usize, mut h: Var) -> Result<Var> {
    for i in 0..layers {
        let c = g.conv1d(h, p[&format!("{prefix}.conv{i}.w")], p[&format!("{prefix}.conv{i}.b")])?;
        h = g.relu(c)?;
    }
    Ok(h)
}

fn dense_stack(g: &mut Graph, p: &BTreeMap<String, Var>, prefix: &str, layers: usize, mut h: Var) -> Result<Var> {
    for i in 0..layers {
        let d = g.dense(h, p[&format!("{prefix}.fc{i}.w")], p[&format!("{prefix}.fc{i}.b")])?;
        h = g.relu(d)?;
    }
    g.dense(h, p[&format!("{prefix}.out.w")], p[&format!("{prefix}.out.b")])
}

/// Records the forward pass of `window` on `g`, reading parameters from `p`.
pub fn forward_on_graph(
    g: &mut Graph,
    p: &BTreeMap<String, Var>,
    cfg: &ModelConfig,
    norm: &InputNorm,
    window: &WindowSample,
) -> Result<ForwardNodes> {
    let k = window.person_count();
    if k == 0 {
        return Err(Error::Invalid(format!(
            "window {}@{} has no persons",
            window.video_id, window.end_frame
        )));
    }
    let (t, j) = (window.frames, JOINT_COUNT);
    let c = cfg.feature_channels();
    let x_in = g.input(joint_sequences(window, norm)?)?;

    // [K·17, T, C] → [K, 17, T, C]
    let feats = conv_stack(g, p, "backbone", cfg.backbone_channels.len(), x_in)?;
    let feats = g.reshape(feats, &[k, j, t, c])?;

    let (weighted, a_joint) = if cfg.variant.has_joint_attention() {
        let h = conv_stack(g, p, "jatt", cfg.jatt.tcn_layers, x_in)?;
        let hc = cfg.jatt.tcn_channels;
        let h = g.reshape(h, &[k, j, t, hc])?;
        let h = g.permute(h, &[0, 2, 1, 3])?;
        let h = g.reshape(h, &[k, t, j * hc])?;
        let scores = dense_stack(g, p, "jatt", cfg.jatt.fc.len(), h)?;
        let a = g.softmax(scores, 2)?;
        let a_kjt = g.permute(a, &[0, 2, 1])?;
        let a_kjt = g.reshape(a_kjt, &[k, j, t, 1])?;
        (g.mul(feats, a_kjt)?, Some(a))
    } else {
        (feats, None)
    };

    let (pooled, a_time) = if cfg.variant.has_time_attention() {
        let m = g.mean(weighted, 1)?;
        let h = conv_stack(g, p, "tatt", cfg.tatt.tcn_layers, m)?;
        let scores = dense_stack(g, p, "tatt", cfg.tatt.fc.len(), h)?;
        let scores = g.reshape(scores, &[k, t])?;
        let a = g.softmax(scores, 1)?;
        let w = g.reshape(a, &[k, 1, t, 1])?;
        (g.weighted_sum(weighted, w, 2)?, Some(a))
    } else {
        (g.mean(weighted, 2)?, None)
    };

    let (scene, a_person) = if cfg.variant.has_person_attention() {
        let flat = g.reshape(pooled, &[k, j * c])?;
        let scores = dense_stack(g, p, "patt", cfg.patt_fc.len(), flat)?;
        let scores = g.reshape(scores, &[k])?;
        let a = g.softmax(scores, 0)?;
        let w = g.reshape(a, &[k, 1, 1])?;
        (g.weighted_sum(pooled, w, 0)?, Some(a))
    } else {
        (g.mean(pooled, 0)?, None)
    };

    let flat = g.reshape(scene, &[1, j * c])?;
    let logit = dense_stack(g, p, "classifier", cfg.classifier_fc.len(), flat)?;
    let logit = g.reshape(logit, &[1])?;
    Ok(ForwardNodes {
        logit,
        a_joint,
        a_time,
        a_person,
        person_features: pooled,
    })
}

fn bind(g: &mut Graph, params: &ModelParams, trainable: bool) -> Result<BTreeMap<String, Var>> {
    params
        .tensors
        .iter()
        .map(|(name, t)| {
            let v = if trainable {
                g.param(t.clone())?
            } else {
                g.input(t.clone())?
            };
            Ok((name.clone(), v))
        })
        .collect()
}

/// Inference on one window.
pub fn forward(params: &ModelParams, cfg: &ModelConfig, window: &WindowSample) -> Result<AttentionRecord> {
    let mut g = Graph::new();
    let vars = bind(&mut g, params, false)?;
    let nodes = forward_on_graph(&mut g, &vars, cfg, &params.input_norm, window)?;
    let (k, t) = (window.person_count(), window.frames);
    let uniform = |n: usize, groups: usize| vec![1.0 / n as f64; n * groups];
    let read = |v: Option<Var>| v.map(|v| g.value(v).data().to_vec());
    Ok(AttentionRecord {
        a_joint: read(nodes.a_joint).unwrap_or_else(|| uniform(JOINT_COUNT, k * t)),
        a_time: read(nodes.a_time).unwrap_or_else(|| uniform(t, k)),
        a_person: read(nodes.a_person).unwrap_or_else(|| uniform(k, 1)),
        person_features: g.value(nodes.person_features).data().to_vec(),
        persons: k,
        frames: t,
        channels: cfg.feature_channels(),
        logit: g.value(nodes.logit).item(),
    })
}

/// Thresholded probability; `probability ≥ threshold` is positive.
pub fn predict(params: &ModelParams, cfg: &ModelConfig, window: &WindowSample, threshold: f64) -> Result<(bool, f64)> {
    let prob = forward(params, cfg, window)?.probability();
    Ok((prob >= threshold, prob))
}

/// Mean weighted BCE over `batch` and its gradient for every parameter.
/// Each window gets its own graph; windows are never padded to a common
/// person count.
pub fn loss_and_grads(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&WindowSample],
    positive_weight: f64,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
    for window in batch {
        let mut g = Graph::new();
        let vars = bind(&mut g, params, true)?;
        let nodes = forward_on_graph(&mut g, &vars, cfg, &params.input_norm, window)?;
        let target = if window.label { 1.0 } else { 0.0 };
        let loss = g.bce_with_logits(nodes.logit, &[target], positive_weight)?;
        total += g.value(loss).item() * scale;
        let mut wg = g.backward(loss)?;
        for (name, v) in &vars {
            let Some(mut d) = wg.take(*v) else { continue };
            d.data_mut().iter_mut().for_each(|x| *x *= scale);
            match grads.get_mut(name) {
                Some(acc) => acc.data_mut().iter_mut().zip(d.data()).for_each(|(a, b)| *a += b),
                None => {
                    grads.insert(name.clone(), d);
                }
            }
        }
    }
    Ok((total, grads))
}

/// Mean loss without gradients.
pub fn mean_loss(params: &ModelParams, cfg: &ModelConfig, windows: &[&WindowSample], positive_weight: f64) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Invalid("empty window set".into()));
    }
    let mut total = 0.0;
    for w in windows {
        let mut g = Graph::new();
        let vars = bind(&mut g, params, false)?;
        let nodes = forward_on_graph(&mut g, &vars, cfg, &params.input_norm, w)?;
        let loss = g.bce_with_logits(nodes.logit, &[if w.label { 1.0 } else { 0.0 }], positive_weight)?;
        total += g.value(loss).item();
    }
    Ok(total / windows.len() as f64)
}

pub const CHECKPOINT_FORMAT: &str = "behavior-attn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredCheckpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    input_norm: InputNorm,
    params: BTreeMap<String, StoredTensor>,
}

/// Saves a JSON checkpoint: config plus a map from parameter name to shape
/// and row-major values.
pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, params: &ModelParams) -> Result<()> {
    let stored = StoredCheckpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        input_norm: params.input_norm.clone(),
        params: params
            .tensors
            .iter()
            .map(|(k, t)| {
                (
                    k.clone(),
                    StoredTensor {
                        shape: t.shape().to_vec(),
                        values: t.data().to_vec(),
                    },
                )
            })
            .collect(),
    };
    let text = serde_json::to_string(&stored).expect("checkpoint serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stored: StoredCheckpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if stored.format != CHECKPOINT_FORMAT || stored.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            stored.format,
            stored.version
        )));
    }
    let tensors = stored
        .params
        .into_iter()
        .map(|(k, s)| Ok((k, Tensor::new(s.shape, s.values)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    stored.input_norm.validate()?;
    let params = ModelParams {
        tensors,
        input_norm: stored.input_norm,
    };
    params.check_layout(&stored.config)?;
    Ok((stored.config, params))
}

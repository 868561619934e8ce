//! The three classifiers and their checkpoint format.
//!
//! * Symptoms: multinomial logistic regression, optionally with one hidden
//!   relu layer.
//! * Image: a two-block convolutional backbone (optionally frozen) followed by
//!   two more conv/pool blocks and a 64-wide embedding.
//! * Hybrid: the image path up to its embedding, a 32-wide symptom embedding,
//!   concatenated and merged through a dense layer.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canonical;
use crate::error::{Error, Result};
use crate::imaging::ImageTensor;
use crate::nn::{Conv2d, Dense, Flatten, Layer, MaxPool2x2, Param, Relu, Sequential, Tensor};
use crate::rng::{purpose, RngStream};
use crate::tabular::{NormStats, StageLabel, NUM_STAGES};

pub const CHECKPOINT_FORMAT_VERSION: u64 = 1;
/// Width of the image embedding shared by the image and hybrid models.
pub const IMAGE_EMBEDDING: usize = 64;
/// Width of the hybrid model's symptom embedding.
pub const SYMPTOM_EMBEDDING: usize = 32;
/// Width of the hybrid merge layer.
pub const FUSION_WIDTH: usize = 64;
pub const MIN_IMAGE_SIDE: usize = 32;
const KERNEL: usize = 3;
/// Number of leading conv blocks treated as the (freezable) backbone.
const BACKBONE_BLOCKS: usize = 2;
const CONV_CHANNELS: [usize; 5] = [3, 8, 16, 32, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Symptoms,
    Image,
    Hybrid,
}

impl ModelKind {
    pub fn uses_features(self) -> bool {
        matches!(self, ModelKind::Symptoms | ModelKind::Hybrid)
    }

    pub fn uses_image(self) -> bool {
        matches!(self, ModelKind::Image | ModelKind::Hybrid)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Symptoms => "symptoms",
            ModelKind::Image => "image",
            ModelKind::Hybrid => "hybrid",
        }
    }

    /// Parses a modality name; `mri` is accepted for the image model.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "symptoms" => Ok(ModelKind::Symptoms),
            "image" | "mri" => Ok(ModelKind::Image),
            "hybrid" => Ok(ModelKind::Hybrid),
            other => Err(Error::InvalidArgument(format!(
                "unknown modality `{other}` (expected symptoms, mri or hybrid)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything needed to rebuild a model's layer graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub kind: ModelKind,
    pub n_features: Option<usize>,
    pub hidden_width: Option<usize>,
    pub deep: bool,
    pub image_side: Option<usize>,
    pub backbone_frozen: bool,
    pub seed: u64,
}

/// One patient's inputs. Features are raw; the model normalises them.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sample<'a> {
    pub features: Option<&'a [f64]>,
    pub image: Option<&'a ImageTensor>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub arch: Architecture,
    image: Option<Sequential<f64>>,
    symptoms: Option<Sequential<f64>>,
    head: Option<Sequential<f64>>,
    norm_stats: Option<NormStats>,
    feature_names: Vec<String>,
    /// Free-form provenance (effective run config, seed) echoed into checkpoints.
    pub metadata: Value,
}

type Seq = Sequential<f64>;

fn image_blocks(rng: &mut RngStream, frozen: bool, side: usize) -> Result<(Vec<Layer<f64>>, usize)> {
    if side < MIN_IMAGE_SIDE {
        return Err(Error::InvalidArgument(format!(
            "image side must be ≥ {MIN_IMAGE_SIDE}, got {side}"
        )));
    }
    let mut layers = Vec::new();
    for b in 0..4 {
        let mut conv = Conv2d::new(
            &format!("image.conv{}", b + 1),
            CONV_CHANNELS[b],
            CONV_CHANNELS[b + 1],
            KERNEL,
            1,
            rng,
        );
        if frozen && b < BACKBONE_BLOCKS {
            conv.kernel.frozen = true;
            conv.bias.frozen = true;
        }
        layers.push(Layer::Conv2d(conv));
        layers.push(Layer::Relu(Relu::new()));
        layers.push(Layer::MaxPool(MaxPool2x2::new()));
    }
    layers.push(Layer::Flatten(Flatten::default()));
    let probe = Sequential::new(layers);
    let flat = probe
        .output_shape(&[3, side, side])
        .map_err(|e| Error::InvalidArgument(format!("image side {side} too small for four conv/pool stages: {e}")))?;
    Ok((probe.layers, flat[0]))
}

impl Model {
    fn identity_stats(n: usize) -> NormStats {
        NormStats {
            means: vec![0.0; n],
            stddevs: vec![1.0; n],
            constant_flags: vec![false; n],
        }
    }

    fn default_feature_names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    /// Logistic regression (`deep = false`) or one hidden relu layer.
    pub fn build_symptoms(n_features: usize, hidden_width: usize, deep: bool, seed: u64) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidArgument("n_features must be ≥ 1".into()));
        }
        if deep && hidden_width == 0 {
            return Err(Error::InvalidArgument("hidden_width must be ≥ 1".into()));
        }
        let mut rng = RngStream::new(seed).substream(purpose::INIT);
        let layers = if deep {
            vec![
                Layer::Dense(Dense::new("symptoms.fc1", n_features, hidden_width, &mut rng)),
                Layer::Relu(Relu::new()),
                Layer::Dense(Dense::new("symptoms.fc2", hidden_width, NUM_STAGES, &mut rng)),
            ]
        } else {
            vec![Layer::Dense(Dense::new("symptoms.fc1", n_features, NUM_STAGES, &mut rng))]
        };
        Ok(Self {
            arch: Architecture {
                kind: ModelKind::Symptoms,
                n_features: Some(n_features),
                hidden_width: deep.then_some(hidden_width),
                deep,
                image_side: None,
                backbone_frozen: false,
                seed,
            },
            image: None,
            symptoms: Some(Sequential::new(layers)),
            head: None,
            norm_stats: Some(Self::identity_stats(n_features)),
            feature_names: Self::default_feature_names(n_features),
            metadata: Value::Null,
        })
    }

    pub fn build_image(side: usize, backbone_frozen: bool, seed: u64) -> Result<Self> {
        let mut rng = RngStream::new(seed).substream(purpose::INIT);
        let (mut layers, flat) = image_blocks(&mut rng, backbone_frozen, side)?;
        layers.push(Layer::Dense(Dense::new("image.fc1", flat, IMAGE_EMBEDDING, &mut rng)));
        layers.push(Layer::Relu(Relu::new()));
        layers.push(Layer::Dense(Dense::new("image.fc2", IMAGE_EMBEDDING, NUM_STAGES, &mut rng)));
        Ok(Self {
            arch: Architecture {
                kind: ModelKind::Image,
                n_features: None,
                hidden_width: None,
                deep: true,
                image_side: Some(side),
                backbone_frozen,
                seed,
            },
            image: Some(Sequential::new(layers)),
            symptoms: None,
            head: None,
            norm_stats: None,
            feature_names: Vec::new(),
            metadata: Value::Null,
        })
    }

    pub fn build_hybrid(side: usize, n_features: usize, seed: u64, backbone_frozen: bool) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidArgument("n_features must be ≥ 1".into()));
        }
        let mut rng = RngStream::new(seed).substream(purpose::INIT);
        let (mut layers, flat) = image_blocks(&mut rng, backbone_frozen, side)?;
        layers.push(Layer::Dense(Dense::new("image.fc1", flat, IMAGE_EMBEDDING, &mut rng)));
        layers.push(Layer::Relu(Relu::new()));
        let symptoms = vec![
            Layer::Dense(Dense::new("symptoms.fc1", n_features, SYMPTOM_EMBEDDING, &mut rng)),
            Layer::Relu(Relu::new()),
        ];
        let fused = IMAGE_EMBEDDING + SYMPTOM_EMBEDDING;
        let head = vec![
            Layer::Dense(Dense::new("fusion.fc1", fused, FUSION_WIDTH, &mut rng)),
            Layer::Relu(Relu::new()),
            Layer::Dense(Dense::new("fusion.fc2", FUSION_WIDTH, NUM_STAGES, &mut rng)),
        ];
        Ok(Self {
            arch: Architecture {
                kind: ModelKind::Hybrid,
                n_features: Some(n_features),
                hidden_width: None,
                deep: true,
                image_side: Some(side),
                backbone_frozen,
                seed,
            },
            image: Some(Sequential::new(layers)),
            symptoms: Some(Sequential::new(symptoms)),
            head: Some(Sequential::new(head)),
            norm_stats: Some(Self::identity_stats(n_features)),
            feature_names: Self::default_feature_names(n_features),
            metadata: Value::Null,
        })
    }

    pub fn build(arch: &Architecture) -> Result<Self> {
        let need = |v: Option<usize>, what: &str| {
            v.ok_or_else(|| Error::Checkpoint(format!("{} architecture lacks {what}", arch.kind)))
        };
        let mut model = match arch.kind {
            ModelKind::Symptoms => Self::build_symptoms(
                need(arch.n_features, "n_features")?,
                arch.hidden_width.unwrap_or(0),
                arch.deep,
                arch.seed,
            )?,
            ModelKind::Image => Self::build_image(need(arch.image_side, "image_side")?, arch.backbone_frozen, arch.seed)?,
            ModelKind::Hybrid => Self::build_hybrid(
                need(arch.image_side, "image_side")?,
                need(arch.n_features, "n_features")?,
                arch.seed,
                arch.backbone_frozen,
            )?,
        };
        if model.arch != *arch {
            return Err(Error::Checkpoint(format!(
                "architecture {arch:?} is not canonical for kind {}",
                arch.kind
            )));
        }
        model.metadata = Value::Null;
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn set_feature_names(&mut self, names: Vec<String>) -> Result<()> {
        if Some(names.len()) != self.arch.n_features {
            return Err(Error::Shape(format!(
                "{} feature names for a model with {:?} inputs",
                names.len(),
                self.arch.n_features
            )));
        }
        self.feature_names = names;
        Ok(())
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.norm_stats.as_ref()
    }

    pub fn set_norm_stats(&mut self, stats: NormStats) -> Result<()> {
        if !self.kind().uses_features() {
            return Err(Error::InvalidArgument(format!("{} model takes no features", self.kind())));
        }
        if Some(stats.len()) != self.arch.n_features {
            return Err(Error::Shape(format!(
                "norm stats for {} features, model has {:?}",
                stats.len(),
                self.arch.n_features
            )));
        }
        self.norm_stats = Some(stats);
        Ok(())
    }

    fn stacks(&self) -> impl Iterator<Item = &Seq> {
        [&self.image, &self.symptoms, &self.head].into_iter().flatten()
    }

    fn stacks_mut(&mut self) -> impl Iterator<Item = &mut Seq> {
        [&mut self.image, &mut self.symptoms, &mut self.head].into_iter().flatten()
    }

    /// Parameters in canonical order: image path, symptom path, fusion head.
    pub fn params(&self) -> Vec<&Param<f64>> {
        self.stacks().flat_map(|s| s.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        self.stacks_mut().flat_map(|s| s.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Names of the frozen backbone parameters (empty unless frozen).
    pub fn backbone_param_names(&self) -> Vec<String> {
        (1..=BACKBONE_BLOCKS)
            .filter(|_| self.kind().uses_image())
            .flat_map(|b| [format!("image.conv{b}.weight"), format!("image.conv{b}.bias")])
            .collect()
    }

    fn normalised_features(&self, sample: &Sample<'_>) -> Result<Tensor<f64>> {
        let raw = sample
            .features
            .ok_or_else(|| Error::MissingModality(format!("{} model needs symptom features", self.kind())))?;
        let n = self.arch.n_features.unwrap_or(0);
        if raw.len() != n {
            return Err(Error::Shape(format!("expected {n} features, got {}", raw.len())));
        }
        let z = match &self.norm_stats {
            Some(stats) => stats.apply_row(raw)?,
            None => raw.to_vec(),
        };
        Ok(Tensor::from_vec(z))
    }

    fn image_input(&self, sample: &Sample<'_>) -> Result<Tensor<f64>> {
        let img = sample
            .image
            .ok_or_else(|| Error::MissingModality(format!("{} model needs an image", self.kind())))?;
        let side = self.arch.image_side.unwrap_or(0);
        if img.side() != side {
            return Err(Error::Shape(format!("expected {side}×{side} image, got side {}", img.side())));
        }
        Tensor::new(img.shape().to_vec(), img.data().to_vec())
    }

    /// Training-mode forward pass returning logits; caches activations for [`Model::backward`].
    pub fn forward(&mut self, sample: &Sample<'_>) -> Result<Tensor<f64>> {
        match self.kind() {
            ModelKind::Symptoms => {
                let x = self.normalised_features(sample)?;
                self.symptoms.as_mut().expect("symptom path").forward(&x)
            }
            ModelKind::Image => {
                let x = self.image_input(sample)?;
                self.image.as_mut().expect("image path").forward(&x)
            }
            ModelKind::Hybrid => {
                let xf = self.normalised_features(sample)?;
                let xi = self.image_input(sample)?;
                let ei = self.image.as_mut().expect("image path").forward(&xi)?;
                let es = self.symptoms.as_mut().expect("symptom path").forward(&xf)?;
                self.head.as_mut().expect("fusion head").forward(&Tensor::concat(&[&ei, &es]))
            }
        }
    }

    /// Accumulates parameter gradients for the last [`Model::forward`] call.
    pub fn backward(&mut self, dlogits: &Tensor<f64>) -> Result<()> {
        match self.kind() {
            ModelKind::Symptoms => {
                self.symptoms.as_mut().expect("symptom path").backward(dlogits, false)?;
            }
            ModelKind::Image => {
                self.image.as_mut().expect("image path").backward(dlogits, false)?;
            }
            ModelKind::Hybrid => {
                let d = self
                    .head
                    .as_mut()
                    .expect("fusion head")
                    .backward(dlogits, true)?
                    .expect("dx requested");
                let (di, ds) = d.data().split_at(IMAGE_EMBEDDING);
                self.image
                    .as_mut()
                    .expect("image path")
                    .backward(&Tensor::from_vec(di.to_vec()), false)?;
                self.symptoms
                    .as_mut()
                    .expect("symptom path")
                    .backward(&Tensor::from_vec(ds.to_vec()), false)?;
            }
        }
        Ok(())
    }

    /// Inference-mode logits; does not touch training caches.
    pub fn logits(&self, sample: &Sample<'_>) -> Result<Tensor<f64>> {
        match self.kind() {
            ModelKind::Symptoms => self
                .symptoms
                .as_ref()
                .expect("symptom path")
                .infer(&self.normalised_features(sample)?),
            ModelKind::Image => self.image.as_ref().expect("image path").infer(&self.image_input(sample)?),
            ModelKind::Hybrid => {
                let ei = self.image.as_ref().expect("image path").infer(&self.image_input(sample)?)?;
                let es = self
                    .symptoms
                    .as_ref()
                    .expect("symptom path")
                    .infer(&self.normalised_features(sample)?)?;
                self.head.as_ref().expect("fusion head").infer(&Tensor::concat(&[&ei, &es]))
            }
        }
    }

    pub fn predict_proba(&self, sample: &Sample<'_>) -> Result<Prediction> {
        let probs = crate::nn::softmax(&self.logits(sample)?);
        let stage = StageLabel::from_index(probs.argmax())?;
        Ok(Prediction {
            probs: probs.into_data(),
            stage,
        })
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Class probabilities and the arg-max stage (lowest index on ties).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub stage: StageLabel,
}

impl Prediction {
    /// Two-decimal probability vector, e.g. `[0.02, 0.45, 0.51, 0.00, 0.02]`.
    pub fn score_string(&self) -> String {
        let parts: Vec<String> = self.probs.iter().map(|p| format!("{p:.2}")).collect();
        format!("[{}]", parts.join(", "))
    }
}

/// Canonical checkpoint text.
pub fn checkpoint_to_string(model: &Model) -> Result<String> {
    let mut tensors = serde_json::Map::new();
    for p in model.params() {
        tensors.insert(
            p.name.clone(),
            json!({ "shape": p.value.shape(), "data": p.value.data() }),
        );
    }
    let doc = json!({
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": model.kind(),
        "config": {
            "architecture": model.arch,
            "feature_names": model.feature_names,
            "run": model.metadata,
        },
        "tensors": tensors,
        "norm_stats": model.norm_stats,
    });
    canonical::to_canonical_string(&doc)
}

pub fn checkpoint_save(model: &Model, path: &Path) -> Result<()> {
    let text = checkpoint_to_string(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn field<'a>(obj: &'a Value, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::Checkpoint(format!("missing key `{key}`")))
}

fn parse_f64s(v: &Value, what: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::Checkpoint(format!("{what} must be an array")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .filter(|f| f.is_finite())
                .ok_or_else(|| Error::Checkpoint(format!("{what} holds a non-numeric entry")))
        })
        .collect()
}

pub fn checkpoint_from_str(text: &str) -> Result<Model> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed JSON: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Checkpoint("top level must be an object".into()))?;
    for key in obj.keys() {
        if !["format_version", "kind", "config", "tensors", "norm_stats"].contains(&key.as_str()) {
            return Err(Error::Checkpoint(format!("unexpected key `{key}`")));
        }
    }
    let version = field(&doc, "format_version")?
        .as_u64()
        .ok_or_else(|| Error::Checkpoint("format_version must be an integer".into()))?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format_version {version} (expected {CHECKPOINT_FORMAT_VERSION})"
        )));
    }
    let kind: ModelKind = serde_json::from_value(field(&doc, "kind")?.clone())
        .map_err(|e| Error::Checkpoint(format!("kind: {e}")))?;
    let config = field(&doc, "config")?;
    let arch: Architecture = serde_json::from_value(field(config, "architecture")?.clone())
        .map_err(|e| Error::Checkpoint(format!("architecture: {e}")))?;
    if arch.kind != kind {
        return Err(Error::Checkpoint(format!(
            "kind `{kind}` disagrees with architecture kind `{}`",
            arch.kind
        )));
    }
    let mut model = Model::build(&arch)?;
    let names: Vec<String> = serde_json::from_value(field(config, "feature_names")?.clone())
        .map_err(|e| Error::Checkpoint(format!("feature_names: {e}")))?;
    if kind.uses_features() {
        model.set_feature_names(names)?;
    } else if !names.is_empty() {
        return Err(Error::Checkpoint("image model must not list feature names".into()));
    }
    model.metadata = config.get("run").cloned().unwrap_or(Value::Null);

    let tensors = field(&doc, "tensors")?
        .as_object()
        .ok_or_else(|| Error::Checkpoint("tensors must be an object".into()))?;
    let expected: usize = model.params().len();
    if tensors.len() != expected {
        return Err(Error::Checkpoint(format!(
            "{} tensors present, architecture has {expected}",
            tensors.len()
        )));
    }
    for p in model.params_mut() {
        let entry = tensors
            .get(&p.name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{}`", p.name)))?;
        let shape: Vec<usize> = serde_json::from_value(field(entry, "shape")?.clone())
            .map_err(|e| Error::Checkpoint(format!("{} shape: {e}", p.name)))?;
        if shape != p.value.shape() {
            return Err(Error::Checkpoint(format!(
                "shape chain broken at `{}`: file has {shape:?}, architecture needs {:?}",
                p.name,
                p.value.shape()
            )));
        }
        let data = parse_f64s(field(entry, "data")?, &p.name)?;
        p.value = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("{}: {e}", p.name)))?;
    }

    let stats = field(&doc, "norm_stats")?;
    if kind.uses_features() {
        let stats: NormStats = serde_json::from_value(stats.clone())
            .map_err(|e| Error::Checkpoint(format!("norm_stats: {e}")))?;
        if stats.stddevs.len() != stats.len() || stats.constant_flags.len() != stats.len() {
            return Err(Error::Checkpoint("norm_stats vectors differ in length".into()));
        }
        model.set_norm_stats(stats)?;
    } else if !stats.is_null() {
        return Err(Error::Checkpoint("image model must have null norm_stats".into()));
    }
    Ok(model)
}

pub fn checkpoint_load(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(side: usize, seed: u64) -> ImageTensor {
        let mut rng = RngStream::new(seed);
        ImageTensor::new(side, (0..3 * side * side).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn symptom_parameter_counts() {
        let shallow = Model::build_symptoms(94, 64, false, 1).unwrap();
        assert_eq!(shallow.param_count(), 475);
        let deep = Model::build_symptoms(94, 64, true, 1).unwrap();
        assert_eq!(deep.param_count(), 6405);
        let x = vec![0.5; 94];
        let logits = deep
            .logits(&Sample {
                features: Some(&x),
                image: None,
            })
            .unwrap();
        assert_eq!(logits.len(), 5);
    }

    #[test]
    fn image_shape_trace() {
        let m = Model::build_image(64, false, 3).unwrap();
        let stack = m.image.as_ref().unwrap();
        let mut shape = vec![3, 64, 64];
        let mut spatial = vec![64];
        for l in &stack.layers {
            shape = l.output_shape(&shape).unwrap();
            if matches!(l, Layer::Conv2d(_) | Layer::MaxPool(_)) {
                spatial.push(shape[1]);
            }
            if matches!(l, Layer::Flatten(_)) {
                assert_eq!(shape, vec![128]);
            }
        }
        assert_eq!(spatial, vec![64, 62, 31, 29, 14, 12, 6, 4, 2]);
        assert_eq!(shape, vec![5]);
    }

    #[test]
    fn too_small_sides_rejected() {
        assert!(Model::build_image(16, false, 0).is_err());
        // 32 → 30 → 15 → 13 → 6 → 4 → 2, then a 3×3 kernel no longer fits
        assert!(Model::build_image(32, false, 0).is_err());
        assert!(Model::build_image(46, false, 0).is_ok());
        assert!(Model::build_hybrid(16, 4, 0, false).is_err());
    }

    #[test]
    fn hybrid_widths() {
        let m = Model::build_hybrid(48, 94, 5, false).unwrap();
        let head = m.head.as_ref().unwrap();
        match &head.layers[0] {
            Layer::Dense(d) => assert_eq!(d.n_in(), 96),
            _ => panic!("fusion starts with a dense layer"),
        }
    }

    #[test]
    fn frozen_backbone_has_no_gradient() {
        let mut m = Model::build_image(48, true, 2).unwrap();
        let img = image(48, 1);
        let s = Sample {
            features: None,
            image: Some(&img),
        };
        let logits = m.forward(&s).unwrap();
        let ce = crate::nn::softmax_cross_entropy(&logits, StageLabel::new(1).unwrap()).unwrap();
        m.backward(&ce.dlogits).unwrap();
        let frozen = m.backbone_param_names();
        assert_eq!(frozen.len(), 4);
        for p in m.params() {
            let zero = p.grad.data().iter().all(|&g| g == 0.0);
            assert_eq!(zero, frozen.contains(&p.name), "{}", p.name);
        }
    }

    #[test]
    fn missing_modality() {
        let m = Model::build_hybrid(48, 3, 0, false).unwrap();
        let f = [1.0, 2.0, 3.0];
        let err = m
            .predict_proba(&Sample {
                features: Some(&f),
                image: None,
            })
            .unwrap_err();
        assert!(matches!(err, Error::MissingModality(_)));
        let sym = Model::build_symptoms(3, 4, true, 0).unwrap();
        assert!(matches!(sym.predict_proba(&Sample::default()), Err(Error::MissingModality(_))));
    }

    #[test]
    fn score_string_format() {
        let p = Prediction {
            probs: vec![0.02, 0.45, 0.51, 0.0, 0.02],
            stage: StageLabel::new(2).unwrap(),
        };
        assert_eq!(p.score_string(), "[0.02, 0.45, 0.51, 0.00, 0.02]");
    }

    #[test]
    fn logistic_checkpoint_lists_two_tensors() {
        let m = Model::build_symptoms(94, 64, false, 9).unwrap();
        let doc: Value = serde_json::from_str(&checkpoint_to_string(&m).unwrap()).unwrap();
        let tensors = doc["tensors"].as_object().unwrap();
        let mut names: Vec<&String> = tensors.keys().collect();
        names.sort();
        assert_eq!(names, vec!["symptoms.fc1.bias", "symptoms.fc1.weight"]);
        assert!(doc["norm_stats"].is_object());
    }

    #[test]
    fn checkpoint_rejects_tampering() {
        let m = Model::build_symptoms(4, 3, true, 9).unwrap();
        let text = checkpoint_to_string(&m).unwrap();
        let tampered = text.replace("\"shape\":[3,4]", "\"shape\":[4,3]");
        assert_ne!(tampered, text);
        let err = checkpoint_from_str(&tampered).unwrap_err();
        assert!(err.to_string().contains("shape chain"), "{err}");
        let v2 = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(checkpoint_from_str(&v2).unwrap_err().to_string().contains("format_version"));
        assert!(checkpoint_from_str("{not json").is_err());
        let top_kind = text.replace("\"kind\":\"symptoms\",\"norm_stats\"", "\"kind\":\"hybrid\",\"norm_stats\"");
        assert_ne!(top_kind, text);
        assert!(checkpoint_from_str(&top_kind).unwrap_err().to_string().contains("disagrees"));
    }
}

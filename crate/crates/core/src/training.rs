//! Stratified splitting and the mini-batch SGD training loop.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::Cohort;
use crate::error::{Error, Result};
use crate::imaging::{augment, DEFAULT_CROP_FRACTION, DEFAULT_MAX_ROTATE_DEG};
use crate::metrics::{confusion_matrix, metrics_report, EvalReport};
use crate::models::{Model, Sample};
use crate::nn::{sgd_step, softmax_cross_entropy};
use crate::rng::{purpose, RngStream};
use crate::tabular::{NormStats, StageLabel, NUM_STAGES};

/// Disjoint train/test patient lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
    pub ratio: f64,
    pub warnings: Vec<String>,
}

/// Number of test patients for a stage with `n` patients.
pub fn stage_test_count(n: usize, ratio: f64) -> usize {
    if n < 2 {
        return 0;
    }
    ((ratio * n as f64).round() as usize).clamp(1, n - 1)
}

/// Per-stage random split; every stage with ≥ 2 patients contributes at least
/// one test and one training patient. Output lists keep cohort order.
pub fn stratified_split(ids: &[String], stages: &[StageLabel], ratio: f64, seed: u64) -> Result<SplitPlan> {
    if ids.len() != stages.len() {
        return Err(Error::LengthMismatch {
            left: ids.len(),
            right: stages.len(),
        });
    }
    if ids.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty cohort".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("test ratio must be in (0, 1), got {ratio}")));
    }
    let mut rng = RngStream::new(seed).substream(purpose::SPLIT);
    let mut in_test = vec![false; ids.len()];
    let mut warnings = Vec::new();
    for stage in StageLabel::all() {
        let members: Vec<usize> = (0..ids.len()).filter(|&i| stages[i] == stage).collect();
        if members.len() == 1 {
            let msg = format!("stage {stage} has a single patient; it is kept in the training set");
            warn!("{msg}");
            warnings.push(msg);
        }
        let k = stage_test_count(members.len(), ratio);
        for pick in rng.sample_indices(members.len(), k) {
            in_test[members[pick]] = true;
        }
    }
    let pick = |want: bool| {
        ids.iter()
            .zip(&in_test)
            .filter(|(_, &t)| t == want)
            .map(|(id, _)| id.clone())
            .collect()
    };
    Ok(SplitPlan {
        train_ids: pick(false),
        test_ids: pick(true),
        seed,
        ratio,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub max_rotate_deg: f64,
    pub crop_fraction: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_rotate_deg: DEFAULT_MAX_ROTATE_DEG,
            crop_fraction: DEFAULT_CROP_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub augment: AugmentConfig,
    pub class_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: 0.01,
            momentum: 0.9,
            augment: AugmentConfig::default(),
            class_weights: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean (weighted) cross-entropy over the epoch's training steps.
    pub train_loss: f64,
    /// Accuracy on the un-augmented training set after the epoch.
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

/// Inverse stage frequency, scaled so the sample-weighted mean is 1.
pub fn class_weights(stages: &[StageLabel]) -> [f64; NUM_STAGES] {
    let mut counts = [0usize; NUM_STAGES];
    for s in stages {
        counts[s.index()] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = stages.len() as f64;
    let mut w = [0.0; NUM_STAGES];
    for (wi, &c) in w.iter_mut().zip(&counts) {
        if c > 0 {
            *wi = n / (present * c as f64);
        }
    }
    w
}

fn check_modalities(model: &Model, data: &Cohort) -> Result<()> {
    if model.kind().uses_features() {
        let table = data
            .features
            .as_ref()
            .ok_or_else(|| Error::MissingModality(format!("{} model needs symptom features", model.kind())))?;
        if table.feature_names() != model.feature_names() {
            return Err(Error::Shape(format!(
                "data has features {:?}…, model expects {:?}…",
                table.feature_names().iter().take(3).collect::<Vec<_>>(),
                model.feature_names().iter().take(3).collect::<Vec<_>>()
            )));
        }
    }
    if model.kind().uses_image() && data.images.is_none() {
        return Err(Error::MissingModality(format!("{} model needs images", model.kind())));
    }
    Ok(())
}

/// Predicted stages for every patient.
pub fn predict_all(model: &Model, data: &Cohort) -> Result<Vec<StageLabel>> {
    check_modalities(model, data)?;
    (0..data.len())
        .map(|i| model.predict_proba(&data.sample(i)).map(|p| p.stage))
        .collect()
}

pub fn evaluate(model: &Model, data: &Cohort) -> Result<(Vec<StageLabel>, EvalReport)> {
    let preds = predict_all(model, data)?;
    let report = metrics_report(&confusion_matrix(&preds, &data.stages)?)?;
    Ok((preds, report))
}

fn accuracy(model: &Model, data: &Cohort) -> Result<f64> {
    let preds = predict_all(model, data)?;
    let hits = preds.iter().zip(&data.stages).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Mini-batch momentum SGD on softmax cross-entropy.
///
/// Feature normalisation statistics are fitted on `train` before the first
/// epoch. Images are augmented afresh every epoch when enabled; `test` is only
/// ever evaluated as-is.
pub fn train_model(
    model: &mut Model,
    train: &Cohort,
    test: Option<&Cohort>,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be ≥ 1".into()));
    }
    check_modalities(model, train)?;
    if let Some(t) = test {
        check_modalities(model, t)?;
    }
    let mut log = TrainLog { epochs: Vec::new() };
    if config.epochs == 0 {
        return Ok(log);
    }
    if model.kind().uses_features() {
        let table = train.features.as_ref().expect("checked above");
        let stats = if table.n_rows() >= 2 {
            NormStats::fit(table)?
        } else {
            model.norm_stats().cloned().expect("feature models carry stats")
        };
        model.set_norm_stats(stats)?;
    }
    let weights = if config.class_weights {
        class_weights(&train.stages)
    } else {
        [1.0; NUM_STAGES]
    };
    let root = RngStream::new(seed);
    let mut shuffle_rng = root.substream(purpose::SHUFFLING);
    let mut aug_rng = root.substream(purpose::AUGMENTATION);
    let augmenting = config.augment.enabled && model.kind().uses_image();
    model.zero_grad();

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let base = train.sample(i);
                let augmented = if augmenting {
                    let img = base.image.expect("checked above");
                    Some(augment(
                        img,
                        &mut aug_rng,
                        config.augment.max_rotate_deg,
                        config.augment.crop_fraction,
                    )?)
                } else {
                    None
                };
                let sample = Sample {
                    features: base.features,
                    image: augmented.as_ref().or(base.image),
                };
                let logits = model.forward(&sample)?;
                let ce = softmax_cross_entropy(&logits, train.stages[i])?;
                let w = weights[train.stages[i].index()];
                loss_sum += w * ce.loss;
                let dlogits = ce.dlogits.map(|d| d * w * scale);
                model.backward(&dlogits)?;
            }
            sgd_step(model.params_mut(), config.lr, config.momentum);
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at epoch {}", epoch + 1)));
        }
        log.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            train_accuracy: accuracy(model, train)?,
            test_accuracy: test.map(|t| accuracy(model, t)).transpose()?,
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:03}")).collect()
    }

    fn stages_from_counts(counts: &[usize]) -> Vec<StageLabel> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(s, &c)| std::iter::repeat_n(StageLabel::from_index(s).unwrap(), c))
            .collect()
    }

    fn test_counts(plan: &SplitPlan, all_ids: &[String], stages: &[StageLabel]) -> [usize; 5] {
        let mut out = [0; 5];
        for id in &plan.test_ids {
            let i = all_ids.iter().position(|x| x == id).unwrap();
            out[stages[i].index()] += 1;
        }
        out
    }

    #[test]
    fn ppmi_shaped_counts() {
        let stages = stages_from_counts(&[5, 31, 146, 12, 2]);
        let all = ids(stages.len());
        let plan = stratified_split(&all, &stages, 0.2, 7).unwrap();
        assert_eq!(test_counts(&plan, &all, &stages), [1, 6, 29, 2, 1]);
        assert_eq!(plan.test_ids.len(), 39);
        assert_eq!(plan.train_ids.len(), 157);
    }

    #[test]
    fn balanced_and_singleton() {
        let stages = stages_from_counts(&[10, 10, 10, 10, 10]);
        let all = ids(50);
        let plan = stratified_split(&all, &stages, 0.2, 1).unwrap();
        assert_eq!(test_counts(&plan, &all, &stages), [2; 5]);

        let stages = stages_from_counts(&[4, 1, 0, 0, 0]);
        let all = ids(5);
        let plan = stratified_split(&all, &stages, 0.2, 1).unwrap();
        assert_eq!(test_counts(&plan, &all, &stages), [1, 0, 0, 0, 0]);
        assert_eq!(plan.warnings.len(), 1);
        assert!(stratified_split(&[], &[], 0.2, 0).is_err());
        assert!(stratified_split(&all, &stages, 1.0, 0).is_err());
    }

    #[test]
    fn class_weight_balance() {
        let stages = stages_from_counts(&[2, 6, 0, 0, 0]);
        let w = class_weights(&stages);
        assert_eq!(w[0], 2.0);
        assert!((w[1] - 8.0 / 12.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
        let mean: f64 = stages.iter().map(|s| w[s.index()]).sum::<f64>() / 8.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }
}

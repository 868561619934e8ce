//! Seeded synthetic cohort with complementary modality signals.
//!
//! Every patient's true stage is observed through two independent noisy
//! "views": the symptom features encode view A, the volume encodes view B.
//! Each view equals the true stage with probability `1 − view_flip_prob` and
//! otherwise moves to a uniformly chosen neighbouring stage.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical;
use crate::dataset::{volume_file_name, FEATURES_FILE, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::imaging::{volume_write, Volume};
use crate::rng::{purpose, RngStream};
use crate::tabular::{write_feature_table, FeatureTable, StageLabel, NUM_STAGES};

pub const GENERATOR_VERSION: &str = "pdmm-synth/1";

/// Patients per stage in the reference clinical cohort (stage 4 = merged IV&V).
pub const PPMI_STAGE_COUNTS: [usize; NUM_STAGES] = [5, 31, 146, 12, 2];

const INFORMATIVE_NOISE_SD: f64 = 0.5;
const DUPLICATE_NOISE_SD: f64 = 0.01;
const BACKGROUND_NOISE_SD: f64 = 0.1;
const SPHERE_INTENSITY: f64 = 1.0;
const SPHERE_BASE_RADIUS: f64 = 3.0;
const SPHERE_RADIUS_STEP: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageDistribution {
    Balanced,
    Ppmi,
}

impl StageDistribution {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Self::Balanced),
            "ppmi" | "ppmi-like" => Ok(Self::Ppmi),
            other => Err(Error::InvalidArgument(format!(
                "unknown distribution `{other}` (expected balanced or ppmi)"
            ))),
        }
    }

    /// Patients per stage for a cohort of `n`.
    ///
    /// Balanced hands the remainder to the lowest stages; the clinical shape
    /// uses largest-remainder apportionment, lowest stage first on ties.
    pub fn stage_counts(self, n: usize) -> [usize; NUM_STAGES] {
        match self {
            Self::Balanced => {
                let mut c = [n / NUM_STAGES; NUM_STAGES];
                for slot in c.iter_mut().take(n % NUM_STAGES) {
                    *slot += 1;
                }
                c
            }
            Self::Ppmi => {
                let total: usize = PPMI_STAGE_COUNTS.iter().sum();
                let mut c = [0usize; NUM_STAGES];
                let mut rem = [(0usize, 0usize); NUM_STAGES];
                for s in 0..NUM_STAGES {
                    let exact = n * PPMI_STAGE_COUNTS[s];
                    c[s] = exact / total;
                    rem[s] = (exact % total, s);
                }
                let left = n - c.iter().sum::<usize>();
                rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                for &(_, s) in rem.iter().take(left) {
                    c[s] += 1;
                }
                c
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub distribution: StageDistribution,
    pub n_informative_features: usize,
    pub n_distractors: usize,
    pub n_duplicate_pairs: usize,
    pub view_flip_prob: f64,
    pub volume_dims: [usize; 3],
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_patients: 100,
            distribution: StageDistribution::Balanced,
            n_informative_features: 47,
            n_distractors: 27,
            n_duplicate_pairs: 10,
            view_flip_prob: 0.15,
            volume_dims: [32, 32, 32],
            seed: 0,
        }
    }
}

impl CohortSpec {
    pub fn n_features(&self) -> usize {
        self.n_informative_features + self.n_distractors + 2 * self.n_duplicate_pairs
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::InvalidArgument("n_patients must be ≥ 1".into()));
        }
        if self.n_features() == 0 {
            return Err(Error::InvalidArgument("cohort must have at least one feature".into()));
        }
        if !(0.0..=1.0).contains(&self.view_flip_prob) {
            return Err(Error::InvalidArgument(format!(
                "view_flip_prob must be in [0, 1], got {}",
                self.view_flip_prob
            )));
        }
        if self.volume_dims.contains(&0) {
            return Err(Error::InvalidArgument("volume dims must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPatient {
    pub id: String,
    pub stage: StageLabel,
    /// Stage as seen by the symptom features.
    pub view_a: StageLabel,
    /// Stage as seen by the volume.
    pub view_b: StageLabel,
    pub volume: String,
}

/// A generated cohort held in memory.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub spec: CohortSpec,
    pub patients: Vec<SyntheticPatient>,
    pub features: FeatureTable,
}

/// Noisy observation of `stage`: unchanged with probability `1 − p`, else a
/// uniformly chosen valid neighbour.
pub fn noisy_view(stage: StageLabel, flip_prob: f64, rng: &mut RngStream) -> StageLabel {
    if !rng.bernoulli(flip_prob) {
        return stage;
    }
    let s = stage.index();
    let mut neighbours = Vec::with_capacity(2);
    if s > 0 {
        neighbours.push(s - 1);
    }
    if s + 1 < NUM_STAGES {
        neighbours.push(s + 1);
    }
    StageLabel::from_index(neighbours[rng.below(neighbours.len())]).expect("neighbour in range")
}

pub fn sphere_radius(view_b: StageLabel) -> f64 {
    SPHERE_BASE_RADIUS + SPHERE_RADIUS_STEP * view_b.index() as f64
}

/// Noise background plus a centred sphere whose radius grows with `view_b`.
pub fn synthesize_volume(dims: [usize; 3], view_b: StageLabel, rng: &mut RngStream) -> Result<Volume> {
    let center = [dims[0] / 2, dims[1] / 2, dims[2] / 2].map(|c| c as f64);
    let r2 = sphere_radius(view_b).powi(2);
    let mut voxels = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let d2 = (x as f64 - center[0]).powi(2)
                    + (y as f64 - center[1]).powi(2)
                    + (z as f64 - center[2]).powi(2);
                let mut v = rng.normal(0.0, BACKGROUND_NOISE_SD);
                if d2 <= r2 {
                    v += SPHERE_INTENSITY;
                }
                voxels.push(v as f32);
            }
        }
    }
    Volume::new(dims, voxels)
}

fn feature_names(spec: &CohortSpec) -> Vec<String> {
    let mut names = Vec::with_capacity(spec.n_features());
    names.extend((0..spec.n_informative_features).map(|j| format!("inf{j:02}")));
    names.extend((0..spec.n_distractors).map(|j| format!("dis{j:02}")));
    for p in 0..spec.n_duplicate_pairs {
        names.push(format!("dup{p:02}a"));
        names.push(format!("dup{p:02}b"));
    }
    names
}

/// Builds labels, views and the symptom table. Volumes are synthesised
/// separately per patient (see [`patient_volume`]).
pub fn generate_in_memory(spec: &CohortSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let root = RngStream::new(spec.seed);
    let mut label_rng = root.substream(purpose::LABELS);
    let mut feature_rng = root.substream(purpose::FEATURES);

    let counts = spec.distribution.stage_counts(spec.n_patients);
    let mut stages: Vec<StageLabel> = counts
        .iter()
        .enumerate()
        .flat_map(|(s, &c)| std::iter::repeat_n(StageLabel::from_index(s).expect("stage"), c))
        .collect();
    label_rng.shuffle(&mut stages);

    let width = (spec.n_patients.max(1) as f64).log10().floor() as usize + 1;
    let patients: Vec<SyntheticPatient> = stages
        .iter()
        .enumerate()
        .map(|(i, &stage)| {
            let id = format!("P{:0width$}", i + 1, width = width.max(4));
            let view_a = noisy_view(stage, spec.view_flip_prob, &mut label_rng);
            let view_b = noisy_view(stage, spec.view_flip_prob, &mut label_rng);
            SyntheticPatient {
                volume: volume_file_name(&id),
                id,
                stage,
                view_a,
                view_b,
            }
        })
        .collect();

    let informative_coef: Vec<f64> = (0..spec.n_informative_features)
        .map(|_| feature_rng.uniform(0.5, 1.5))
        .collect();
    let duplicate_coef: Vec<f64> = (0..spec.n_duplicate_pairs)
        .map(|_| feature_rng.uniform(0.5, 1.5))
        .collect();

    let mut values = Vec::with_capacity(spec.n_patients * spec.n_features());
    for p in &patients {
        let a = p.view_a.index() as f64;
        for &coef in &informative_coef {
            values.push(coef * a + feature_rng.normal(0.0, INFORMATIVE_NOISE_SD));
        }
        for _ in 0..spec.n_distractors {
            values.push(feature_rng.normal(0.0, 1.0));
        }
        for &coef in &duplicate_coef {
            let f = coef * a + feature_rng.normal(0.0, INFORMATIVE_NOISE_SD);
            values.push(f);
            values.push(f + feature_rng.normal(0.0, DUPLICATE_NOISE_SD));
        }
    }
    let features = FeatureTable::new(
        patients.iter().map(|p| p.id.clone()).collect(),
        patients.iter().map(|p| p.stage).collect(),
        feature_names(spec),
        values,
    )?;
    Ok(SyntheticCohort {
        spec: spec.clone(),
        patients,
        features,
    })
}

/// The volume for patient `index`, drawn from its own sub-stream.
pub fn patient_volume(spec: &CohortSpec, patient: &SyntheticPatient, index: usize) -> Result<Volume> {
    let mut rng = RngStream::new(spec.seed).indexed(purpose::VOLUMES, index as u64);
    synthesize_volume(spec.volume_dims, patient.view_b, &mut rng)
}

/// Canonical manifest: spec echo, per-patient records and the generator version.
pub fn manifest_value(cohort: &SyntheticCohort, run: &Value) -> Result<Value> {
    let mut histogram = [0usize; NUM_STAGES];
    for p in &cohort.patients {
        histogram[p.stage.index()] += 1;
    }
    Ok(serde_json::json!({
        "generator_version": GENERATOR_VERSION,
        "spec": cohort.spec,
        "n_patients": cohort.patients.len(),
        "stage_histogram": histogram,
        "patients": cohort.patients,
        "run": run,
    }))
}

pub fn write_manifest(cohort: &SyntheticCohort, run: &Value, dir: &Path) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let text = canonical::to_canonical_string(&manifest_value(cohort, run)?)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Writes `features.csv`, one `vol_<id>.mvol` per patient and `manifest.json`.
pub fn generate_cohort(spec: &CohortSpec, dir: &Path, run: &Value) -> Result<SyntheticCohort> {
    let cohort = generate_in_memory(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_feature_table(&cohort.features, &dir.join(FEATURES_FILE))?;
    for (i, p) in cohort.patients.iter().enumerate() {
        volume_write(&patient_volume(spec, p, i)?, &dir.join(&p.volume))?;
    }
    write_manifest(&cohort, run, dir)?;
    Ok(cohort)
}

//! Command-line driver: run configuration, the train/eval pipelines and the
//! `pdmm` subcommands.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canonical;
use crate::dataset::{load_dataset_dir, Cohort, LoadOptions};
use crate::error::{Error, Result};
use crate::imaging::{center_slices, export_pgm, volume_read, DEFAULT_IMAGE_SIDE, SLICE_NAMES};
use crate::metrics::{error_correction_rate, render_stage_table, EvalReport};
use crate::models::{checkpoint_load, checkpoint_save, Model, ModelKind};
use crate::nn::gradcheck::{run_suite, GRADCHECK_TOLERANCE};
use crate::synth::{generate_cohort, CohortSpec, StageDistribution};
use crate::tabular::{load_feature_table, prune_correlated, write_feature_table, StageLabel, DEFAULT_PRUNE_THRESHOLD};
use crate::training::{evaluate, stratified_split, train_model, AugmentConfig, SplitPlan, TrainConfig, TrainLog};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Smallest square image the four conv/pool stages accept.
pub const MIN_CONFIG_IMAGE_SIDE: usize = 46;

/// Seeds per standard case in the `gradcheck` subcommand.
pub const GRADCHECK_SEEDS_PER_CASE: usize = 2;

/// Every tunable of a run. Absent keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub image_side: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_width: usize,
    pub prune_threshold: f64,
    pub augment: AugmentConfig,
    pub class_weights: bool,
    pub backbone_frozen: bool,
    pub test_ratio: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: 0,
            image_side: DEFAULT_IMAGE_SIDE,
            lr: t.lr,
            momentum: t.momentum,
            epochs: t.epochs,
            batch_size: t.batch_size,
            hidden_width: 64,
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            augment: t.augment,
            class_weights: t.class_weights,
            backbone_frozen: false,
            test_ratio: 0.2,
        }
    }
}

enum Range {
    UInt { min: u64 },
    Float { lo: f64, hi: f64, lo_open: bool, hi_open: bool },
    Bool,
}

const TOP_KEYS: &[(&str, Range)] = &[
    ("seed", Range::UInt { min: 0 }),
    ("image_side", Range::UInt { min: MIN_CONFIG_IMAGE_SIDE as u64 }),
    ("lr", Range::Float { lo: 0.0, hi: f64::INFINITY, lo_open: true, hi_open: true }),
    ("momentum", Range::Float { lo: 0.0, hi: 1.0, lo_open: false, hi_open: true }),
    ("epochs", Range::UInt { min: 0 }),
    ("batch_size", Range::UInt { min: 1 }),
    ("hidden_width", Range::UInt { min: 1 }),
    ("prune_threshold", Range::Float { lo: 0.0, hi: 1.0, lo_open: true, hi_open: false }),
    ("class_weights", Range::Bool),
    ("backbone_frozen", Range::Bool),
    ("test_ratio", Range::Float { lo: 0.0, hi: 1.0, lo_open: true, hi_open: true }),
];

const AUGMENT_KEYS: &[(&str, Range)] = &[
    ("enabled", Range::Bool),
    ("max_rotate_deg", Range::Float { lo: 0.0, hi: 180.0, lo_open: false, hi_open: false }),
    ("crop_fraction", Range::Float { lo: 0.0, hi: 1.0, lo_open: true, hi_open: false }),
];

fn check_value(key: &str, range: &Range, v: &Value) -> Result<()> {
    let bad = |message: String| Error::ConfigRange {
        key: key.to_string(),
        message,
    };
    match *range {
        Range::UInt { min } => match v.as_u64() {
            Some(n) if n >= min => Ok(()),
            _ => Err(bad(format!("got {v}, expected an integer ≥ {min}"))),
        },
        Range::Float { lo, hi, lo_open, hi_open } => {
            let ok = v.as_f64().is_some_and(|x| {
                x.is_finite()
                    && if lo_open { x > lo } else { x >= lo }
                    && if hi_open { x < hi } else { x <= hi }
            });
            if ok {
                Ok(())
            } else {
                let hi_s = if hi.is_infinite() { "∞".to_string() } else { hi.to_string() };
                Err(bad(format!(
                    "got {v}, expected a number in {}{lo}, {hi_s}{}",
                    if lo_open { '(' } else { '[' },
                    if hi_open { ')' } else { ']' }
                )))
            }
        }
        Range::Bool => v
            .as_bool()
            .map(|_| ())
            .ok_or_else(|| bad(format!("got {v}, expected true or false"))),
    }
}

fn check_object(v: &Value, prefix: &str, keys: &[(&str, Range)]) -> Result<()> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Format(format!("config{prefix} must be a JSON object")))?;
    for (k, val) in obj {
        let path = if prefix.is_empty() { k.clone() } else { format!("{}.{k}", &prefix[1..]) };
        if !prefix.is_empty() || k != "augment" {
            let (_, range) = keys
                .iter()
                .find(|(name, _)| name == k)
                .ok_or_else(|| Error::UnknownConfigKey(path.clone()))?;
            check_value(&path, range, val)?;
        }
    }
    Ok(())
}

impl RunConfig {
    /// Validates key names and ranges, then fills defaults.
    pub fn from_value(v: &Value) -> Result<Self> {
        check_object(v, "", TOP_KEYS)?;
        if let Some(aug) = v.get("augment") {
            check_object(aug, ".augment", AUGMENT_KEYS)?;
        }
        serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Format(format!("config is not JSON: {e}")))?;
        Self::from_value(&v)
    }

    /// Defaults when `path` is `None`.
    pub fn parse_config(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_json_str(&text)
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            momentum: self.momentum,
            augment: self.augment.clone(),
            class_weights: self.class_weights,
        }
    }

    /// The full effective configuration as JSON.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serialises")
    }
}

fn provenance(config: &RunConfig) -> Value {
    json!({ "config": config.echo(), "seed": config.seed })
}

/// Loads whichever modalities `kind` consumes.
pub fn load_for(kind: ModelKind, dir: &Path, image_side: usize) -> Result<Cohort> {
    load_dataset_dir(
        dir,
        LoadOptions {
            features: kind.uses_features(),
            images: kind.uses_image(),
            image_side,
        },
    )
}

pub fn split_cohort(cohort: &Cohort, config: &RunConfig) -> Result<(SplitPlan, Cohort, Cohort)> {
    let plan = stratified_split(&cohort.ids, &cohort.stages, config.test_ratio, config.seed)?;
    let train = cohort.subset_ids(&plan.train_ids)?;
    let test = cohort.subset_ids(&plan.test_ids)?;
    Ok((plan, train, test))
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: TrainLog,
    pub split: SplitPlan,
    pub test_predictions: Vec<StageLabel>,
    pub report: EvalReport,
    /// The document written by `train --log`.
    pub log_doc: Value,
}

/// Split, build, fit and evaluate one modality on a dataset directory.
pub fn train_pipeline(kind: ModelKind, data_dir: &Path, config: &RunConfig) -> Result<TrainOutcome> {
    let cohort = load_for(kind, data_dir, config.image_side)?;
    let (split, train, test) = split_cohort(&cohort, config)?;
    let feature_names = cohort.features.as_ref().map(|t| t.feature_names().to_vec());
    let n_features = feature_names.as_ref().map_or(0, Vec::len);
    let mut model = match kind {
        ModelKind::Symptoms => Model::build_symptoms(n_features, config.hidden_width, true, config.seed)?,
        ModelKind::Image => Model::build_image(config.image_side, config.backbone_frozen, config.seed)?,
        ModelKind::Hybrid => Model::build_hybrid(config.image_side, n_features, config.seed, config.backbone_frozen)?,
    };
    if let Some(names) = feature_names {
        model.set_feature_names(names)?;
    }
    model.metadata = provenance(config);
    let log = train_model(&mut model, &train, Some(&test), &config.train_config(), config.seed)?;
    let (test_predictions, report) = evaluate(&model, &test)?;
    let log_doc = json!({
        "modality": kind,
        "config": config.echo(),
        "seed": config.seed,
        "param_count": model.param_count(),
        "split": split,
        "epochs": log.epochs,
        "test_report": report,
    });
    Ok(TrainOutcome {
        model,
        log,
        split,
        test_predictions,
        report,
        log_doc,
    })
}

/// The run configuration stored in a checkpoint by [`train_pipeline`].
pub fn checkpoint_config(model: &Model) -> Result<RunConfig> {
    let cfg = model
        .metadata
        .get("config")
        .ok_or_else(|| Error::Checkpoint("checkpoint carries no run config".into()))?;
    RunConfig::from_value(cfg)
}

pub struct EvalOutcome {
    pub split: SplitPlan,
    pub predictions: Vec<StageLabel>,
    pub report: EvalReport,
    pub report_doc: Value,
}

/// Re-derives the training split from the checkpoint's seed and scores its
/// test patients. With `unimodal = (symptoms, image)` the report also carries
/// the hybrid's error-correction statistic.
pub fn eval_pipeline(model: &Model, data_dir: &Path, unimodal: Option<(&Model, &Model)>) -> Result<EvalOutcome> {
    let config = checkpoint_config(model)?;
    let side = model.arch.image_side.unwrap_or(config.image_side);
    let cohort = load_for(model.kind(), data_dir, side)?;
    let (split, _, test) = split_cohort(&cohort, &config)?;
    let (predictions, mut report) = evaluate(model, &test)?;
    if let Some((symptoms, image)) = unimodal {
        if model.kind() != ModelKind::Hybrid || symptoms.kind() != ModelKind::Symptoms || image.kind() != ModelKind::Image {
            return Err(Error::InvalidArgument(
                "error correction needs a hybrid checkpoint plus symptoms and mri checkpoints".into(),
            ));
        }
        let mut per_model = Vec::new();
        for other in [symptoms, image] {
            let oc = checkpoint_config(other)?;
            if oc.seed != config.seed || oc.test_ratio != config.test_ratio {
                return Err(Error::InvalidArgument(format!(
                    "{} checkpoint was trained on a different split (seed {}, test_ratio {})",
                    other.kind(),
                    oc.seed,
                    oc.test_ratio
                )));
            }
            let side = other.arch.image_side.unwrap_or(oc.image_side);
            let c = load_for(other.kind(), data_dir, side)?;
            let (_, _, t) = split_cohort(&c, &oc)?;
            per_model.push(evaluate(other, &t)?.0);
        }
        report.error_correction = Some(error_correction_rate(&predictions, &per_model[0], &per_model[1], &test.stages)?);
    }
    let report_doc = json!({
        "modality": model.kind(),
        "config": config.echo(),
        "seed": config.seed,
        "test_ids": split.test_ids,
        "report": report,
    });
    Ok(EvalOutcome {
        split,
        predictions,
        report,
        report_doc,
    })
}

#[derive(Debug, Parser)]
#[command(name = "pdmm", version, about = "Multimodal Parkinson's-disease severity staging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        patients: usize,
        #[arg(long, default_value = "balanced")]
        distribution: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Drop features correlated above a threshold with an earlier kept feature.
    Prune {
        #[arg(long)]
        features: PathBuf,
        /// Defaults to the config's prune_threshold.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Export the three centre slices of a volume as PGM images.
    Slice {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        out_prefix: String,
    },
    /// Train one modality and save its checkpoint.
    Train {
        #[arg(long)]
        modality: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Score a checkpoint on its own test split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// With --mri-ckpt, adds the hybrid's error-correction statistic.
        #[arg(long, requires = "mri_ckpt")]
        symptoms_ckpt: Option<PathBuf>,
        #[arg(long, requires = "symptoms_ckpt")]
        mri_ckpt: Option<PathBuf>,
    },
    /// Print one patient's stage probabilities.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        patient: String,
    },
    /// Finite-difference check of every layer's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::UnknownConfigKey(_) | Error::ConfigRange { .. } => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn cmd_synth(out: &Path, patients: usize, distribution: &str, seed: u64, config: Option<&Path>) -> Result<()> {
    let mut cfg = RunConfig::parse_config(config)?;
    cfg.seed = seed;
    let spec = CohortSpec {
        n_patients: patients,
        distribution: StageDistribution::parse(distribution)?,
        seed,
        ..CohortSpec::default()
    };
    let cohort = generate_cohort(&spec, out, &provenance(&cfg))?;
    println!("wrote {} patients to {}", cohort.patients.len(), out.display());
    Ok(())
}

fn cmd_prune(features: &Path, threshold: Option<f64>, out: &Path, report: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::parse_config(config)?;
    let threshold = threshold.unwrap_or(cfg.prune_threshold);
    let table = load_feature_table(features)?;
    let (pruned, rep) = prune_correlated(&table, threshold)?;
    write_feature_table(&pruned, out)?;
    let doc = json!({
        "config": cfg.echo(),
        "seed": cfg.seed,
        "n_input_features": table.n_features(),
        "n_kept": rep.kept.len(),
        "prune": rep,
    });
    canonical::write_canonical(&doc, report)?;
    println!("kept {} of {} features", pruned.n_features(), table.n_features());
    Ok(())
}

fn cmd_slice(volume: &Path, prefix: &str) -> Result<()> {
    let slices = center_slices(&volume_read(volume)?);
    for (name, img) in SLICE_NAMES.iter().zip(slices.as_array()) {
        let path = PathBuf::from(format!("{prefix}_{name}.pgm"));
        export_pgm(img, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_train(modality: &str, data: &Path, config: Option<&Path>, out: &Path, log: &Path) -> Result<()> {
    let kind = ModelKind::parse(modality)?;
    let cfg = RunConfig::parse_config(config)?;
    let outcome = train_pipeline(kind, data, &cfg)?;
    checkpoint_save(&outcome.model, out)?;
    canonical::write_canonical(&outcome.log_doc, log)?;
    if let Some(last) = outcome.log.epochs.last() {
        println!("final train accuracy {:.3}", last.train_accuracy);
    }
    print!("{}", render_stage_table(&outcome.report));
    Ok(())
}

fn cmd_eval(ckpt: &Path, data: &Path, out: &Path, symptoms: Option<&Path>, mri: Option<&Path>) -> Result<()> {
    let model = checkpoint_load(ckpt)?;
    let companions = match (symptoms, mri) {
        (Some(s), Some(m)) => Some((checkpoint_load(s)?, checkpoint_load(m)?)),
        _ => None,
    };
    let outcome = eval_pipeline(&model, data, companions.as_ref().map(|(s, m)| (s, m)))?;
    canonical::write_canonical(&outcome.report_doc, out)?;
    print!("{}", render_stage_table(&outcome.report));
    Ok(())
}

fn cmd_predict(ckpt: &Path, data: &Path, patient: &str) -> Result<()> {
    let model = checkpoint_load(ckpt)?;
    let config = checkpoint_config(&model)?;
    let side = model.arch.image_side.unwrap_or(config.image_side);
    let cohort = load_for(model.kind(), data, side)?;
    let row = cohort
        .ids
        .iter()
        .position(|id| id == patient)
        .ok_or_else(|| Error::InvalidArgument(format!("patient `{patient}` not in {}", data.display())))?;
    let single = cohort.subset(&[row])?;
    let pred = model.predict_proba(&single.sample(0))?;
    println!(
        "{}\t{}\ttrue {}\tpredicted {}\t{}",
        patient,
        model.kind(),
        cohort.stages[row],
        pred.stage,
        pred.score_string()
    );
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> Result<()> {
    let entries = run_suite(seed, GRADCHECK_SEEDS_PER_CASE)?;
    println!("{:<40} {:>20} {:>12}", "case", "seed", "max rel err");
    let mut worst: f64 = 0.0;
    for e in &entries {
        println!("{:<40} {:>20} {:>12.3e}", e.case.to_string(), e.seed, e.report.max_rel_error);
        worst = worst.max(e.report.max_rel_error);
    }
    println!("{} configurations, worst {worst:.3e}", entries.len());
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}"
        )))
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            patients,
            distribution,
            seed,
            config,
        } => cmd_synth(&out, patients, &distribution, seed, config.as_deref()),
        Command::Prune {
            features,
            threshold,
            out,
            report,
            config,
        } => cmd_prune(&features, threshold, &out, &report, config.as_deref()),
        Command::Slice { volume, out_prefix } => cmd_slice(&volume, &out_prefix),
        Command::Train {
            modality,
            data,
            config,
            out,
            log,
        } => cmd_train(&modality, &data, config.as_deref(), &out, &log),
        Command::Eval {
            ckpt,
            data,
            out,
            symptoms_ckpt,
            mri_ckpt,
        } => cmd_eval(&ckpt, &data, &out, symptoms_ckpt.as_deref(), mri_ckpt.as_deref()),
        Command::Predict { ckpt, data, patient } => cmd_predict(&ckpt, &data, &patient),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

//! In-memory cohorts and the on-disk dataset directory layout.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::canonical::read_json;
use crate::error::{Error, Result};
use crate::imaging::{assemble_image_input, center_slices, volume_read, ImageTensor};
use crate::models::Sample;
use crate::tabular::{load_feature_table, FeatureTable, StageLabel};

pub const FEATURES_FILE: &str = "features.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn volume_file_name(patient_id: &str) -> String {
    format!("vol_{patient_id}.mvol")
}

/// Labelled patients with whichever modalities were loaded.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub ids: Vec<String>,
    pub stages: Vec<StageLabel>,
    pub features: Option<FeatureTable>,
    /// One preprocessed three-channel image per patient, same order as `ids`.
    pub images: Option<Vec<ImageTensor>>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn from_features(table: FeatureTable) -> Self {
        Self {
            ids: table.patient_ids().to_vec(),
            stages: table.stages().to_vec(),
            features: Some(table),
            images: None,
        }
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample {
            features: self.features.as_ref().map(|t| t.row(i)),
            image: self.images.as_ref().map(|v| &v[i]),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::InvalidArgument(format!("row {bad} out of range")));
        }
        Ok(Self {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            stages: rows.iter().map(|&r| self.stages[r]).collect(),
            features: self.features.as_ref().map(|t| t.select_rows(rows)).transpose()?,
            images: self
                .images
                .as_ref()
                .map(|v| rows.iter().map(|&r| v[r].clone()).collect()),
        })
    }

    /// Rows for the given patient ids, in that order.
    pub fn subset_ids(&self, ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown patient `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.subset(&rows)
    }

    /// Keeps only the named feature columns.
    pub fn with_feature_columns(&self, names: &[String]) -> Result<Self> {
        let mut out = self.clone();
        if let Some(t) = &self.features {
            out.features = Some(t.select_named(names)?);
        }
        Ok(out)
    }
}

/// Which modalities to materialise when loading a dataset directory.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub features: bool,
    pub images: bool,
    pub image_side: usize,
}

fn volume_paths(dir: &Path, ids: &[String]) -> Result<Vec<PathBuf>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut by_id: HashMap<String, String> = HashMap::new();
    if manifest_path.exists() {
        let manifest = read_json(&manifest_path)?;
        let patients = manifest
            .get("patients")
            .and_then(|p| p.as_array())
            .ok_or_else(|| Error::Format("manifest lacks a `patients` array".into()))?;
        for p in patients {
            let id = p.get("id").and_then(|v| v.as_str());
            let vol = p.get("volume").and_then(|v| v.as_str());
            if let (Some(id), Some(vol)) = (id, vol) {
                by_id.insert(id.to_string(), vol.to_string());
            }
        }
    }
    Ok(ids
        .iter()
        .map(|id| dir.join(by_id.get(id).cloned().unwrap_or_else(|| volume_file_name(id))))
        .collect())
}

/// Volume → centre slices → three-channel `side × side` image.
pub fn preprocess_volume(path: &Path, side: usize) -> Result<ImageTensor> {
    let volume = volume_read(path)?;
    assemble_image_input(&center_slices(&volume), side)
}

/// Loads `features.csv` (always, for ids and stages) and, if requested, every volume.
pub fn load_dataset_dir(dir: &Path, opts: LoadOptions) -> Result<Cohort> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let table = load_feature_table(&dir.join(FEATURES_FILE))?;
    let ids = table.patient_ids().to_vec();
    let stages = table.stages().to_vec();
    let images = if opts.images {
        let paths = volume_paths(dir, &ids)?;
        Some(
            paths
                .iter()
                .map(|p| preprocess_volume(p, opts.image_side))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(Cohort {
        ids,
        stages,
        features: opts.features.then_some(table),
        images,
    })
}

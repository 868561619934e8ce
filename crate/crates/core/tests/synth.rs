mod common;

use common::naive_r;
use pdmm::imaging::center_slices;
use pdmm::synth::{generate_cohort, generate_in_memory, patient_volume, CohortSpec, StageDistribution};
use pdmm::tabular::prune_correlated;

fn spec(n: usize, seed: u64) -> CohortSpec {
    CohortSpec {
        n_patients: n,
        seed,
        ..CohortSpec::default()
    }
}

#[test]
fn balanced_histogram_and_feature_count() {
    let c = generate_in_memory(&spec(100, 7)).unwrap();
    let mut hist = [0; 5];
    for p in &c.patients {
        hist[p.stage.index()] += 1;
    }
    assert_eq!(hist, [20; 5]);
    assert_eq!(c.features.n_features(), 94);
    assert_eq!(c.features.n_rows(), 100);
}

#[test]
fn duplicate_pairs_are_nearly_identical() {
    let c = generate_in_memory(&spec(100, 2)).unwrap();
    let names = c.features.feature_names();
    for pair in 0..10 {
        let a = names.iter().position(|n| *n == format!("dup{pair:02}a")).unwrap();
        let b = names.iter().position(|n| *n == format!("dup{pair:02}b")).unwrap();
        assert!(naive_r(&c.features.column(a), &c.features.column(b)).abs() > 0.9);
    }
    let (_, report) = prune_correlated(&c.features, 0.5).unwrap();
    assert!(report.dropped.len() >= 10);
}

#[test]
fn informative_features_track_stage_and_distractors_do_not() {
    let c = generate_in_memory(&spec(400, 11)).unwrap();
    let stage: Vec<f64> = c.patients.iter().map(|p| p.stage.index() as f64).collect();
    let names = c.features.feature_names();
    let mean_abs_r = |prefix: &str| {
        let cols: Vec<usize> = (0..names.len()).filter(|&j| names[j].starts_with(prefix)).collect();
        cols.iter().map(|&j| naive_r(&c.features.column(j), &stage).abs()).sum::<f64>() / cols.len() as f64
    };
    let (inf, dis) = (mean_abs_r("inf"), mean_abs_r("dis"));
    assert!(inf > 0.8, "{inf}");
    assert!(dis < 0.15, "{dis}");
}

#[test]
fn view_agreement_rate() {
    let c = generate_in_memory(&spec(2000, 4)).unwrap();
    let agree = |f: fn(&pdmm::synth::SyntheticPatient) -> usize| {
        c.patients.iter().filter(|p| f(p) == p.stage.index()).count() as f64 / 2000.0
    };
    assert!((agree(|p| p.view_a.index()) - 0.85).abs() < 0.03);
    assert!((agree(|p| p.view_b.index()) - 0.85).abs() < 0.03);
}

#[test]
fn slice_intensity_follows_volume_view() {
    let s = spec(60, 5);
    let c = generate_in_memory(&s).unwrap();
    let mut by_view = vec![Vec::new(); 5];
    for (i, p) in c.patients.iter().enumerate() {
        let t = center_slices(&patient_volume(&s, p, i).unwrap()).transverse;
        by_view[p.view_b.index()].push(t.pixels().iter().sum::<f64>() / t.pixels().len() as f64);
    }
    let means: Vec<f64> = by_view
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
}

#[test]
fn files_match_memory() {
    let tmp = tempfile::tempdir().unwrap();
    let s = CohortSpec {
        distribution: StageDistribution::Ppmi,
        ..spec(30, 9)
    };
    let written = generate_cohort(&s, tmp.path(), &serde_json::Value::Null).unwrap();
    let table = pdmm::tabular::load_feature_table(&tmp.path().join("features.csv")).unwrap();
    assert_eq!(table, written.features);
    let vol = pdmm::imaging::volume_read(&tmp.path().join(&written.patients[3].volume)).unwrap();
    assert_eq!(vol, patient_volume(&s, &written.patients[3], 3).unwrap());
}

//! Independent reference implementations shared by the integration suites.
#![allow(dead_code, clippy::too_many_arguments)]

use pdmm::rng::RngStream;
use pdmm::tabular::{FeatureTable, StageLabel};

/// Pearson r from raw sums; 0 when either column is constant.
pub fn naive_r(x: &[f64], y: &[f64]) -> f64 {
    if x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]) {
        return 0.0;
    }
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Keep-first oracle: column j survives unless some earlier survivor has |r| > t.
pub fn brute_force_keep(columns: &[Vec<f64>], threshold: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..columns.len() {
        if kept.iter().all(|&k| naive_r(&columns[j], &columns[k]).abs() <= threshold) {
            kept.push(j);
        }
    }
    kept
}

pub fn table_from_columns(columns: &[Vec<f64>]) -> FeatureTable {
    let rows = columns[0].len();
    let ids = (0..rows).map(|i| format!("p{i}")).collect();
    let stages = (0..rows).map(|i| StageLabel::from_index(i % 5).unwrap()).collect();
    let names = (0..columns.len()).map(|j| format!("c{j}")).collect();
    let values = (0..rows).flat_map(|i| columns.iter().map(move |c| c[i])).collect();
    FeatureTable::new(ids, stages, names, values).unwrap()
}

/// Random table with ≤ 10 features and ≤ 20 rows. Some columns are noisy
/// copies or affine images of earlier ones so that pruning actually fires.
pub fn random_columns(rng: &mut RngStream) -> Vec<Vec<f64>> {
    let rows = 3 + rng.below(18);
    let n = 1 + rng.below(10);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let col = match rng.below(4) {
            0 if j > 0 => {
                let src = rng.below(j);
                let noise = rng.uniform(0.0, 2.0);
                let base = cols[src].clone();
                base.iter().map(|v| v + rng.normal(0.0, noise)).collect()
            }
            1 if j > 0 => {
                let src = rng.below(j);
                let (a, b) = (rng.uniform(-3.0, 3.0), rng.uniform(-1.0, 1.0));
                cols[src].iter().map(|v| a * v + b).collect()
            }
            _ => (0..rows).map(|_| rng.normal(0.0, 1.0)).collect(),
        };
        cols.push(col);
    }
    cols
}

/// Direct-definition valid convolution on `[C, H, W]` with an `[O, C, k, k]` kernel.
pub fn brute_conv(x: &[f64], c: usize, h: usize, w: usize, k: &[f64], o: usize, ks: usize, bias: &[f64], stride: usize) -> (Vec<f64>, usize, usize) {
    let oh = (h - ks) / stride + 1;
    let ow = (w - ks) / stride + 1;
    let mut y = vec![0.0; o * oh * ow];
    for oc in 0..o {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias[oc];
                for ic in 0..c {
                    for a in 0..ks {
                        for b in 0..ks {
                            acc += k[((oc * c + ic) * ks + a) * ks + b] * x[(ic * h + i * stride + a) * w + j * stride + b];
                        }
                    }
                }
                y[(oc * oh + i) * ow + j] = acc;
            }
        }
    }
    (y, oh, ow)
}

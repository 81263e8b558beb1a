#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use ppod::classifier::GaussianNb;
use ppod::data::{load_csv, Matrix, NoisyDataset, OwnerDataset, OwnerId, RowKey, Schema};
use ppod::dp::{split_budget, Epsilon, FeatureBounds};
use ppod::harness::{prepare_trial, split_seed, TrialData};
use ppod::sim::Query;
use rand::Rng;

pub fn iris_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/iris.csv")
}

pub fn iris_owners(n: usize) -> (Arc<Schema>, Vec<OwnerDataset>) {
    let schema = Arc::new(Schema::infer_from_csv(&iris_path()).unwrap());
    let pooled = load_csv(&iris_path(), &schema).unwrap();
    let owners = pooled.distribute(n).unwrap();
    (schema, owners)
}

/// The split the sweep uses for `trial` with base seed `seed`.
pub fn iris_trial(n: usize, fraction: f64, seed: u64, trial: usize) -> (Arc<Schema>, TrialData) {
    let (schema, owners) = iris_owners(n);
    let data = prepare_trial(&owners, fraction, split_seed(seed, trial));
    (schema, data)
}

fn clip_row(schema: &Schema, x: &[f64]) -> Vec<f64> {
    x.iter().zip(schema.bounds()).map(|(v, b)| b.clip(*v)).collect()
}

/// Centralised pipeline: pool the clipped training rows of every owner in
/// (owner, row) order, fit, predict the clipped queries.
pub fn direct_oracle(
    schema: &Schema,
    train: &[OwnerDataset],
    queries: &[Query],
) -> Vec<(String, BTreeMap<String, f64>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for o in train {
        for (r, l) in o.clipped_features().iter_rows().zip(o.labels()) {
            rows.push(r.to_vec());
            labels.push(l.clone());
        }
    }
    let x = Matrix::from_rows(schema.width(), &rows).unwrap();
    let model = GaussianNb::fit(&x, &labels, None).unwrap();
    queries
        .iter()
        .map(|q| {
            let p = model.predict(&clip_row(schema, &q.features)).unwrap();
            (p.label, p.log_scores.into_iter().collect())
        })
        .collect()
}

/// Textbook Gaussian naive Bayes written independently of the library:
/// per-class mean and population variance, variance floor
/// `1e-9 · max(largest column variance, 1e-9)`, log-domain argmax with
/// ties to the smallest label.
pub struct ReferenceNb {
    classes: Vec<(String, f64, Vec<f64>, Vec<f64>)>,
}

impl ReferenceNb {
    pub fn fit(rows: &[Vec<f64>], labels: &[String]) -> Self {
        let m = rows[0].len();
        let n = rows.len() as f64;
        let mut max_var: f64 = 0.0;
        for j in 0..m {
            let mu = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let v = rows.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / n;
            max_var = max_var.max(v);
        }
        let floor = 1e-9 * max_var.max(1e-9);
        let mut names: Vec<String> = labels.to_vec();
        names.sort();
        names.dedup();
        let classes = names
            .into_iter()
            .map(|c| {
                let members: Vec<&Vec<f64>> = rows
                    .iter()
                    .zip(labels)
                    .filter(|(_, l)| **l == c)
                    .map(|(r, _)| r)
                    .collect();
                let k = members.len() as f64;
                let mean: Vec<f64> = (0..m)
                    .map(|j| members.iter().map(|r| r[j]).sum::<f64>() / k)
                    .collect();
                let var: Vec<f64> = (0..m)
                    .map(|j| {
                        let v = members.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / k;
                        v.max(floor)
                    })
                    .collect();
                (c, k / n, mean, var)
            })
            .collect();
        Self { classes }
    }

    pub fn predict(&self, x: &[f64]) -> String {
        let mut best: Option<(&str, f64)> = None;
        for (c, prior, mean, var) in &self.classes {
            let mut s = prior.ln();
            for j in 0..x.len() {
                s -= 0.5 * (2.0 * std::f64::consts::PI * var[j]).ln();
                s -= (x[j] - mean[j]).powi(2) / (2.0 * var[j]);
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        best.unwrap().0.to_string()
    }
}

/// Standard Laplace(0, 1) CDF.
pub fn laplace_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * x.exp()
    } else {
        1.0 - 0.5 * (-x).exp()
    }
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

pub fn schema_with(m: usize, classes: usize) -> Arc<Schema> {
    Arc::new(
        Schema::new(
            (0..m).map(|j| format!("f{j}")).collect(),
            vec![FeatureBounds::new(-10.0, 10.0).unwrap(); m],
            (0..classes).map(|c| format!("c{c}")),
        )
        .unwrap(),
    )
}

/// Owner dataset with uniform features in [-12, 12] (so some get clipped)
/// and every class present when `rows >= classes`.
pub fn random_owner<R: Rng>(
    rng: &mut R,
    schema: &Arc<Schema>,
    owner: u32,
    rows: usize,
) -> OwnerDataset {
    let m = schema.width();
    let k = schema.class_labels().len();
    let values: Vec<f64> = (0..rows * m).map(|_| rng.gen_range(-12.0..12.0)).collect();
    let labels = (0..rows)
        .map(|r| schema.class_labels()[if r < k { r } else { rng.gen_range(0..k) }].clone())
        .collect();
    OwnerDataset::new(
        OwnerId(owner),
        Arc::clone(schema),
        Matrix::from_vec(rows, m, values).unwrap(),
        labels,
    )
    .unwrap()
}

/// Noisy dataset with arbitrary row keys, as produced by one owner.
pub fn random_noisy<R: Rng>(rng: &mut R, r: usize, m: usize, owner: u32) -> NoisyDataset {
    let schema = schema_with(m, 2);
    let values: Vec<f64> = (0..r * m).map(|_| rng.gen_range(-1e6..1e6)).collect();
    let labels = (0..r).map(|i| format!("c{}", i % 2)).collect();
    let keys = (0..r).map(|row| RowKey { owner: OwnerId(owner), row }).collect();
    let budgets = BTreeMap::from([(
        OwnerId(owner),
        split_budget(Epsilon::new(1.0).unwrap(), m).unwrap(),
    )]);
    NoisyDataset::new(schema, keys, Matrix::from_vec(r, m, values).unwrap(), labels, budgets)
        .unwrap()
}

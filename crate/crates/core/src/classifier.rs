//! Gaussian naive Bayes, scored in the log domain.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::data::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("cannot fit on an empty dataset")]
    Empty,
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("expected {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("variance smoothing must be a finite nonnegative real, got {0}")]
    BadSmoothing(f64),
    #[error("non-finite feature value")]
    NonFinite,
}

/// Class-conditional independent Gaussians per feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianNb {
    classes: Vec<String>,
    priors: Vec<f64>,
    means: Matrix,
    variances: Matrix,
    smoothing: f64,
}

/// Outcome of one classification request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationResult {
    pub request_id: u64,
    pub predicted_label: String,
    pub class_log_scores: BTreeMap<String, f64>,
}

/// Scores from [`GaussianNb::predict`], in canonical class order.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub log_scores: Vec<(String, f64)>,
}

impl Prediction {
    pub fn into_result(self, request_id: u64) -> ClassificationResult {
        ClassificationResult {
            request_id,
            predicted_label: self.label,
            class_log_scores: self.log_scores.into_iter().collect(),
        }
    }
}

const DEFAULT_SMOOTHING_FACTOR: f64 = 1e-9;
const SMOOTHING_VARIANCE_FLOOR: f64 = 1e-9;

fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
}

/// Default smoothing: `1e-9 × max(largest column variance, 1e-9)`.
pub fn default_smoothing(features: &Matrix) -> f64 {
    let max_var = (0..features.cols())
        .map(|c| population_variance((0..features.rows()).map(move |r| features.get(r, c))))
        .fold(0.0_f64, f64::max);
    DEFAULT_SMOOTHING_FACTOR * max_var.max(SMOOTHING_VARIANCE_FLOOR)
}

impl GaussianNb {
    /// Fits per-class priors, means and population variances. Variances are
    /// floored at `smoothing` (or [`default_smoothing`] when `None`).
    pub fn fit<S: AsRef<str>>(
        features: &Matrix,
        labels: &[S],
        smoothing: Option<f64>,
    ) -> Result<Self, ClassifierError> {
        if features.rows() != labels.len() {
            return Err(ClassifierError::LengthMismatch {
                rows: features.rows(),
                labels: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(ClassifierError::Empty);
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite);
        }
        let smoothing = match smoothing {
            Some(s) if s.is_finite() && s >= 0.0 => s,
            Some(s) => return Err(ClassifierError::BadSmoothing(s)),
            None => default_smoothing(features),
        };

        let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (r, l) in labels.iter().enumerate() {
            members.entry(l.as_ref()).or_default().push(r);
        }
        let m = features.cols();
        let k = members.len();
        let total = labels.len() as f64;
        let mut means = Matrix::zeros(k, m);
        let mut variances = Matrix::zeros(k, m);
        let mut priors = Vec::with_capacity(k);
        for (ci, rows) in members.values().enumerate() {
            priors.push(rows.len() as f64 / total);
            let n = rows.len() as f64;
            for j in 0..m {
                let mean = rows.iter().map(|&r| features.get(r, j)).sum::<f64>() / n;
                let var = rows
                    .iter()
                    .map(|&r| {
                        let d = features.get(r, j) - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / n;
                means.set(ci, j, mean);
                variances.set(ci, j, var.max(smoothing));
            }
        }
        Ok(Self {
            classes: members.keys().map(|c| c.to_string()).collect(),
            priors,
            means,
            variances,
            smoothing,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn variances(&self) -> &Matrix {
        &self.variances
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn width(&self) -> usize {
        self.means.cols()
    }

    /// Log joint score per class; the highest wins, ties go to the
    /// lexicographically smallest label.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ClassifierError> {
        if x.len() != self.width() {
            return Err(ClassifierError::Dimension {
                expected: self.width(),
                found: x.len(),
            });
        }
        let log_scores: Vec<(String, f64)> = self
            .classes
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                let ll: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let var = self.variances.get(ci, j);
                        let d = v - self.means.get(ci, j);
                        -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var)
                    })
                    .sum();
                (c.clone(), self.priors[ci].ln() + ll)
            })
            .collect();
        let label = argmax_label(&log_scores).to_string();
        Ok(Prediction { label, log_scores })
    }

    pub fn predict_all(&self, rows: &Matrix) -> Result<Vec<String>, ClassifierError> {
        rows.iter_rows()
            .map(|r| self.predict(r).map(|p| p.label))
            .collect()
    }
}

/// Highest score; on ties the lexicographically smallest label.
pub fn argmax_label(scores: &[(String, f64)]) -> &str {
    let mut best: Option<&(String, f64)> = None;
    for entry in scores {
        best = match best {
            None => Some(entry),
            Some(b) if entry.1 > b.1 || (entry.1 == b.1 && entry.0 < b.0) => Some(entry),
            keep => keep,
        };
    }
    best.map(|(l, _)| l.as_str()).unwrap_or("")
}

/// Fraction of positions where prediction and truth agree.
pub fn accuracy<A, B>(predictions: &[A], truth: &[B]) -> Result<f64, ClassifierError>
where
    A: AsRef<str>,
    B: AsRef<str>,
{
    if predictions.len() != truth.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: predictions.len(),
            labels: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.as_ref() == t.as_ref())
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn hand_computed_statistics() {
        let model = GaussianNb::fit(&col(&[-1.0, 1.0, 3.0, 5.0]), &["A", "A", "B", "B"], None)
            .unwrap();
        assert_eq!(model.classes(), &["A", "B"]);
        assert_eq!(model.priors(), &[0.5, 0.5]);
        assert_eq!(model.means().get(0, 0), 0.0);
        assert_eq!(model.means().get(1, 0), 4.0);
        assert_eq!(model.variances().get(0, 0), 1.0);
        assert_eq!(model.variances().get(1, 0), 1.0);
    }

    #[test]
    fn hand_computed_predictions() {
        let model = GaussianNb::fit(&col(&[-1.0, 1.0, 3.0, 5.0]), &["A", "A", "B", "B"], None)
            .unwrap();
        // log N(1; 0, 1) = -0.5 ln 2π - 0.5, log N(1; 4, 1) = -0.5 ln 2π - 4.5
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let p = model.predict(&[1.0]).unwrap();
        assert_eq!(p.label, "A");
        assert!((p.log_scores[0].1 - (0.5f64.ln() - half_ln_2pi - 0.5)).abs() < 1e-12);
        assert!((p.log_scores[1].1 - (0.5f64.ln() - half_ln_2pi - 4.5)).abs() < 1e-12);
        // at 3.5: A is 3.5σ out, B is 0.5σ out
        assert_eq!(model.predict(&[3.5]).unwrap().label, "B");
    }

    #[test]
    fn symmetric_tie_goes_to_smaller_label() {
        let model = GaussianNb::fit(&col(&[-1.0, 1.0, 3.0, 5.0]), &["zeta", "zeta", "alpha", "alpha"], None)
            .unwrap();
        // means 0 and 4, equal variances and priors; midpoint 2
        let p = model.predict(&[2.0]).unwrap();
        assert_eq!(p.log_scores[0].1, p.log_scores[1].1);
        assert_eq!(p.label, "alpha");
    }

    #[test]
    fn single_class_always_predicted() {
        let model = GaussianNb::fit(&col(&[1.0, 2.0, 3.0]), &["only"; 3], None).unwrap();
        assert_eq!(model.priors(), &[1.0]);
        for x in [-100.0, 0.0, 1e6] {
            assert_eq!(model.predict(&[x]).unwrap().label, "only");
        }
    }

    #[test]
    fn constant_feature_uses_floor() {
        let f = Matrix::from_rows(2, &[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let model = GaussianNb::fit(&f, &["a", "a", "b"], None).unwrap();
        assert!(model.smoothing() > 0.0);
        assert_eq!(model.variances().get(0, 1), model.smoothing());
        assert_eq!(model.variances().get(1, 0), model.smoothing());
        let p = model.predict(&[1.5, 5.0]).unwrap();
        assert!(p.log_scores.iter().all(|(_, s)| s.is_finite()));
    }

    #[test]
    fn default_smoothing_scales_with_variance() {
        let f = col(&[0.0, 2.0]);
        assert!((default_smoothing(&f) - 1e-9).abs() < 1e-24);
        let f = col(&[0.0, 20.0]);
        assert!((default_smoothing(&f) - 1e-7).abs() < 1e-20);
        assert_eq!(default_smoothing(&col(&[3.0, 3.0])), 1e-18);
    }

    #[test]
    fn errors() {
        assert_eq!(
            GaussianNb::fit(&Matrix::zeros(0, 2), &Vec::<String>::new(), None),
            Err(ClassifierError::Empty)
        );
        assert!(matches!(
            GaussianNb::fit(&col(&[1.0]), &["a", "b"], None),
            Err(ClassifierError::LengthMismatch { .. })
        ));
        assert!(GaussianNb::fit(&col(&[1.0]), &["a"], Some(-1.0)).is_err());
        let model = GaussianNb::fit(&col(&[1.0]), &["a"], None).unwrap();
        assert!(matches!(
            model.predict(&[1.0, 2.0]),
            Err(ClassifierError::Dimension { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&["a", "b"], &["a", "b"]).unwrap(), 1.0);
        assert_eq!(accuracy(&["a", "a"], &["b", "b"]).unwrap(), 0.0);
        assert_eq!(accuracy(&["a", "b", "c", "d"], &["a", "b", "c", "x"]).unwrap(), 0.75);
        assert!(accuracy(&["a"], &["a", "b"]).is_err());
        assert!(accuracy::<&str, &str>(&[], &[]).is_err());
    }

    #[test]
    fn priors_sum_to_one() {
        let labels = ["a", "b", "c", "a", "c", "c", "b"];
        let f = col(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let model = GaussianNb::fit(&f, &labels, None).unwrap();
        assert!((model.priors().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

//! Owner-side ε-differential privacy: budget accounting, the Laplace
//! mechanism driven by explicit uniform variates, and optional randomized
//! response for labels.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::data::{DataError, Matrix, NoisyDataset, OwnerDataset, OwnerId, RowKey};

#[derive(Debug, Error, PartialEq)]
pub enum DpError {
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("feature count must be at least 1")]
    NoFeatures,
    #[error("uniform variate {0} is outside the open interval (0, 1)")]
    VariateOutOfRange(f64),
    #[error("scale must be a finite nonnegative real, got {0}")]
    BadScale(f64),
    #[error("bounds [{lo}, {hi}] are not an ordered finite interval")]
    BadBounds { lo: f64, hi: f64 },
    #[error("per-feature budgets sum to {spent}, exceeding the total {total}")]
    Overspent { spent: f64, total: f64 },
    #[error("finite per-feature budget under an infinite total")]
    MixedInfinity,
    #[error("randomized response needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("label index {index} out of range for {k} classes")]
    LabelOutOfRange { index: usize, k: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl From<DataError> for DpError {
    fn from(e: DataError) -> Self {
        DpError::Shape(e.to_string())
    }
}

/// A privacy parameter: a positive real, or infinity meaning "no noise".
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Epsilon(f64);

impl Epsilon {
    pub const INFINITY: Epsilon = Epsilon(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self, DpError> {
        if value > 0.0 {
            Ok(Epsilon(value))
        } else {
            Err(DpError::NonPositiveEpsilon(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

/// Relative slack on the composition check; `ε/m` summed `m` times can
/// overshoot `ε` by a few ulps.
const COMPOSITION_SLACK: f64 = 1e-12;

/// Per-owner budget under sequential composition. The optional label share is
/// spent by randomized response on the class column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyBudget {
    total: Epsilon,
    per_feature: Vec<Epsilon>,
    label: Option<Epsilon>,
}

impl PrivacyBudget {
    pub fn new(
        total: Epsilon,
        per_feature: Vec<Epsilon>,
        label: Option<Epsilon>,
    ) -> Result<Self, DpError> {
        if per_feature.is_empty() {
            return Err(DpError::NoFeatures);
        }
        let parts = per_feature.iter().chain(label.iter());
        if total.is_infinite() {
            if parts.clone().any(|e| !e.is_infinite()) {
                return Err(DpError::MixedInfinity);
            }
        } else {
            let spent: f64 = parts.map(|e| e.value()).sum();
            if spent > total.value() * (1.0 + COMPOSITION_SLACK) {
                return Err(DpError::Overspent {
                    spent,
                    total: total.value(),
                });
            }
        }
        Ok(Self {
            total,
            per_feature,
            label,
        })
    }

    pub fn total(&self) -> Epsilon {
        self.total
    }

    pub fn per_feature(&self) -> &[Epsilon] {
        &self.per_feature
    }

    pub fn label(&self) -> Option<Epsilon> {
        self.label
    }

    /// Number of ε values carried when the budget is shipped as metadata.
    pub fn cell_count(&self) -> usize {
        1 + self.per_feature.len() + usize::from(self.label.is_some())
    }
}

/// Uniform split of `total` over `m` features.
pub fn split_budget(total: Epsilon, m: usize) -> Result<PrivacyBudget, DpError> {
    if m == 0 {
        return Err(DpError::NoFeatures);
    }
    let share = Epsilon(total.value() / m as f64);
    PrivacyBudget::new(total, vec![share; m], None)
}

/// Uniform split of `total` over `m` features plus the label column.
pub fn split_budget_with_label(total: Epsilon, m: usize) -> Result<PrivacyBudget, DpError> {
    if m == 0 {
        return Err(DpError::NoFeatures);
    }
    let share = Epsilon(total.value() / (m + 1) as f64);
    PrivacyBudget::new(total, vec![share; m], Some(share))
}

/// Declared range of one feature; its width is the Laplace sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureBounds {
    lo: f64,
    hi: f64,
}

impl FeatureBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self, DpError> {
        if lo.is_finite() && hi.is_finite() && lo <= hi {
            Ok(Self { lo, hi })
        } else {
            Err(DpError::BadBounds { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn delta(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// Noise actually added to one owner's feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseVector {
    pub owner: OwnerId,
    pub values: Matrix,
}

/// Quantile function of the zero-mean Laplace distribution with scale `scale`.
pub fn laplace_inverse_cdf(u: f64, scale: f64) -> Result<f64, DpError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(DpError::VariateOutOfRange(u));
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(DpError::BadScale(scale));
    }
    let d = u - 0.5;
    if scale == 0.0 || d == 0.0 {
        return Ok(0.0);
    }
    Ok(-scale * d.signum() * (-2.0 * d.abs()).ln_1p())
}

/// Adds Laplace(`delta / epsilon`) noise to `x` using the variate `u`.
pub fn perturb_value(x: f64, delta: f64, epsilon: Epsilon, u: f64) -> Result<f64, DpError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(DpError::VariateOutOfRange(u));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(DpError::BadScale(delta));
    }
    if epsilon.is_infinite() || delta == 0.0 {
        return Ok(x);
    }
    Ok(x + laplace_inverse_cdf(u, delta / epsilon.value())?)
}

/// Draws from the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Keeps `label` with probability `e^ε / (e^ε + k − 1)`, otherwise returns
/// one of the other `k − 1` classes uniformly. One variate decides both.
pub fn randomized_response(
    label: usize,
    k: usize,
    epsilon: Epsilon,
    u: f64,
) -> Result<usize, DpError> {
    if k < 2 {
        return Err(DpError::TooFewClasses(k));
    }
    if label >= k {
        return Err(DpError::LabelOutOfRange { index: label, k });
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(DpError::VariateOutOfRange(u));
    }
    let keep = keep_probability(k, epsilon);
    if u < keep {
        return Ok(label);
    }
    let others = (k - 1) as f64;
    let pick = (((u - keep) / (1.0 - keep)) * others).floor() as usize;
    let pick = pick.min(k - 2);
    Ok(if pick >= label { pick + 1 } else { pick })
}

/// Probability that randomized response reports the true class.
pub fn keep_probability(k: usize, epsilon: Epsilon) -> f64 {
    if epsilon.is_infinite() {
        return 1.0;
    }
    // e^ε / (e^ε + k − 1), written to stay finite for large ε
    1.0 / (1.0 + (k as f64 - 1.0) * (-epsilon.value()).exp())
}

/// Clips and perturbs one owner's dataset. Variates are consumed row-major,
/// one per feature cell, then one per label when the budget has a label share.
pub fn perturb_dataset(
    data: &OwnerDataset,
    budget: &PrivacyBudget,
    bounds: &[FeatureBounds],
    rng_seed: u64,
) -> Result<(NoisyDataset, NoiseVector), DpError> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    perturb_dataset_with(data, budget, bounds, &mut rng)
}

/// [`perturb_dataset`] with a caller-supplied variate source.
pub fn perturb_dataset_with<R: Rng + ?Sized>(
    data: &OwnerDataset,
    budget: &PrivacyBudget,
    bounds: &[FeatureBounds],
    rng: &mut R,
) -> Result<(NoisyDataset, NoiseVector), DpError> {
    let m = data.features().cols();
    if budget.per_feature().len() != m {
        return Err(DpError::Shape(format!(
            "budget covers {} features, data has {m}",
            budget.per_feature().len()
        )));
    }
    if bounds.len() != m {
        return Err(DpError::Shape(format!(
            "{} bounds for {m} features",
            bounds.len()
        )));
    }
    let clipped = {
        let mut c = data.features().clone();
        for r in 0..c.rows() {
            for (j, b) in bounds.iter().enumerate() {
                c.set(r, j, b.clip(c.get(r, j)));
            }
        }
        c
    };
    let mut noisy = clipped.clone();
    let mut noise = Matrix::zeros(clipped.rows(), m);
    for r in 0..clipped.rows() {
        for (j, (b, eps)) in bounds.iter().zip(budget.per_feature()).enumerate() {
            let u = open_unit(rng);
            if eps.is_infinite() || b.delta() == 0.0 {
                continue;
            }
            let n = laplace_inverse_cdf(u, b.delta() / eps.value())?;
            noise.set(r, j, n);
            noisy.set(r, j, clipped.get(r, j) + n);
        }
    }

    let schema = Arc::clone(data.schema());
    let labels = match budget.label() {
        None => data.labels().to_vec(),
        Some(eps) => {
            let classes = schema.class_labels();
            data.labels()
                .iter()
                .map(|l| {
                    let idx = schema.class_index(l).expect("validated label");
                    let u = open_unit(rng);
                    randomized_response(idx, classes.len(), eps, u).map(|i| classes[i].clone())
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };

    let owner = data.owner();
    let keys = (0..data.len()).map(|row| RowKey { owner, row }).collect();
    let dataset = NoisyDataset::new(
        schema,
        keys,
        noisy,
        labels,
        BTreeMap::from([(owner, budget.clone())]),
    )?;
    Ok((
        dataset,
        NoiseVector {
            owner,
            values: noise,
        },
    ))
}

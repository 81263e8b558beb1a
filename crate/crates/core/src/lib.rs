//! Privacy-preserving outsourced classification over a three-tier
//! owner / fog / cloud topology.
//!
//! Data owners clip and perturb their feature values with the Laplace
//! mechanism before anything leaves their site ([`dp`]). The noisy records
//! are split by column across fog nodes ([`data`]), so no single fog node
//! holds every feature. A semi-honest cloud node reassembles the columns,
//! trains a Gaussian naive Bayes model ([`classifier`]) and answers
//! classification requests routed back through the fog tier. The whole
//! exchange runs in a deterministic discrete-event simulator ([`sim`]) and
//! the [`harness`] sweeps the privacy budget to measure the utility cost.

pub mod classifier;
pub mod data;
pub mod dp;
pub mod harness;
pub mod seed;
pub mod sim;

pub use classifier::{accuracy, ClassificationResult, ClassifierError, GaussianNb};
pub use data::{
    load_csv, reassemble, union_owners, vertical_partition, DataError, FogId, LabelShard, Matrix,
    NoisyDataset, OwnerDataset, OwnerId, Partition, RowKey, Schema, Shard,
};
pub use dp::{
    laplace_inverse_cdf, perturb_dataset, perturb_value, randomized_response, split_budget,
    DpError, Epsilon, FeatureBounds, NoiseVector, PrivacyBudget,
};

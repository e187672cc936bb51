//! Two-level hierarchical HMM.
//!
//! The top level holds one state per activity (including the reject class
//! [`REJECT_CLASS`]) with fixed equiprobable transitions. Each activity owns a
//! bottom-level HMM whose emitting states carry diagonal Gaussian mixtures.
//! Bottom-level models are trained independently on labeled data; for
//! recognition the hierarchy is flattened into one network and decoded with
//! a token-passing Viterbi search.

mod activity;
mod decode;
mod gmm;
mod network;
mod train;

use rayon::prelude::*;
use thiserror::Error;

pub use activity::{
    init_activity_hmm, initial_transitions, pooled_moments, variance_floor, ActivityConfig,
    ActivityHmm, InitMode, MIN_VARIANCE,
};
pub use decode::{path_score, viterbi_decode, DecodedTimeline, TimelineInterval};
pub use gmm::{log_sum_exp, Gmm, PreparedGmm};
pub use network::{flatten, DecodingNetwork, HhmmModel, ModelFile, MODEL_FORMAT, MODEL_VERSION};
pub use train::{baum_welch, log_likelihood, BaumWelchConfig};

/// Name of the reject class.
pub const REJECT_CLASS: &str = "None";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no training data")]
    NoData,
    #[error("numerical underflow in scaled recursion")]
    NumericalUnderflow,
    #[error("activity '{0}' has not been trained")]
    UntrainedActivity(String),
    #[error("all tokens pruned at observation {t}; widen the beam")]
    AllTokensPruned { t: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    ModelFile(String),
}

/// Topology and training settings shared by all activities.
#[derive(Debug, Clone, PartialEq)]
pub struct HhmmConfig {
    pub states: usize,
    pub states_none: usize,
    pub mixtures: usize,
    pub loop_prob: f64,
    pub init: InitMode,
    pub prune_threshold: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub floor_scale: f64,
}

impl Default for HhmmConfig {
    fn default() -> Self {
        Self {
            states: 3,
            states_none: 3,
            mixtures: 5,
            loop_prob: 0.6,
            init: InitMode::Flat,
            prune_threshold: 1e-3,
            max_iters: 20,
            tolerance: 1e-6,
            floor_scale: 1e-4,
        }
    }
}

impl HhmmConfig {
    /// States and mixture components of one activity. A single-state reject
    /// class gets a single Gaussian.
    pub fn topology_for(&self, activity: &str) -> (usize, usize) {
        if activity == REJECT_CLASS {
            let k = if self.states_none == 1 {
                1
            } else {
                self.mixtures
            };
            (self.states_none, k)
        } else {
            (self.states, self.mixtures)
        }
    }
}

/// Training sequences of one activity.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityData {
    pub name: String,
    pub sequences: Vec<Vec<Vec<f64>>>,
}

/// Trains every activity that has data and joins them under an
/// equiprobable top level. Activities without data are left out.
pub fn train_hhmm(data: &[ActivityData], config: &HhmmConfig) -> Result<HhmmModel, HmmError> {
    let pooled = data.iter().flat_map(|a| a.sequences.iter().flatten());
    let dim = data
        .iter()
        .flat_map(|a| a.sequences.iter().flatten())
        .next()
        .map(Vec::len)
        .ok_or(HmmError::NoData)?;
    let (_, var, _) = pooled_moments(pooled, dim);
    let floor = variance_floor(&var, config.floor_scale);

    let trained: Vec<Option<ActivityHmm>> = data
        .par_iter()
        .map(|a| {
            if a.sequences.iter().all(Vec::is_empty) {
                log::warn!("activity '{}' has no training data; left out", a.name);
                return Ok(None);
            }
            let (states, mixtures) = config.topology_for(&a.name);
            let mut ac = ActivityConfig::new(&a.name, states, mixtures);
            ac.loop_prob = config.loop_prob;
            ac.init = config.init;
            ac.variance_floor = Some(floor.clone());
            let init = init_activity_hmm(&ac, &a.sequences)?;
            let bw = BaumWelchConfig {
                max_iters: config.max_iters,
                prune_threshold: config.prune_threshold,
                variance_floor: floor.clone(),
                tolerance: config.tolerance,
            };
            let (hmm, _) = baum_welch(&init, &a.sequences, &bw)?;
            Ok(Some(hmm))
        })
        .collect::<Result<_, HmmError>>()?;
    let activities: Vec<ActivityHmm> = trained.into_iter().flatten().collect();
    if activities.is_empty() {
        return Err(HmmError::NoData);
    }
    Ok(HhmmModel::new(activities))
}

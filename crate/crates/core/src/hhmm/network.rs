use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::activity::ActivityHmm;
use super::gmm::{Gmm, PreparedGmm};
use super::HmmError;
use crate::fusion::{Granularity, SpaceMask};

/// Two-level model: activity HMMs joined by a top-level transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HhmmModel {
    pub activities: Vec<ActivityHmm>,
    pub top_trans: Vec<Vec<f64>>,
}

impl HhmmModel {
    /// Model with equiprobable top-level transitions.
    pub fn new(activities: Vec<ActivityHmm>) -> Self {
        let n = activities.len();
        let top_trans = vec![vec![1.0 / n as f64; n]; n];
        Self {
            activities,
            top_trans,
        }
    }

    pub fn activity_names(&self) -> Vec<String> {
        self.activities.iter().map(|a| a.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        let n = self.activities.len();
        if n == 0 {
            return Err(HmmError::InvalidModel("model has no activities".into()));
        }
        if self.top_trans.len() != n || self.top_trans.iter().any(|r| r.len() != n) {
            return Err(HmmError::InvalidModel(format!(
                "top-level matrix is not {n}x{n}"
            )));
        }
        for row in &self.top_trans {
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(HmmError::InvalidModel(format!("top-level row sums to {s}")));
            }
        }
        for a in &self.activities {
            a.validate()?;
        }
        let dim = self.activities[0].dimension();
        if self.activities.iter().any(|a| a.dimension() != dim) {
            return Err(HmmError::InvalidModel(
                "activities differ in dimension".into(),
            ));
        }
        Ok(())
    }
}

/// Single flat state graph over all emitting states of all activities.
#[derive(Debug, Clone)]
pub struct DecodingNetwork {
    pub activity_names: Vec<String>,
    /// Activity index of each flat state.
    pub state_activity: Vec<usize>,
    /// Local state index of each flat state inside its activity.
    pub state_local: Vec<usize>,
    pub init: Vec<f64>,
    /// Dense `[from][to]` transition probabilities.
    pub trans: Vec<Vec<f64>>,
    pub emissions: Vec<Gmm>,
    pub(crate) log_init: Vec<f64>,
    pub(crate) log_trans: Vec<Vec<f64>>,
    pub(crate) prepared: Vec<PreparedGmm>,
}

impl DecodingNetwork {
    pub fn states(&self) -> usize {
        self.state_activity.len()
    }

    pub fn dimension(&self) -> usize {
        self.emissions.first().map_or(0, Gmm::dimension)
    }

    /// Builds a network directly from flat parameters.
    pub fn from_parts(
        activity_names: Vec<String>,
        state_activity: Vec<usize>,
        init: Vec<f64>,
        trans: Vec<Vec<f64>>,
        emissions: Vec<Gmm>,
    ) -> Result<Self, HmmError> {
        let n = state_activity.len();
        if init.len() != n || trans.len() != n || emissions.len() != n {
            return Err(HmmError::InvalidModel(
                "inconsistent flat network sizes".into(),
            ));
        }
        if state_activity.iter().any(|&a| a >= activity_names.len()) {
            return Err(HmmError::InvalidModel(
                "state refers to unknown activity".into(),
            ));
        }
        let mut state_local = Vec::with_capacity(n);
        let mut counters = vec![0usize; activity_names.len()];
        for &a in &state_activity {
            state_local.push(counters[a]);
            counters[a] += 1;
        }
        let log_init = init.iter().map(|p| p.ln()).collect();
        let log_trans = trans
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect();
        let prepared = emissions.iter().map(Gmm::prepare).collect();
        Ok(Self {
            activity_names,
            state_activity,
            state_local,
            init,
            trans,
            emissions,
            log_init,
            log_trans,
            prepared,
        })
    }

    pub fn log_init(&self, state: usize) -> f64 {
        self.log_init[state]
    }

    pub fn log_trans(&self, from: usize, to: usize) -> f64 {
        self.log_trans[from][to]
    }

    pub fn log_emission(&self, state: usize, o: &[f64]) -> f64 {
        self.prepared[state].log_density(o)
    }
}

/// Expands the two-level model into one flat network.
///
/// Arc weight from state `k` of activity `i` to state `l` of activity `q`:
/// `trans_i[k][l]` (when `q == i`) plus `exit_i[k] * top[i][q] * entry_q[l]`.
/// The initial distribution is uniform over activities times their entry
/// probabilities.
pub fn flatten(model: &HhmmModel) -> Result<DecodingNetwork, HmmError> {
    for a in &model.activities {
        if a.emissions.is_empty() {
            return Err(HmmError::UntrainedActivity(a.name.clone()));
        }
    }
    model.validate()?;
    let n1 = model.activities.len();
    let mut offsets = Vec::with_capacity(n1);
    let mut state_activity = Vec::new();
    for (i, a) in model.activities.iter().enumerate() {
        offsets.push(state_activity.len());
        state_activity.extend(std::iter::repeat_n(i, a.states()));
    }
    let n = state_activity.len();
    let mut trans = vec![vec![0.0; n]; n];
    let mut init = vec![0.0; n];
    let mut emissions = Vec::with_capacity(n);
    for (i, a) in model.activities.iter().enumerate() {
        for k in 0..a.states() {
            let from = offsets[i] + k;
            init[from] = a.entry[k] / n1 as f64;
            emissions.push(a.emissions[k].clone());
            for l in 0..a.states() {
                trans[from][offsets[i] + l] += a.trans[k][l];
            }
            for (q, b) in model.activities.iter().enumerate() {
                let leave = a.exit[k] * model.top_trans[i][q];
                for l in 0..b.states() {
                    trans[from][offsets[q] + l] += leave * b.entry[l];
                }
            }
        }
    }
    DecodingNetwork::from_parts(
        model.activity_names(),
        state_activity,
        init,
        trans,
        emissions,
    )
}

pub const MODEL_FORMAT: &str = "adl-hhmm";
pub const MODEL_VERSION: u32 = 1;

/// Versioned on-disk representation of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<SpaceMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<Granularity>,
    pub model: HhmmModel,
}

impl ModelFile {
    pub fn new(
        model: HhmmModel,
        mask: Option<SpaceMask>,
        granularity: Option<Granularity>,
    ) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            mask,
            granularity,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, HmmError> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| HmmError::ModelFile(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, HmmError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| HmmError::ModelFile(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(HmmError::ModelFile(format!(
                "unexpected format '{}'",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(HmmError::ModelFile(format!(
                "unsupported model version {}",
                file.version
            )));
        }
        file.model.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), HmmError> {
        fs::write(path, self.to_json()?)
            .map_err(|e| HmmError::ModelFile(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, HmmError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HmmError::ModelFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

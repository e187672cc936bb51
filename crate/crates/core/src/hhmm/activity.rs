use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::gmm::{Gmm, PreparedGmm};
use super::HmmError;

/// Lower bound applied to every variance floor.
pub const MIN_VARIANCE: f64 = 1e-8;
const KMEANS_ROUNDS: usize = 10;
const REALIGN_ROUNDS: usize = 2;

/// Bottom-level HMM of one activity. Entry and exit are non-emitting; every
/// emitting state may leave the activity with probability `exit[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityHmm {
    pub name: String,
    pub entry: Vec<f64>,
    pub trans: Vec<Vec<f64>>,
    pub exit: Vec<f64>,
    pub emissions: Vec<Gmm>,
}

impl ActivityHmm {
    pub fn states(&self) -> usize {
        self.emissions.len()
    }

    pub fn dimension(&self) -> usize {
        self.emissions.first().map_or(0, Gmm::dimension)
    }

    /// Checks shapes and stochasticity (rows within 1e-9).
    pub fn validate(&self) -> Result<(), HmmError> {
        let m = self.emissions.len();
        if m == 0 {
            return Err(HmmError::UntrainedActivity(self.name.clone()));
        }
        let bad = |what: String| HmmError::InvalidModel(format!("{}: {what}", self.name));
        if self.entry.len() != m || self.exit.len() != m || self.trans.len() != m {
            return Err(bad(format!("inconsistent state count {m}")));
        }
        let all = self
            .entry
            .iter()
            .chain(&self.exit)
            .chain(self.trans.iter().flatten());
        if all.clone().any(|p| !(*p >= 0.0 && *p <= 1.0 + 1e-12)) {
            return Err(bad("probability outside [0, 1]".into()));
        }
        let entry_sum: f64 = self.entry.iter().sum();
        if (entry_sum - 1.0).abs() > 1e-9 {
            return Err(bad(format!("entry sums to {entry_sum}")));
        }
        for (k, row) in self.trans.iter().enumerate() {
            if row.len() != m {
                return Err(bad(format!("transition row {k} has {} entries", row.len())));
            }
            let s: f64 = row.iter().sum::<f64>() + self.exit[k];
            if (s - 1.0).abs() > 1e-9 {
                return Err(bad(format!("row {k} plus exit sums to {s}")));
            }
        }
        let n = self.dimension();
        for g in &self.emissions {
            g.validate()?;
            if g.dimension() != n {
                return Err(bad("emission dimensions differ".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// All Gaussians start at the pooled mean and variance.
    Flat,
    /// Uniform segmentation, per-state moments, then Viterbi realignment.
    ViterbiAlign,
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Flat => "flat",
            InitMode::ViterbiAlign => "viterbi-align",
        })
    }
}

impl FromStr for InitMode {
    type Err = HmmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "flat" | "flat-start" => Ok(InitMode::Flat),
            "viterbi-align" | "viterbi" => Ok(InitMode::ViterbiAlign),
            other => Err(HmmError::InvalidConfig(format!(
                "unknown init mode '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityConfig {
    pub name: String,
    pub states: usize,
    pub mixtures: usize,
    /// Initial self-loop probability; the rest is shared by the other states
    /// and the exit.
    pub loop_prob: f64,
    pub init: InitMode,
    /// Per-dimension variance floor. Derived from the pooled data when absent.
    pub variance_floor: Option<Vec<f64>>,
    /// Mean offsets between initial components, in pooled standard deviations.
    pub perturbation: f64,
}

impl ActivityConfig {
    pub fn new(name: &str, states: usize, mixtures: usize) -> Self {
        Self {
            name: name.to_string(),
            states,
            mixtures,
            loop_prob: 0.6,
            init: InitMode::Flat,
            variance_floor: None,
            perturbation: 0.2,
        }
    }
}

/// Pooled mean and (population) variance per dimension.
pub fn pooled_moments<'a, I>(frames: I, dim: usize) -> (Vec<f64>, Vec<f64>, usize)
where
    I: IntoIterator<Item = &'a Vec<f64>>,
{
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let mut n = 0usize;
    for f in frames {
        for d in 0..dim {
            sum[d] += f[d];
            sq[d] += f[d] * f[d];
        }
        n += 1;
    }
    if n == 0 {
        return (sum, sq, 0);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let var = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / n as f64 - m * m).max(0.0))
        .collect();
    (mean, var, n)
}

/// `scale * variance`, bounded below by [`MIN_VARIANCE`].
pub fn variance_floor(variance: &[f64], scale: f64) -> Vec<f64> {
    variance
        .iter()
        .map(|v| (v * scale).max(MIN_VARIANCE))
        .collect()
}

pub fn initial_transitions(states: usize, loop_prob: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let share = (1.0 - loop_prob) / states as f64;
    let trans = (0..states)
        .map(|k| {
            (0..states)
                .map(|l| if k == l { loop_prob } else { share })
                .collect()
        })
        .collect();
    (trans, vec![share; states])
}

fn check_sequences(sequences: &[Vec<Vec<f64>>]) -> Result<usize, HmmError> {
    let first = sequences
        .iter()
        .flat_map(|s| s.first())
        .next()
        .ok_or(HmmError::NoData)?;
    let dim = first.len();
    for o in sequences.iter().flatten() {
        if o.len() != dim {
            return Err(HmmError::DimensionMismatch {
                expected: dim,
                got: o.len(),
            });
        }
    }
    Ok(dim)
}

pub fn init_activity_hmm(
    config: &ActivityConfig,
    sequences: &[Vec<Vec<f64>>],
) -> Result<ActivityHmm, HmmError> {
    if config.states == 0 || config.mixtures == 0 {
        return Err(HmmError::InvalidConfig(format!(
            "{}: states and mixtures must be positive",
            config.name
        )));
    }
    if !(config.loop_prob > 0.0 && config.loop_prob < 1.0) {
        return Err(HmmError::InvalidConfig(format!(
            "loop probability must lie in (0, 1), got {}",
            config.loop_prob
        )));
    }
    let dim = check_sequences(sequences)?;
    let (mean, var, _) = pooled_moments(sequences.iter().flatten(), dim);
    let floor = match &config.variance_floor {
        Some(f) if f.len() == dim => f.clone(),
        Some(f) => {
            return Err(HmmError::DimensionMismatch {
                expected: dim,
                got: f.len(),
            })
        }
        None => variance_floor(&var, 1e-4),
    };
    let (trans, exit) = initial_transitions(config.states, config.loop_prob);
    let mut hmm = ActivityHmm {
        name: config.name.clone(),
        entry: vec![1.0 / config.states as f64; config.states],
        trans,
        exit,
        emissions: Vec::new(),
    };

    match config.init {
        InitMode::Flat => {
            let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
            let floored: Vec<f64> = var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();
            let total = config.states * config.mixtures;
            let center = (total as f64 - 1.0) / 2.0;
            for j in 0..config.states {
                let mut g = Gmm {
                    weights: vec![1.0 / config.mixtures as f64; config.mixtures],
                    means: Vec::new(),
                    variances: Vec::new(),
                };
                for k in 0..config.mixtures {
                    let offset = ((j * config.mixtures + k) as f64 - center) * config.perturbation;
                    g.means
                        .push(mean.iter().zip(&sd).map(|(m, s)| m + offset * s).collect());
                    g.variances.push(floored.clone());
                }
                hmm.emissions.push(g);
            }
        }
        InitMode::ViterbiAlign => {
            let mut assignment: Vec<Vec<usize>> = sequences
                .iter()
                .map(|s| {
                    let t_len = s.len();
                    (0..t_len)
                        .map(|t| t * config.states / t_len.max(1))
                        .collect()
                })
                .collect();
            hmm.emissions = state_emissions(config, sequences, &assignment, &mean, &var, &floor);
            for _ in 0..REALIGN_ROUNDS {
                assignment = sequences
                    .iter()
                    .map(|s| align(&hmm, s))
                    .collect::<Result<_, _>>()?;
                hmm.emissions =
                    state_emissions(config, sequences, &assignment, &mean, &var, &floor);
            }
        }
    }
    Ok(hmm)
}

/// Per-state mixtures from a hard frame-to-state assignment.
fn state_emissions(
    config: &ActivityConfig,
    sequences: &[Vec<Vec<f64>>],
    assignment: &[Vec<usize>],
    global_mean: &[f64],
    global_var: &[f64],
    floor: &[f64],
) -> Vec<Gmm> {
    (0..config.states)
        .map(|j| {
            let frames: Vec<&Vec<f64>> = sequences
                .iter()
                .zip(assignment)
                .flat_map(|(s, a)| s.iter().zip(a).filter(|(_, &q)| q == j).map(|(o, _)| o))
                .collect();
            if frames.is_empty() {
                let var = global_var
                    .iter()
                    .zip(floor)
                    .map(|(v, f)| v.max(*f))
                    .collect();
                let mut g = Gmm::single(global_mean.to_vec(), var);
                replicate(&mut g, config.mixtures);
                return g;
            }
            kmeans_mixture(&frames, config.mixtures, floor)
        })
        .collect()
}

fn replicate(g: &mut Gmm, k: usize) {
    g.weights = vec![1.0 / k as f64; k];
    g.means = vec![g.means[0].clone(); k];
    g.variances = vec![g.variances[0].clone(); k];
}

/// K-means clustering of the frames into a mixture. Seeds are taken at
/// evenly spaced quantiles along the highest-variance dimension.
fn kmeans_mixture(frames: &[&Vec<f64>], k: usize, floor: &[f64]) -> Gmm {
    let dim = floor.len();
    let (mean, var, n) = pooled_moments(frames.iter().copied(), dim);
    let floored = |v: &[f64]| -> Vec<f64> { v.iter().zip(floor).map(|(a, f)| a.max(*f)).collect() };
    if k == 1 || n <= 1 {
        let mut g = Gmm::single(mean, floored(&var));
        if k > 1 {
            replicate(&mut g, k);
        }
        return g;
    }
    let axis = (0..dim)
        .max_by(|&a, &b| var[a].total_cmp(&var[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| frames[a][axis].total_cmp(&frames[b][axis]).then(a.cmp(&b)));
    let mut centers: Vec<Vec<f64>> = (0..k)
        .map(|c| frames[order[((2 * c + 1) * n) / (2 * k)]].clone())
        .collect();
    let mut labels = vec![0usize; n];
    for _ in 0..KMEANS_ROUNDS {
        for (i, f) in frames.iter().enumerate() {
            labels[i] = (0..k)
                .min_by(|&a, &b| {
                    sq_dist(f, &centers[a])
                        .total_cmp(&sq_dist(f, &centers[b]))
                        .then(a.cmp(&b))
                })
                .unwrap_or(0);
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = (0..n)
                .filter(|&i| labels[i] == c)
                .map(|i| frames[i])
                .collect();
            if !members.is_empty() {
                *center = pooled_moments(members, dim).0;
            }
        }
    }
    let mut g = Gmm {
        weights: Vec::with_capacity(k),
        means: Vec::with_capacity(k),
        variances: Vec::with_capacity(k),
    };
    for c in 0..k {
        let members: Vec<&Vec<f64>> = (0..n)
            .filter(|&i| labels[i] == c)
            .map(|i| frames[i])
            .collect();
        // Additive smoothing keeps empty clusters alive with a small weight.
        g.weights
            .push((members.len() as f64 + 1.0) / (n + k) as f64);
        if members.len() >= 2 {
            let (m, v, _) = pooled_moments(members, dim);
            g.means.push(m);
            g.variances.push(floored(&v));
        } else {
            g.means.push(centers[c].clone());
            g.variances.push(floored(&var));
        }
    }
    g
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Most likely state sequence of one complete activity instance (entry to
/// exit) under `hmm`. Ties resolve to the lower state index.
pub(crate) fn align(hmm: &ActivityHmm, seq: &[Vec<f64>]) -> Result<Vec<usize>, HmmError> {
    let m = hmm.states();
    if seq.is_empty() {
        return Ok(Vec::new());
    }
    let prepared: Vec<PreparedGmm> = hmm.emissions.iter().map(Gmm::prepare).collect();
    let log_trans: Vec<Vec<f64>> = hmm
        .trans
        .iter()
        .map(|r| r.iter().map(|p| p.ln()).collect())
        .collect();
    let mut score: Vec<f64> = (0..m)
        .map(|j| hmm.entry[j].ln() + prepared[j].log_density(&seq[0]))
        .collect();
    let mut back = vec![vec![0usize; m]; seq.len()];
    for (t, o) in seq.iter().enumerate().skip(1) {
        let mut next = vec![f64::NEG_INFINITY; m];
        for j in 0..m {
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
            for i in 0..m {
                let s = score[i] + log_trans[i][j];
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            next[j] = best + prepared[j].log_density(o);
            back[t][j] = arg;
        }
        score = next;
    }
    let (mut best, mut state) = (f64::NEG_INFINITY, 0);
    for j in 0..m {
        let s = score[j] + hmm.exit[j].ln();
        if s > best {
            best = s;
            state = j;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(HmmError::NumericalUnderflow);
    }
    let mut path = vec![0; seq.len()];
    for t in (0..seq.len()).rev() {
        path[t] = state;
        state = back[t][state];
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_start_on_constant_data() {
        let seqs = vec![vec![vec![3.0, -1.0]; 20], vec![vec![3.0, -1.0]; 15]];
        let hmm = init_activity_hmm(&ActivityConfig::new("a", 3, 5), &seqs).unwrap();
        hmm.validate().unwrap();
        for g in &hmm.emissions {
            assert_eq!(g.components(), 5);
            for (m, v) in g.means.iter().zip(&g.variances) {
                assert_eq!(m, &vec![3.0, -1.0]);
                assert_eq!(v, &vec![MIN_VARIANCE; 2]);
            }
        }
    }

    #[test]
    fn loop_initialization() {
        let mut cfg = ActivityConfig::new("a", 3, 1);
        cfg.loop_prob = 0.8;
        let hmm = init_activity_hmm(&cfg, &[vec![vec![0.0], vec![1.0]]]).unwrap();
        for k in 0..3 {
            for l in 0..3 {
                let expected = if k == l { 0.8 } else { 0.2 / 3.0 };
                assert!((hmm.trans[k][l] - expected).abs() < 1e-15);
            }
            assert!((hmm.exit[k] - 0.2 / 3.0).abs() < 1e-15);
        }
        let (trans, exit) = initial_transitions(1, 0.6);
        assert_eq!(trans, vec![vec![0.6]]);
        assert!((exit[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn viterbi_align_finds_plateaus() {
        let plateaus = [-4.0, 1.5, 7.0];
        let mut seq = Vec::new();
        for (p, len) in plateaus.iter().zip([30, 55, 18]) {
            seq.extend(std::iter::repeat_n(vec![*p, 2.0 * p], len));
        }
        let mut cfg = ActivityConfig::new("a", 3, 1);
        cfg.init = InitMode::ViterbiAlign;
        let hmm = init_activity_hmm(&cfg, &[seq]).unwrap();
        hmm.validate().unwrap();
        for (j, p) in plateaus.iter().enumerate() {
            assert!((hmm.emissions[j].means[0][0] - p).abs() < 1e-6, "state {j}");
            assert!((hmm.emissions[j].means[0][1] - 2.0 * p).abs() < 1e-6);
        }
    }

    #[test]
    fn viterbi_align_with_mixtures() {
        let mut seq = Vec::new();
        for t in 0..90 {
            let base = if t < 45 { 0.0 } else { 10.0 };
            seq.push(vec![base + (t % 3) as f64]);
        }
        let mut cfg = ActivityConfig::new("a", 2, 3);
        cfg.init = InitMode::ViterbiAlign;
        let hmm = init_activity_hmm(&cfg, &[seq]).unwrap();
        hmm.validate().unwrap();
        assert_eq!(hmm.emissions[0].components(), 3);
    }

    #[test]
    fn no_data() {
        assert_eq!(
            init_activity_hmm(&ActivityConfig::new("a", 3, 1), &[]),
            Err(HmmError::NoData)
        );
        assert_eq!(
            init_activity_hmm(&ActivityConfig::new("a", 3, 1), &[vec![]]),
            Err(HmmError::NoData)
        );
    }
}

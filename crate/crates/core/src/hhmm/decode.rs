//! Beam-pruned token-passing Viterbi search over a flattened network.

use serde::{Deserialize, Serialize};

use super::network::DecodingNetwork;
use super::HmmError;

/// Maximal run of one activity in the decoded path; `end` is inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineInterval {
    pub start: usize,
    pub end: usize,
    pub activity: String,
    /// Path score accumulated inside the interval.
    pub log_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedTimeline {
    pub intervals: Vec<TimelineInterval>,
    /// Flat state of each observation on the best path.
    pub state_path: Vec<usize>,
    /// Total path score: initial, transition and emission log-probabilities.
    pub log_score: f64,
}

impl DecodedTimeline {
    /// Activity label of every observation.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for iv in &self.intervals {
            out.extend(std::iter::repeat_n(
                iv.activity.clone(),
                iv.end - iv.start + 1,
            ));
        }
        out
    }
}

#[derive(Clone, Copy)]
struct Token {
    score: f64,
}

/// Finds the best state path. `beam` is a log-width: after each observation,
/// tokens scoring below `best - beam` are discarded. `f64::INFINITY` gives
/// exact Viterbi. Predecessor and final-state ties go to the lower flat index.
pub fn viterbi_decode(
    network: &DecodingNetwork,
    observations: &[Vec<f64>],
    beam: f64,
) -> Result<DecodedTimeline, HmmError> {
    if !(beam >= 0.0) {
        return Err(HmmError::InvalidConfig(format!(
            "beam must be non-negative, got {beam}"
        )));
    }
    let n = network.states();
    let t_len = observations.len();
    if t_len == 0 {
        return Ok(DecodedTimeline {
            intervals: Vec::new(),
            state_path: Vec::new(),
            log_score: 0.0,
        });
    }
    for o in observations {
        if o.len() != network.dimension() {
            return Err(HmmError::DimensionMismatch {
                expected: network.dimension(),
                got: o.len(),
            });
        }
    }

    let none = Token {
        score: f64::NEG_INFINITY,
    };
    let mut tokens = vec![none; n];
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(t_len);
    let mut emission = vec![0.0; n];

    for j in 0..n {
        tokens[j].score = network.log_init(j) + network.log_emission(j, &observations[0]);
    }
    back.push(vec![u32::MAX; n]);
    prune(&mut tokens, beam, 0)?;

    let mut next = vec![none; n];
    for (t, o) in observations.iter().enumerate().skip(1) {
        let mut pointers = vec![u32::MAX; n];
        next.iter_mut().for_each(|tk| *tk = none);
        // pass every live token along every outgoing arc
        for (i, tk) in tokens.iter().enumerate() {
            if tk.score == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..n {
                let s = tk.score + network.log_trans(i, j);
                if s > next[j].score {
                    next[j].score = s;
                    pointers[j] = i as u32;
                }
            }
        }
        for j in 0..n {
            if next[j].score > f64::NEG_INFINITY {
                emission[j] = network.log_emission(j, o);
                next[j].score += emission[j];
            }
        }
        std::mem::swap(&mut tokens, &mut next);
        back.push(pointers);
        prune(&mut tokens, beam, t)?;
    }

    let (mut state, mut best) = (0usize, f64::NEG_INFINITY);
    for (j, tk) in tokens.iter().enumerate() {
        if tk.score > best {
            best = tk.score;
            state = j;
        }
    }
    let mut path = vec![0usize; t_len];
    for t in (0..t_len).rev() {
        path[t] = state;
        if t > 0 {
            state = back[t][state] as usize;
        }
    }
    Ok(build_timeline(network, observations, path, best))
}

fn prune(tokens: &mut [Token], beam: f64, t: usize) -> Result<(), HmmError> {
    let best = tokens
        .iter()
        .map(|tk| tk.score)
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(HmmError::AllTokensPruned { t });
    }
    if beam.is_finite() {
        let floor = best - beam;
        for tk in tokens.iter_mut() {
            if tk.score < floor {
                tk.score = f64::NEG_INFINITY;
            }
        }
    }
    Ok(())
}

/// Log-probability of a given flat state path (no exit term).
pub fn path_score(network: &DecodingNetwork, observations: &[Vec<f64>], path: &[usize]) -> f64 {
    let mut score = 0.0;
    for (t, (&s, o)) in path.iter().zip(observations).enumerate() {
        score += if t == 0 {
            network.log_init(s)
        } else {
            network.log_trans(path[t - 1], s)
        };
        score += network.log_emission(s, o);
    }
    score
}

fn build_timeline(
    network: &DecodingNetwork,
    observations: &[Vec<f64>],
    path: Vec<usize>,
    total: f64,
) -> DecodedTimeline {
    let mut intervals: Vec<TimelineInterval> = Vec::new();
    let mut cumulative = 0.0;
    let mut interval_start_score = 0.0;
    for (t, &s) in path.iter().enumerate() {
        let step = if t == 0 {
            network.log_init(s)
        } else {
            network.log_trans(path[t - 1], s)
        } + network.log_emission(s, &observations[t]);
        let activity = network.state_activity[s];
        let same = t > 0 && network.state_activity[path[t - 1]] == activity;
        if !same {
            if let Some(last) = intervals.last_mut() {
                last.log_score = cumulative - interval_start_score;
            }
            interval_start_score = cumulative;
            intervals.push(TimelineInterval {
                start: t,
                end: t,
                activity: network.activity_names[activity].clone(),
                log_score: 0.0,
            });
        }
        cumulative += step;
        if let Some(last) = intervals.last_mut() {
            last.end = t;
        }
    }
    if let Some(last) = intervals.last_mut() {
        last.log_score = cumulative - interval_start_score;
    }
    DecodedTimeline {
        intervals,
        state_path: path,
        log_score: total,
    }
}

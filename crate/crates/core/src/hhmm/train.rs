//! Baum-Welch re-estimation of a bottom-level activity HMM.

use rayon::prelude::*;

use super::activity::ActivityHmm;
use super::gmm::{log_sum_exp, Gmm, PreparedGmm};
use super::HmmError;

#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchConfig {
    pub max_iters: usize,
    /// Components whose re-estimated weight falls below this are removed.
    pub prune_threshold: f64,
    /// Per-dimension variance floor; variances are never re-estimated below it.
    pub variance_floor: Vec<f64>,
    /// Stop once the relative log-likelihood gain drops below this; 0 runs
    /// all iterations.
    pub tolerance: f64,
}

/// Sufficient statistics of one E-step.
#[derive(Debug, Clone)]
struct Accumulator {
    log_likelihood: f64,
    entry: Vec<f64>,
    trans: Vec<Vec<f64>>,
    exit: Vec<f64>,
    occupancy: Vec<f64>,
    /// `[state][component]`
    comp_occ: Vec<Vec<f64>>,
    comp_sum: Vec<Vec<Vec<f64>>>,
    comp_sq: Vec<Vec<Vec<f64>>>,
}

impl Accumulator {
    fn new(model: &ActivityHmm) -> Self {
        let m = model.states();
        let n = model.dimension();
        let ks: Vec<usize> = model.emissions.iter().map(Gmm::components).collect();
        Self {
            log_likelihood: 0.0,
            entry: vec![0.0; m],
            trans: vec![vec![0.0; m]; m],
            exit: vec![0.0; m],
            occupancy: vec![0.0; m],
            comp_occ: ks.iter().map(|&k| vec![0.0; k]).collect(),
            comp_sum: ks.iter().map(|&k| vec![vec![0.0; n]; k]).collect(),
            comp_sq: ks.iter().map(|&k| vec![vec![0.0; n]; k]).collect(),
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        fn add(a: &mut [f64], b: &[f64]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.log_likelihood += other.log_likelihood;
        add(&mut self.entry, &other.entry);
        add(&mut self.exit, &other.exit);
        add(&mut self.occupancy, &other.occupancy);
        for j in 0..self.trans.len() {
            add(&mut self.trans[j], &other.trans[j]);
            add(&mut self.comp_occ[j], &other.comp_occ[j]);
            for k in 0..self.comp_sum[j].len() {
                add(&mut self.comp_sum[j][k], &other.comp_sum[j][k]);
                add(&mut self.comp_sq[j][k], &other.comp_sq[j][k]);
            }
        }
    }
}

/// Total log-likelihood of the sequences, each a complete entry-to-exit
/// traversal of the model.
pub fn log_likelihood(model: &ActivityHmm, sequences: &[Vec<Vec<f64>>]) -> Result<f64, HmmError> {
    let prepared: Vec<PreparedGmm> = model.emissions.iter().map(Gmm::prepare).collect();
    let mut total = 0.0;
    for seq in sequences.iter().filter(|s| !s.is_empty()) {
        total += expectation(model, &prepared, seq)?.log_likelihood;
    }
    Ok(total)
}

/// Scaled forward-backward pass over one sequence.
fn expectation(
    model: &ActivityHmm,
    prepared: &[PreparedGmm],
    seq: &[Vec<f64>],
) -> Result<Accumulator, HmmError> {
    let m = model.states();
    let t_len = seq.len();
    let mut acc = Accumulator::new(model);

    // Per-frame component log-densities and state log-densities.
    let mut comp_ld: Vec<Vec<Vec<f64>>> = Vec::with_capacity(t_len);
    let mut b = vec![vec![0.0; m]; t_len];
    let mut log_shift = vec![0.0; t_len];
    for (t, o) in seq.iter().enumerate() {
        if o.len() != model.dimension() {
            return Err(HmmError::DimensionMismatch {
                expected: model.dimension(),
                got: o.len(),
            });
        }
        let mut per_state = Vec::with_capacity(m);
        let mut state_ld = vec![0.0; m];
        for j in 0..m {
            let mut buf = Vec::new();
            prepared[j].component_log_densities(o, &mut buf);
            state_ld[j] = log_sum_exp(&buf);
            per_state.push(buf);
        }
        let shift = state_ld.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(HmmError::NumericalUnderflow);
        }
        log_shift[t] = shift;
        for j in 0..m {
            b[t][j] = (state_ld[j] - shift).exp();
        }
        // keep the state log-density alongside the components
        per_state.push(state_ld);
        comp_ld.push(per_state);
    }

    // forward
    let mut alpha = vec![vec![0.0; m]; t_len];
    let mut scale = vec![0.0; t_len + 1];
    for j in 0..m {
        alpha[0][j] = model.entry[j] * b[0][j];
    }
    for t in 0..t_len {
        if t > 0 {
            for j in 0..m {
                let mut s = 0.0;
                for i in 0..m {
                    s += alpha[t - 1][i] * model.trans[i][j];
                }
                alpha[t][j] = s * b[t][j];
            }
        }
        let c: f64 = alpha[t].iter().sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(HmmError::NumericalUnderflow);
        }
        scale[t] = c;
        alpha[t].iter_mut().for_each(|a| *a /= c);
    }
    let c_end: f64 = (0..m).map(|i| alpha[t_len - 1][i] * model.exit[i]).sum();
    if !(c_end > 0.0 && c_end.is_finite()) {
        return Err(HmmError::NumericalUnderflow);
    }
    scale[t_len] = c_end;
    acc.log_likelihood = (0..t_len)
        .map(|t| scale[t].ln() + log_shift[t])
        .sum::<f64>()
        + c_end.ln();

    // backward
    let mut beta = vec![vec![0.0; m]; t_len];
    for i in 0..m {
        beta[t_len - 1][i] = model.exit[i] / c_end;
    }
    for t in (0..t_len - 1).rev() {
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..m {
                s += model.trans[i][j] * b[t + 1][j] * beta[t + 1][j];
            }
            beta[t][i] = s / scale[t + 1];
        }
    }

    // statistics
    for t in 0..t_len {
        for j in 0..m {
            let gamma = alpha[t][j] * beta[t][j];
            if t == 0 {
                acc.entry[j] += gamma;
            }
            acc.occupancy[j] += gamma;
            if gamma == 0.0 {
                continue;
            }
            let state_ld = comp_ld[t][m][j];
            for (k, ld) in comp_ld[t][j].iter().enumerate() {
                let g = gamma * (ld - state_ld).exp();
                if g == 0.0 {
                    continue;
                }
                acc.comp_occ[j][k] += g;
                let sum = &mut acc.comp_sum[j][k];
                let sq = &mut acc.comp_sq[j][k];
                for (d, x) in seq[t].iter().enumerate() {
                    sum[d] += g * x;
                    sq[d] += g * x * x;
                }
            }
        }
        if t + 1 < t_len {
            for i in 0..m {
                if alpha[t][i] == 0.0 {
                    continue;
                }
                for j in 0..m {
                    acc.trans[i][j] +=
                        alpha[t][i] * model.trans[i][j] * b[t + 1][j] * beta[t + 1][j]
                            / scale[t + 1];
                }
            }
        }
    }
    for i in 0..m {
        acc.exit[i] += alpha[t_len - 1][i] * model.exit[i] / c_end;
    }
    Ok(acc)
}

fn maximization(
    model: &ActivityHmm,
    acc: &Accumulator,
    sequences: usize,
    config: &BaumWelchConfig,
) -> ActivityHmm {
    let m = model.states();
    let mut next = model.clone();
    let entry_total: f64 = acc.entry.iter().sum();
    if entry_total > 0.0 {
        next.entry = acc.entry.iter().map(|e| e / entry_total).collect();
    }
    debug_assert!((entry_total - sequences as f64).abs() < 1e-6 * sequences.max(1) as f64);
    for i in 0..m {
        let total: f64 = acc.trans[i].iter().sum::<f64>() + acc.exit[i];
        if total > 0.0 {
            next.trans[i] = acc.trans[i].iter().map(|x| x / total).collect();
            next.exit[i] = acc.exit[i] / total;
        }
    }
    for j in 0..m {
        let occ = acc.occupancy[j];
        if occ <= 0.0 {
            continue;
        }
        let old = &model.emissions[j];
        let mut g = Gmm {
            weights: Vec::new(),
            means: Vec::new(),
            variances: Vec::new(),
        };
        for k in 0..old.components() {
            let ck = acc.comp_occ[j][k];
            g.weights.push(ck / occ);
            if ck > 0.0 {
                let mean: Vec<f64> = acc.comp_sum[j][k].iter().map(|s| s / ck).collect();
                let var = acc.comp_sq[j][k]
                    .iter()
                    .zip(&mean)
                    .zip(&config.variance_floor)
                    .map(|((q, mu), floor)| (q / ck - mu * mu).max(*floor))
                    .collect();
                g.means.push(mean);
                g.variances.push(var);
            } else {
                g.means.push(old.means[k].clone());
                g.variances.push(old.variances[k].clone());
            }
        }
        prune(&mut g, config.prune_threshold);
        next.emissions[j] = g;
    }
    next
}

/// Drops components below `threshold` (always keeping the heaviest) and
/// renormalizes the weights.
fn prune(g: &mut Gmm, threshold: f64) {
    let heaviest = (0..g.components())
        .max_by(|&a, &b| g.weights[a].total_cmp(&g.weights[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let keep: Vec<bool> = (0..g.components())
        .map(|k| k == heaviest || (g.weights[k] >= threshold && g.weights[k] > 0.0))
        .collect();
    let mut i = 0;
    g.weights.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    i = 0;
    g.means.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    i = 0;
    g.variances.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    let total: f64 = g.weights.iter().sum();
    g.weights.iter_mut().for_each(|w| *w /= total);
}

/// Runs Baum-Welch and returns the re-estimated model together with the
/// log-likelihood of the model entering each iteration.
pub fn baum_welch(
    model: &ActivityHmm,
    sequences: &[Vec<Vec<f64>>],
    config: &BaumWelchConfig,
) -> Result<(ActivityHmm, Vec<f64>), HmmError> {
    let sequences: Vec<&Vec<Vec<f64>>> = sequences.iter().filter(|s| !s.is_empty()).collect();
    if sequences.is_empty() {
        return Err(HmmError::NoData);
    }
    model.validate()?;
    if config.variance_floor.len() != model.dimension() {
        return Err(HmmError::DimensionMismatch {
            expected: model.dimension(),
            got: config.variance_floor.len(),
        });
    }
    let mut current = model.clone();
    let mut history = Vec::with_capacity(config.max_iters);
    for _ in 0..config.max_iters {
        let prepared: Vec<PreparedGmm> = current.emissions.iter().map(Gmm::prepare).collect();
        let partials = sequences
            .par_iter()
            .map(|s| expectation(&current, &prepared, s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut acc = Accumulator::new(&current);
        for p in &partials {
            acc.merge(p);
        }
        let ll = acc.log_likelihood;
        current = maximization(&current, &acc, sequences.len(), config);
        let converged = history
            .last()
            .is_some_and(|prev: &f64| (ll - prev).abs() <= config.tolerance * ll.abs());
        history.push(ll);
        if converged {
            break;
        }
    }
    Ok((current, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hhmm::activity::{init_activity_hmm, ActivityConfig};

    fn config(dim: usize, iters: usize) -> BaumWelchConfig {
        BaumWelchConfig {
            max_iters: iters,
            prune_threshold: 1e-3,
            variance_floor: vec![1e-6; dim],
            tolerance: 0.0,
        }
    }

    #[test]
    fn single_state_single_gaussian_is_closed_form() {
        let seqs = vec![
            vec![vec![1.0, 0.0], vec![2.0, 1.0], vec![4.0, -1.0]],
            vec![vec![0.5, 2.0], vec![3.5, 0.5]],
        ];
        let hmm = init_activity_hmm(&ActivityConfig::new("a", 1, 1), &seqs).unwrap();
        let (out, _) = baum_welch(&hmm, &seqs, &config(2, 1)).unwrap();
        let flat: Vec<&Vec<f64>> = seqs.iter().flatten().collect();
        let n = flat.len() as f64;
        for d in 0..2 {
            let mean = flat.iter().map(|o| o[d]).sum::<f64>() / n;
            let var = flat.iter().map(|o| (o[d] - mean).powi(2)).sum::<f64>() / n;
            assert!((out.emissions[0].means[0][d] - mean).abs() < 1e-12);
            assert!((out.emissions[0].variances[0][d] - var).abs() < 1e-12);
        }
        // 5 frames, 2 exits
        assert!((out.exit[0] - 2.0 / 5.0).abs() < 1e-12);
        assert!((out.trans[0][0] - 3.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn pruning_keeps_one_component_and_renormalizes() {
        let mut g = Gmm {
            weights: vec![0.0004, 0.0003, 0.9993],
            means: vec![vec![0.0]; 3],
            variances: vec![vec![1.0]; 3],
        };
        prune(&mut g, 1e-3);
        assert_eq!(g.components(), 1);
        assert_eq!(g.weights, vec![1.0]);

        let mut g = Gmm {
            weights: vec![0.0004, 0.0006],
            means: vec![vec![0.0]; 2],
            variances: vec![vec![1.0]; 2],
        };
        prune(&mut g, 1e-3);
        assert_eq!(g.components(), 1);
        assert_eq!(g.weights, vec![1.0]);
    }

    #[test]
    fn rejects_empty_input() {
        let hmm = init_activity_hmm(&ActivityConfig::new("a", 1, 1), &[vec![vec![0.0]]]).unwrap();
        assert_eq!(baum_welch(&hmm, &[], &config(1, 3)), Err(HmmError::NoData));
    }
}

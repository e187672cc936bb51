use serde::{Deserialize, Serialize};

use super::HmmError;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl Gmm {
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![mean],
            variances: vec![variance],
        }
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dimension(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(HmmError::InvalidModel(format!(
                "mixture with {k} weights, {} means, {} variances",
                self.means.len(),
                self.variances.len()
            )));
        }
        let n = self.dimension();
        if self
            .means
            .iter()
            .chain(&self.variances)
            .any(|v| v.len() != n)
        {
            return Err(HmmError::InvalidModel("ragged mixture dimensions".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(HmmError::InvalidModel("negative mixture weight".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(HmmError::InvalidModel(format!(
                "mixture weights sum to {total}"
            )));
        }
        if self
            .variances
            .iter()
            .flatten()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(HmmError::InvalidModel("non-positive variance".into()));
        }
        if self.means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(HmmError::InvalidModel("non-finite mean".into()));
        }
        Ok(())
    }

    /// `log sum_k w_k N(o; mu_k, diag(var_k))`.
    pub fn log_density(&self, o: &[f64]) -> Result<f64, HmmError> {
        if o.len() != self.dimension() {
            return Err(HmmError::DimensionMismatch {
                expected: self.dimension(),
                got: o.len(),
            });
        }
        Ok(PreparedGmm::new(self).log_density(o))
    }

    pub fn prepare(&self) -> PreparedGmm {
        PreparedGmm::new(self)
    }
}

/// Mixture with per-component constants precomputed for repeated evaluation.
#[derive(Debug, Clone)]
pub struct PreparedGmm {
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    inv_variances: Vec<Vec<f64>>,
    /// `log w_k - 0.5 * sum_d ln(2 pi var_kd)`
    log_consts: Vec<f64>,
}

impl PreparedGmm {
    fn new(g: &Gmm) -> Self {
        let log_weights: Vec<f64> = g.weights.iter().map(|w| w.ln()).collect();
        let log_consts = g
            .variances
            .iter()
            .zip(&log_weights)
            .map(|(var, lw)| lw - 0.5 * var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>())
            .collect();
        Self {
            log_weights,
            means: g.means.clone(),
            inv_variances: g
                .variances
                .iter()
                .map(|var| var.iter().map(|v| 1.0 / v).collect())
                .collect(),
            log_consts,
        }
    }

    pub fn dimension(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Weighted log-density of every component, `log w_k + log N_k(o)`.
    pub fn component_log_densities(&self, o: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for k in 0..self.means.len() {
            if self.log_weights[k] == f64::NEG_INFINITY {
                out.push(f64::NEG_INFINITY);
                continue;
            }
            let mut q = 0.0;
            for ((x, m), iv) in o.iter().zip(&self.means[k]).zip(&self.inv_variances[k]) {
                let d = x - m;
                q += d * d * iv;
            }
            out.push(self.log_consts[k] - 0.5 * q);
        }
    }

    pub fn log_density(&self, o: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.means.len());
        self.component_log_densities(o, &mut buf);
        log_sum_exp(&buf)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

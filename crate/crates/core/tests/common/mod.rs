//! Helpers shared by the integration tests.
#![allow(dead_code)]

use adl_core::hhmm::{ActivityHmm, DecodingNetwork, Gmm};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn probabilities(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

pub fn random_gmm(rng: &mut ChaCha8Rng, dim: usize) -> Gmm {
    let k = rng.random_range(1..=3);
    Gmm {
        weights: probabilities(rng, k),
        means: (0..k)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect(),
        variances: (0..k)
            .map(|_| (0..dim).map(|_| rng.random_range(0.3..2.0)).collect())
            .collect(),
    }
}

pub fn random_activity(rng: &mut ChaCha8Rng, name: &str, m: usize, dim: usize) -> ActivityHmm {
    let mut trans = Vec::new();
    let mut exit = Vec::new();
    for _ in 0..m {
        let mut row = probabilities(rng, m + 1);
        exit.push(row.pop().unwrap());
        trans.push(row);
    }
    ActivityHmm {
        name: name.into(),
        entry: probabilities(rng, m),
        trans,
        exit,
        emissions: (0..m).map(|_| random_gmm(rng, dim)).collect(),
    }
}

pub fn direct_log_density(g: &Gmm, o: &[f64]) -> f64 {
    let mut p = 0.0;
    for k in 0..g.weights.len() {
        let mut c = g.weights[k];
        for d in 0..o.len() {
            let v = g.variances[k][d];
            let z = o[d] - g.means[k][d];
            c *= (-0.5 * z * z / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        }
        p += c;
    }
    p.ln()
}

/// Best path by enumerating every state sequence.
pub fn brute_force(net: &DecodingNetwork, obs: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = net.states();
    let t_len = obs.len();
    let em: Vec<Vec<f64>> = obs
        .iter()
        .map(|o| {
            net.emissions
                .iter()
                .map(|g| direct_log_density(g, o))
                .collect()
        })
        .collect();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let total = n.pow(t_len as u32);
    let mut path = vec![0usize; t_len];
    for mut code in 0..total {
        for s in path.iter_mut().rev() {
            *s = code % n;
            code /= n;
        }
        let mut score = net.init[path[0]].ln() + em[0][path[0]];
        for t in 1..t_len {
            score += net.trans[path[t - 1]][path[t]].ln() + em[t][path[t]];
        }
        if score > best.1 {
            best = (path.clone(), score);
        }
    }
    best
}

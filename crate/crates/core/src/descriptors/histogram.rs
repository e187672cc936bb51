use crate::motion::{AffineMotion, ResidualField};

/// Bins of the instant-motion (translation log-energy) histogram.
pub const ENERGY_BINS: usize = 5;
/// Bins of the cut histogram; bin `i` looks back `2^i` frames.
pub const CUT_BINS: usize = 8;
/// Side of the residual-motion grid.
pub const RM_GRID: usize = 4;
/// Added to the squared translation before taking the log.
pub const ENERGY_EPSILON: f64 = 1e-12;

fn energy_bin(a: f64, extent: usize) -> usize {
    let energy = (a * a + ENERGY_EPSILON).ln();
    let step = ((extent * extent) as f64).ln() / (ENERGY_BINS - 1) as f64;
    if energy < step {
        0
    } else if energy >= (ENERGY_BINS - 1) as f64 * step {
        ENERGY_BINS - 1
    } else {
        // step <= energy < (N_e - 1) * step
        ((energy / step).floor() as usize).clamp(1, ENERGY_BINS - 2)
    }
}

/// One-hot log-energy histograms of the horizontal (`a1`) and vertical (`a4`)
/// translation. The last bin starts at a translation of the full image
/// width (resp. height).
pub fn instant_motion_histogram(
    model: &AffineMotion,
    width: usize,
    height: usize,
) -> ([f64; ENERGY_BINS], [f64; ENERGY_BINS]) {
    let mut hx = [0.0; ENERGY_BINS];
    let mut hy = [0.0; ENERGY_BINS];
    hx[energy_bin(model.tx(), width)] = 1.0;
    hy[energy_bin(model.ty(), height)] = 1.0;
    (hx, hy)
}

/// Cumulative cut counts: bin `i` (1-based) counts cuts `c <= t` with
/// `t - c <= 2^i`. `cut_frames` must be sorted.
pub fn cut_histogram(cut_frames: &[usize], t: usize) -> [f64; CUT_BINS] {
    let mut bins = [0.0; CUT_BINS];
    let end = cut_frames.partition_point(|&c| c <= t);
    for &c in cut_frames[..end].iter().rev() {
        let age = t - c;
        if age > 1 << CUT_BINS {
            break;
        }
        for (i, b) in bins.iter_mut().enumerate() {
            if age <= 1 << (i + 1) {
                *b += 1.0;
            }
        }
    }
    bins
}

/// RMS residual magnitude on a 4x4 grid of image cells, row-major from the
/// top-left cell. `centers` are the block centers the residuals belong to.
pub fn residual_motion_descriptor(
    residuals: &ResidualField,
    centers: &[(f64, f64)],
    width: usize,
    height: usize,
) -> [f64; RM_GRID * RM_GRID] {
    let mut sum = [0.0; RM_GRID * RM_GRID];
    let mut count = [0usize; RM_GRID * RM_GRID];
    for (&(x, y), &(rx, ry)) in centers.iter().zip(&residuals.residuals) {
        let col = ((x * RM_GRID as f64 / width as f64).floor() as usize).min(RM_GRID - 1);
        let row = ((y * RM_GRID as f64 / height as f64).floor() as usize).min(RM_GRID - 1);
        let cell = row * RM_GRID + col;
        sum[cell] += rx * rx + ry * ry;
        count[cell] += 1;
    }
    let mut out = [0.0; RM_GRID * RM_GRID];
    for i in 0..out.len() {
        if count[i] > 0 {
            out[i] = (sum[i] / count[i] as f64).sqrt();
        }
    }
    out
}

//! Global (ego-)motion estimation from block motion vectors.
//!
//! Each frame carries one displacement per image block. The camera motion is
//! modelled by the complete first-order affine model
//!
//! ```text
//! dx = a1 + a2 * x + a3 * y
//! dy = a4 + a5 * x + a6 * y
//! ```
//!
//! fitted with iteratively reweighted least squares (Tukey biweight), so that
//! blocks covering independently moving objects do not bias the estimate.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("too few blocks: {0} (need at least 3)")]
    TooFewBlocks(usize),
    #[error("degenerate block geometry: normal system is rank-deficient")]
    DegenerateGeometry,
    #[error("invalid motion field: {0}")]
    InvalidField(String),
}

/// Block motion vectors of a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionVectorField {
    pub frame_index: usize,
    pub block_centers: Vec<(f64, f64)>,
    pub displacements: Vec<(f64, f64)>,
    pub width: usize,
    pub height: usize,
}

impl MotionVectorField {
    pub fn new(
        frame_index: usize,
        block_centers: Vec<(f64, f64)>,
        displacements: Vec<(f64, f64)>,
        width: usize,
        height: usize,
    ) -> Result<Self, MotionError> {
        if block_centers.is_empty() {
            return Err(MotionError::InvalidField(format!(
                "frame {frame_index} has no blocks"
            )));
        }
        if block_centers.len() != displacements.len() {
            return Err(MotionError::InvalidField(format!(
                "frame {frame_index}: {} centers vs {} displacements",
                block_centers.len(),
                displacements.len()
            )));
        }
        let (w, h) = (width as f64, height as f64);
        for &(x, y) in &block_centers {
            if !(x >= 0.0 && x < w && y >= 0.0 && y < h) {
                return Err(MotionError::InvalidField(format!(
                    "frame {frame_index}: block center ({x}, {y}) outside {width}x{height}"
                )));
            }
        }
        if displacements
            .iter()
            .any(|d| !d.0.is_finite() || !d.1.is_finite())
        {
            return Err(MotionError::InvalidField(format!(
                "frame {frame_index}: non-finite displacement"
            )));
        }
        Ok(Self {
            frame_index,
            block_centers,
            displacements,
            width,
            height,
        })
    }

    pub fn len(&self) -> usize {
        self.block_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_centers.is_empty()
    }
}

/// Six-parameter affine motion model, `params[0]` is `a1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineMotion {
    pub params: [f64; 6],
}

impl AffineMotion {
    pub const ZERO: AffineMotion = AffineMotion { params: [0.0; 6] };

    pub fn new(params: [f64; 6]) -> Self {
        Self { params }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::new([tx, 0.0, 0.0, ty, 0.0, 0.0])
    }

    /// Horizontal translation `a1`.
    pub fn tx(&self) -> f64 {
        self.params[0]
    }

    /// Vertical translation `a4`.
    pub fn ty(&self) -> f64 {
        self.params[3]
    }

    /// Displacement predicted at image position `(x, y)`.
    pub fn predict(&self, x: f64, y: f64) -> (f64, f64) {
        let a = &self.params;
        (a[0] + a[1] * x + a[2] * y, a[3] + a[4] * x + a[5] * y)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    pub frame_index: usize,
    pub residuals: Vec<(f64, f64)>,
}

/// Settings of the IRLS loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustConfig {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    /// Tukey biweight tuning constant, in units of the robust scale.
    pub tukey_c: f64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            relative_tolerance: 1e-8,
            tukey_c: 4.685,
        }
    }
}

/// Result of a robust fit, including the weights used by the final solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustFit {
    pub model: AffineMotion,
    pub weights: Vec<f64>,
    pub iterations: usize,
}

/// Robust affine fit with the default IRLS settings.
pub fn estimate_affine(field: &MotionVectorField) -> Result<AffineMotion, MotionError> {
    estimate_affine_robust(field, &RobustConfig::default()).map(|fit| fit.model)
}

/// Plain (unit-weight) least squares fit.
pub fn estimate_affine_unweighted(field: &MotionVectorField) -> Result<AffineMotion, MotionError> {
    let weights = vec![1.0; field.len()];
    weighted_fit(field, &weights)
}

pub fn estimate_affine_robust(
    field: &MotionVectorField,
    config: &RobustConfig,
) -> Result<RobustFit, MotionError> {
    if field.len() < 3 {
        return Err(MotionError::TooFewBlocks(field.len()));
    }
    let mut weights = vec![1.0; field.len()];
    let mut model = weighted_fit(field, &weights)?;

    let mean_magnitude = field
        .displacements
        .iter()
        .map(|&(dx, dy)| dx.hypot(dy))
        .sum::<f64>()
        / field.len() as f64;
    let perfect_fit = 1e-10 * mean_magnitude.max(1.0);

    let mut iterations = 0;
    while iterations < config.max_iterations {
        let magnitudes = residual_magnitudes(field, &model);
        let scale = 1.4826 * median(&magnitudes);
        if scale <= perfect_fit {
            break;
        }
        let cutoff = config.tukey_c * scale;
        let candidate: Vec<f64> = magnitudes
            .iter()
            .map(|&r| {
                if r < cutoff {
                    let u = r / cutoff;
                    (1.0 - u * u).powi(2)
                } else {
                    0.0
                }
            })
            .collect();
        let next = match weighted_fit(field, &candidate) {
            Ok(m) => m,
            // Too few effective inliers to pin down the model: keep the last one.
            Err(MotionError::DegenerateGeometry) => break,
            Err(e) => return Err(e),
        };
        iterations += 1;
        weights = candidate;
        let change = next
            .params
            .iter()
            .zip(&model.params)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = model.params.iter().map(|a| a * a).sum::<f64>().sqrt();
        model = next;
        if change <= config.relative_tolerance * norm.max(1e-12) {
            break;
        }
    }
    Ok(RobustFit {
        model,
        weights,
        iterations,
    })
}

pub fn residual_field(field: &MotionVectorField, model: &AffineMotion) -> ResidualField {
    let residuals = field
        .block_centers
        .iter()
        .zip(&field.displacements)
        .map(|(&(x, y), &(dx, dy))| {
            let (px, py) = model.predict(x, y);
            (dx - px, dy - py)
        })
        .collect();
    ResidualField {
        frame_index: field.frame_index,
        residuals,
    }
}

fn residual_magnitudes(field: &MotionVectorField, model: &AffineMotion) -> Vec<f64> {
    residual_field(field, model)
        .residuals
        .into_iter()
        .map(|(rx, ry)| rx.hypot(ry))
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Weighted least squares on centered, scaled coordinates. The x and y
/// equations share one design matrix, so the 6x6 system splits into two 3x3
/// solves.
fn weighted_fit(field: &MotionVectorField, weights: &[f64]) -> Result<AffineMotion, MotionError> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(MotionError::DegenerateGeometry);
    }
    let (mut mx, mut my) = (0.0, 0.0);
    for (&(x, y), &w) in field.block_centers.iter().zip(weights) {
        mx += w * x;
        my += w * y;
    }
    mx /= total;
    my /= total;
    let mut spread = 0.0;
    for (&(x, y), &w) in field.block_centers.iter().zip(weights) {
        spread += w * ((x - mx).powi(2) + (y - my).powi(2));
    }
    let scale = (spread / total).sqrt();
    if !(scale > 0.0) {
        return Err(MotionError::DegenerateGeometry);
    }

    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs_x = Vector3::<f64>::zeros();
    let mut rhs_y = Vector3::<f64>::zeros();
    for ((&(x, y), &(dx, dy)), &w) in field
        .block_centers
        .iter()
        .zip(&field.displacements)
        .zip(weights)
    {
        if w == 0.0 {
            continue;
        }
        let row = Vector3::new(1.0, (x - mx) / scale, (y - my) / scale);
        normal += w * row * row.transpose();
        rhs_x += w * dx * row;
        rhs_y += w * dy * row;
    }

    let eigen = SymmetricEigen::new(normal);
    let max_ev = eigen.eigenvalues.max();
    let min_ev = eigen.eigenvalues.min();
    if !(min_ev > 1e-10 * max_ev) {
        return Err(MotionError::DegenerateGeometry);
    }
    let chol = normal.cholesky().ok_or(MotionError::DegenerateGeometry)?;
    let bx = chol.solve(&rhs_x);
    let by = chol.solve(&rhs_y);

    // Undo the coordinate normalization.
    let (a2, a3) = (bx[1] / scale, bx[2] / scale);
    let (a5, a6) = (by[1] / scale, by[2] / scale);
    let a1 = bx[0] - a2 * mx - a3 * my;
    let a4 = by[0] - a5 * mx - a6 * my;
    Ok(AffineMotion::new([a1, a2, a3, a4, a5, a6]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_field(model: &AffineMotion, n: usize, w: usize, h: usize) -> MotionVectorField {
        let mut centers = Vec::new();
        let mut disp = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let x = (i as f64 + 0.5) * w as f64 / n as f64;
                let y = (j as f64 + 0.5) * h as f64 / n as f64;
                centers.push((x, y));
                disp.push(model.predict(x, y));
            }
        }
        MotionVectorField::new(0, centers, disp, w, h).unwrap()
    }

    /// Closed-form unweighted least squares through explicit 3x3 normal
    /// equations in raw coordinates (Cramer's rule).
    fn oracle_lsq(centers: &[(f64, f64)], disp: &[(f64, f64)]) -> [f64; 6] {
        let mut n = [[0.0f64; 3]; 3];
        let mut bx = [0.0f64; 3];
        let mut by = [0.0f64; 3];
        for (&(x, y), &(dx, dy)) in centers.iter().zip(disp) {
            let r = [1.0, x, y];
            for i in 0..3 {
                for j in 0..3 {
                    n[i][j] += r[i] * r[j];
                }
                bx[i] += r[i] * dx;
                by[i] += r[i] * dy;
            }
        }
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(n);
        let solve = |b: [f64; 3]| {
            let mut out = [0.0; 3];
            for (k, o) in out.iter_mut().enumerate() {
                let mut m = n;
                for i in 0..3 {
                    m[i][k] = b[i];
                }
                *o = det(m) / d;
            }
            out
        };
        let sx = solve(bx);
        let sy = solve(by);
        [sx[0], sx[1], sx[2], sy[0], sy[1], sy[2]]
    }

    #[test]
    fn zero_field_gives_zero_model() {
        let field = grid_field(&AffineMotion::ZERO, 8, 320, 240);
        let model = estimate_affine(&field).unwrap();
        assert!(model.params.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn recovers_noiseless_affine_on_16x16_grid() {
        let truth = AffineMotion::new([2.0, 0.01, 0.0, -1.0, 0.0, 0.01]);
        let field = grid_field(&truth, 16, 320, 240);
        let oracle = oracle_lsq(&field.block_centers, &field.displacements);
        let model = estimate_affine(&field).unwrap();
        for k in 0..6 {
            assert!((oracle[k] - truth.params[k]).abs() < 1e-9);
            assert!(
                (model.params[k] - truth.params[k]).abs() < 1e-9,
                "a{}",
                k + 1
            );
        }
    }

    #[test]
    fn rejects_twenty_percent_outliers() {
        let truth = AffineMotion::new([2.0, 0.01, 0.0, -1.0, 0.0, 0.01]);
        let mut field = grid_field(&truth, 16, 320, 240);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = field.len();
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        let corrupted: Vec<usize> = idx[..n / 5].to_vec();
        for &i in &corrupted {
            field.displacements[i] = (40.0, 40.0);
        }
        let inliers: Vec<usize> = (0..n).filter(|i| !corrupted.contains(i)).collect();
        let oracle = oracle_lsq(
            &inliers
                .iter()
                .map(|&i| field.block_centers[i])
                .collect::<Vec<_>>(),
            &inliers
                .iter()
                .map(|&i| field.displacements[i])
                .collect::<Vec<_>>(),
        );
        let model = estimate_affine(&field).unwrap();
        for k in 0..6 {
            assert!((model.params[k] - oracle[k]).abs() < 1e-3, "a{}", k + 1);
        }
    }

    #[test]
    fn too_few_blocks() {
        let f =
            MotionVectorField::new(0, vec![(1.0, 1.0), (2.0, 5.0)], vec![(0.0, 0.0); 2], 10, 10)
                .unwrap();
        assert_eq!(estimate_affine(&f), Err(MotionError::TooFewBlocks(2)));
    }

    #[test]
    fn collinear_blocks_are_degenerate() {
        let centers: Vec<_> = (0..10).map(|i| (i as f64, i as f64)).collect();
        let f = MotionVectorField::new(0, centers, vec![(1.0, 0.0); 10], 20, 20).unwrap();
        assert_eq!(estimate_affine(&f), Err(MotionError::DegenerateGeometry));
    }

    #[test]
    fn field_invariants_checked() {
        assert!(MotionVectorField::new(0, vec![], vec![], 10, 10).is_err());
        assert!(MotionVectorField::new(0, vec![(1.0, 1.0)], vec![], 10, 10).is_err());
        assert!(MotionVectorField::new(0, vec![(10.0, 1.0)], vec![(0.0, 0.0)], 10, 10).is_err());
    }

    #[test]
    fn residuals_of_exact_field_vanish() {
        let truth = AffineMotion::new([1.5, -0.02, 0.03, 0.5, 0.01, -0.01]);
        let field = grid_field(&truth, 10, 160, 128);
        let fit = estimate_affine(&field).unwrap();
        let res = residual_field(&field, &fit);
        assert!(res
            .residuals
            .iter()
            .all(|r| r.0.abs() < 1e-9 && r.1.abs() < 1e-9));
    }

    #[test]
    fn residuals_under_zero_model_equal_displacements() {
        let field = MotionVectorField::new(
            3,
            vec![(1.0, 1.0), (5.0, 2.0), (3.0, 7.0)],
            vec![(3.0, 4.0); 3],
            10,
            10,
        )
        .unwrap();
        let res = residual_field(&field, &AffineMotion::ZERO);
        assert_eq!(res.frame_index, 3);
        assert_eq!(res.residuals, vec![(3.0, 4.0); 3]);
    }

    #[test]
    fn residuals_match_per_block_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let centers: Vec<_> = (0..30)
            .map(|_| (rng.random_range(0.0..320.0), rng.random_range(0.0..240.0)))
            .collect();
        let disp: Vec<_> = (0..30)
            .map(|_| (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        let field = MotionVectorField::new(0, centers.clone(), disp.clone(), 320, 240).unwrap();
        let a = [0.3, 0.001, -0.002, -0.7, 0.004, 0.0005];
        let res = residual_field(&field, &AffineMotion::new(a));
        for i in 0..30 {
            let (x, y) = centers[i];
            let ex = disp[i].0 - (a[0] + a[1] * x + a[2] * y);
            let ey = disp[i].1 - (a[3] + a[4] * x + a[5] * y);
            assert_eq!(res.residuals[i], (ex, ey));
        }
    }
}

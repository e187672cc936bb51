use super::DescriptorError;

/// Frames averaged by the training-time smoother.
pub const SMOOTHING_WINDOW: usize = 10;
/// Decimation factor; also the number of phase-shifted sequences produced.
pub const DECIMATION: usize = 10;
const BEFORE: usize = 5;
const AFTER: usize = 4;

/// Moving average over frames `t-5 ..= t+4`, clipped to the sequence.
pub fn smooth(frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = frames.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = frames[0].len();
    // prefix sums per dimension
    let mut prefix = vec![vec![0.0; dim]; n + 1];
    for t in 0..n {
        for d in 0..dim {
            prefix[t + 1][d] = prefix[t][d] + frames[t][d];
        }
    }
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(BEFORE);
            let hi = (t + AFTER).min(n - 1);
            let count = (hi - lo + 1) as f64;
            (0..dim)
                .map(|d| (prefix[hi + 1][d] - prefix[lo][d]) / count)
                .collect()
        })
        .collect()
}

/// Every `factor`-th element starting at `phase`.
pub fn decimate<T: Clone>(items: &[T], factor: usize, phase: usize) -> Vec<T> {
    items.iter().skip(phase).step_by(factor).cloned().collect()
}

/// Smooths a frame sequence and splits it into ten decimated sequences, one
/// per phase offset `0..10`.
pub fn smooth_and_decimate(frames: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>, DescriptorError> {
    if frames.len() < SMOOTHING_WINDOW {
        return Err(DescriptorError::TooShort {
            len: frames.len(),
            min: SMOOTHING_WINDOW,
        });
    }
    let smoothed = smooth(frames);
    Ok((0..DECIMATION)
        .map(|phase| decimate(&smoothed, DECIMATION, phase))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequences_stay_constant() {
        let frames = vec![vec![2.5, -1.0]; 37];
        let out = smooth_and_decimate(&frames).unwrap();
        assert_eq!(out.len(), 10);
        for seq in &out {
            for v in seq {
                assert!((v[0] - 2.5).abs() < 1e-12 && (v[1] + 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_lengths() {
        let frames: Vec<Vec<f64>> = (0..100).map(|t| vec![t as f64]).collect();
        let out = smooth_and_decimate(&frames).unwrap();
        for (phase, seq) in out.iter().enumerate() {
            assert_eq!(seq.len(), (100 - phase).div_ceil(10));
        }
        let frames: Vec<Vec<f64>> = (0..23).map(|t| vec![t as f64]).collect();
        let out = smooth_and_decimate(&frames).unwrap();
        for (phase, seq) in out.iter().enumerate() {
            assert_eq!(seq.len(), (23 - phase).div_ceil(10));
        }
    }

    #[test]
    fn ramp_interior_is_window_mean() {
        let frames: Vec<Vec<f64>> = (0..50).map(|t| vec![t as f64]).collect();
        let s = smooth(&frames);
        for t in 5..46 {
            // mean of t-5 ..= t+4
            let expected = (t as f64 - 5.0 + t as f64 + 4.0) / 2.0;
            assert!((s[t][0] - expected).abs() < 1e-12);
        }
        // clipped head: frames 0..=4
        assert!((s[0][0] - 2.0).abs() < 1e-12);
        // clipped tail: frames 44..=49
        assert!((s[49][0] - 46.5).abs() < 1e-12);
    }

    #[test]
    fn too_short() {
        let frames = vec![vec![0.0]; 9];
        assert_eq!(
            smooth_and_decimate(&frames),
            Err(DescriptorError::TooShort { len: 9, min: 10 })
        );
    }
}

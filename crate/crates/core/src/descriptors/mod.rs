//! Per-frame and per-segment descriptors.
//!
//! Layout of the 60-column descriptor dump (and of a fully fused observation):
//!
//! | columns | part                                  |
//! |---------|---------------------------------------|
//! | 0..5    | instant-motion histogram, horizontal  |
//! | 5..10   | instant-motion histogram, vertical    |
//! | 10..18  | cut histogram                         |
//! | 18..34  | residual motion, 4x4 grid, row-major  |
//! | 34..41  | audio event probabilities             |
//! | 41..53  | color layout (6 Y, 3 Cb, 3 Cr)        |
//! | 53..60  | location probabilities                |

mod color_layout;
mod histogram;
mod smoothing;
mod tracks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use color_layout::{color_layout, KeyFrameImage, CLD_LEN};
pub use histogram::{
    cut_histogram, instant_motion_histogram, residual_motion_descriptor, CUT_BINS, ENERGY_BINS,
    ENERGY_EPSILON, RM_GRID,
};
pub use smoothing::{decimate, smooth, smooth_and_decimate, DECIMATION, SMOOTHING_WINDOW};
pub use tracks::{align_track, TRACK_LEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescriptorError {
    #[error("segment has no frames")]
    EmptySegment,
    #[error("sequence too short for smoothing/decimation: {len} < {min}")]
    TooShort { len: usize, min: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
}

pub const DUMP_WIDTH: usize = 60;

/// Column names of the descriptor dump, in storage order.
pub fn dump_columns() -> Vec<String> {
    let mut cols = Vec::with_capacity(DUMP_WIDTH);
    let mut push = |prefix: &str, n: usize| {
        for i in 1..=n {
            cols.push(format!("{prefix}{i}"));
        }
    };
    push("htpe_x", ENERGY_BINS);
    push("htpe_y", ENERGY_BINS);
    push("hc", CUT_BINS);
    push("rm", RM_GRID * RM_GRID);
    push("audio", TRACK_LEN);
    push("cld", CLD_LEN);
    push("loc", TRACK_LEN);
    cols
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameDescriptors {
    pub h_tpe_x: [f64; ENERGY_BINS],
    pub h_tpe_y: [f64; ENERGY_BINS],
    pub h_c: [f64; CUT_BINS],
    pub rm: [f64; RM_GRID * RM_GRID],
    pub audio: [f64; TRACK_LEN],
    pub location: [f64; TRACK_LEN],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentDescriptors {
    pub h_tpe_x: [f64; ENERGY_BINS],
    pub h_tpe_y: [f64; ENERGY_BINS],
    pub h_c: [f64; CUT_BINS],
    pub rm: [f64; RM_GRID * RM_GRID],
    pub audio: [f64; TRACK_LEN],
    pub cld: [f64; CLD_LEN],
    pub location: [f64; TRACK_LEN],
}

impl SegmentDescriptors {
    /// A single frame carrying the color layout of its enclosing segment.
    pub fn from_frame(frame: &FrameDescriptors, cld: [f64; CLD_LEN]) -> Self {
        Self {
            h_tpe_x: frame.h_tpe_x,
            h_tpe_y: frame.h_tpe_y,
            h_c: frame.h_c,
            rm: frame.rm,
            audio: frame.audio,
            cld,
            location: frame.location,
        }
    }

    /// The 60 values in dump order.
    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(DUMP_WIDTH);
        row.extend_from_slice(&self.h_tpe_x);
        row.extend_from_slice(&self.h_tpe_y);
        row.extend_from_slice(&self.h_c);
        row.extend_from_slice(&self.rm);
        row.extend_from_slice(&self.audio);
        row.extend_from_slice(&self.cld);
        row.extend_from_slice(&self.location);
        row
    }
}

fn accumulate<const N: usize>(acc: &mut [f64; N], v: &[f64; N]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

fn scale<const N: usize>(v: &mut [f64; N], f: f64) {
    for a in v.iter_mut() {
        *a *= f;
    }
}

/// Averages the per-frame descriptors of a segment and adds the color layout
/// of its key frame.
pub fn aggregate_segment(
    frames: &[FrameDescriptors],
    key_image: &KeyFrameImage,
) -> Result<SegmentDescriptors, DescriptorError> {
    if frames.is_empty() {
        return Err(DescriptorError::EmptySegment);
    }
    let mut mean = FrameDescriptors::default();
    for f in frames {
        accumulate(&mut mean.h_tpe_x, &f.h_tpe_x);
        accumulate(&mut mean.h_tpe_y, &f.h_tpe_y);
        accumulate(&mut mean.h_c, &f.h_c);
        accumulate(&mut mean.rm, &f.rm);
        accumulate(&mut mean.audio, &f.audio);
        accumulate(&mut mean.location, &f.location);
    }
    let inv = 1.0 / frames.len() as f64;
    scale(&mut mean.h_tpe_x, inv);
    scale(&mut mean.h_tpe_y, inv);
    scale(&mut mean.h_c, inv);
    scale(&mut mean.rm, inv);
    scale(&mut mean.audio, inv);
    scale(&mut mean.location, inv);
    Ok(SegmentDescriptors::from_frame(
        &mean,
        color_layout(key_image),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng) -> FrameDescriptors {
        let mut f = FrameDescriptors::default();
        f.h_tpe_x[rng.random_range(0..5)] = 1.0;
        f.h_tpe_y[rng.random_range(0..5)] = 1.0;
        let mut c = 0.0;
        for b in f.h_c.iter_mut() {
            c += rng.random_range(0..3) as f64;
            *b = c;
        }
        for v in f.rm.iter_mut() {
            *v = rng.random_range(0.0..4.0);
        }
        for v in f.audio.iter_mut().chain(f.location.iter_mut()) {
            *v = rng.random_range(0.0..1.0);
        }
        f
    }

    fn gray() -> KeyFrameImage {
        KeyFrameImage::uniform(16, 16, [128, 128, 128])
    }

    #[test]
    fn dump_has_sixty_named_columns() {
        let cols = dump_columns();
        assert_eq!(cols.len(), DUMP_WIDTH);
        assert_eq!(cols[0], "htpe_x1");
        assert_eq!(cols[34], "audio1");
        assert_eq!(cols[41], "cld1");
        assert_eq!(cols[59], "loc7");
    }

    #[test]
    fn singleton_segment_equals_its_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_frame(&mut rng);
        let s = aggregate_segment(std::slice::from_ref(&f), &gray()).unwrap();
        assert_eq!(s, SegmentDescriptors::from_frame(&f, color_layout(&gray())));
    }

    #[test]
    fn two_frame_midpoint() {
        let a = FrameDescriptors::default();
        let b = FrameDescriptors {
            h_c: [2.0; 8],
            ..Default::default()
        };
        let s = aggregate_segment(&[a, b], &gray()).unwrap();
        assert_eq!(s.h_c, [1.0; 8]);
    }

    #[test]
    fn twenty_frames_match_direct_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frames: Vec<_> = (0..20).map(|_| random_frame(&mut rng)).collect();
        let s = aggregate_segment(&frames, &gray()).unwrap();
        let row = s.to_row();
        let rows: Vec<Vec<f64>> = frames
            .iter()
            .map(|f| SegmentDescriptors::from_frame(f, [0.0; 12]).to_row())
            .collect();
        for c in (0..41).chain(53..60) {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / 20.0;
            assert!((row[c] - mean).abs() < 1e-12, "column {c}");
        }
        assert!((s.h_tpe_x.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((s.h_tpe_y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_segment_rejected() {
        assert_eq!(
            aggregate_segment(&[], &gray()),
            Err(DescriptorError::EmptySegment)
        );
    }
}

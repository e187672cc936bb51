//! Viewpoint segmentation from corner trajectories.
//!
//! The four image corners are carried along by the estimated ego-motion. A
//! corner becomes "outbound" once it has moved at least `s * w` pixels from
//! where it was at the start of the current segment; a segment closes when
//! three corners have been outbound, subject to length bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::AffineMotion;

pub const MIN_SEGMENT_LEN: usize = 5;
pub const MAX_SEGMENT_LEN: usize = 1000;
/// Default overlap threshold `s`.
pub const DEFAULT_OVERLAP: f64 = 0.5;
/// Number of outbound corners that closes a segment.
const OUTBOUND_QUORUM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("empty motion stream")]
    EmptyStream,
    #[error("overlap threshold must lie in (0, 1), got {0}")]
    InvalidOverlap(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CornerTracker {
    pub segment_start_frame: usize,
    pub corner_positions: [(f64, f64); 4],
    pub corner_origins: [(f64, f64); 4],
    pub outbound_flags: [bool; 4],
}

impl CornerTracker {
    /// Tracker positioned on the four image corners.
    pub fn new(start_frame: usize, width: usize, height: usize) -> Self {
        let (r, b) = (
            width.saturating_sub(1) as f64,
            height.saturating_sub(1) as f64,
        );
        let corners = [(0.0, 0.0), (r, 0.0), (0.0, b), (r, b)];
        Self {
            segment_start_frame: start_frame,
            corner_positions: corners,
            corner_origins: corners,
            outbound_flags: [false; 4],
        }
    }

    pub fn outbound_count(&self) -> usize {
        self.outbound_flags.iter().filter(|&&f| f).count()
    }

    /// Moves every corner by the displacement the model predicts at its
    /// current position and updates the outbound flags (distance `>= s * w`).
    pub fn advance(&self, model: &AffineMotion, width: usize, overlap: f64) -> CornerTracker {
        let threshold = overlap * width as f64;
        let mut next = self.clone();
        for k in 0..4 {
            let (x, y) = self.corner_positions[k];
            let (dx, dy) = model.predict(x, y);
            let p = (x + dx, y + dy);
            next.corner_positions[k] = p;
            let (ox, oy) = self.corner_origins[k];
            if (p.0 - ox).hypot(p.1 - oy) >= threshold {
                next.outbound_flags[k] = true;
            }
        }
        next
    }
}

/// Temporal interval `[t_min, t_max]` (inclusive) with its key frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub t_min: usize,
    pub t_max: usize,
    pub key_frame: usize,
}

impl Segment {
    pub fn new(t_min: usize, t_max: usize) -> Self {
        debug_assert!(t_min <= t_max);
        Self {
            t_min,
            t_max,
            key_frame: key_frame(t_min, t_max),
        }
    }

    pub fn len(&self) -> usize {
        self.t_max - self.t_min + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.t_min <= frame && frame <= self.t_max
    }
}

/// Temporal center of a segment, rounding down.
pub fn key_frame(t_min: usize, t_max: usize) -> usize {
    (t_min + t_max) / 2
}

/// Splits a stream of per-frame motion models into viewpoint segments.
///
/// A segment closes on the frame where at least three corners have been
/// outbound, but never before it holds 5 frames and always at 1000 frames.
/// A trailing remainder shorter than 5 frames is merged into the previous
/// segment.
pub fn segment_stream(
    models: &[AffineMotion],
    width: usize,
    height: usize,
    overlap: f64,
) -> Result<Vec<Segment>, SegmentationError> {
    if models.is_empty() {
        return Err(SegmentationError::EmptyStream);
    }
    if !(overlap > 0.0 && overlap < 1.0) {
        return Err(SegmentationError::InvalidOverlap(overlap));
    }
    let mut segments = Vec::new();
    let mut tracker = CornerTracker::new(0, width, height);
    for (t, model) in models.iter().enumerate() {
        tracker = tracker.advance(model, width, overlap);
        let len = t - tracker.segment_start_frame + 1;
        let quorum = tracker.outbound_count() >= OUTBOUND_QUORUM;
        if (quorum && len >= MIN_SEGMENT_LEN) || len >= MAX_SEGMENT_LEN {
            segments.push(Segment::new(tracker.segment_start_frame, t));
            tracker = CornerTracker::new(t + 1, width, height);
        }
    }
    let last = models.len() - 1;
    if tracker.segment_start_frame <= last {
        let tail = Segment::new(tracker.segment_start_frame, last);
        match segments.last_mut() {
            Some(prev) if tail.len() < MIN_SEGMENT_LEN => *prev = Segment::new(prev.t_min, last),
            _ => segments.push(tail),
        }
    }
    Ok(segments)
}

/// Frames at which a new segment begins (every segment start except frame 0).
pub fn cut_frames(segments: &[Segment]) -> Vec<usize> {
    segments.iter().skip(1).map(|s| s.t_min).collect()
}

/// Index of the segment containing each frame.
pub fn frame_to_segment(segments: &[Segment]) -> Vec<usize> {
    let mut out = Vec::new();
    for (k, s) in segments.iter().enumerate() {
        out.extend(std::iter::repeat_n(k, s.len()));
    }
    out
}

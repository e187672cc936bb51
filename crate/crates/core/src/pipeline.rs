//! End-to-end orchestration: featurize videos, build training sets, train,
//! decode, cross-validate and sweep description spaces.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::VideoData;
use crate::descriptors::{
    aggregate_segment, align_track, cut_histogram, instant_motion_histogram,
    residual_motion_descriptor, smooth, smooth_and_decimate, DescriptorError, FrameDescriptors,
    SegmentDescriptors, SMOOTHING_WINDOW,
};
use crate::evaluation::{evaluate, leave_one_out, EvalError, EvalReport, LoocvReport};
use crate::fusion::{
    assemble, enumerate_spaces, fuse, mask_dimension, FusionError, Granularity, Part, SpaceMask,
};
use crate::hhmm::{
    flatten, train_hhmm, viterbi_decode, ActivityData, DecodedTimeline, HhmmConfig, HhmmModel,
    HmmError, REJECT_CLASS,
};
use crate::motion::{estimate_affine, residual_field, AffineMotion, MotionError};
use crate::segmentation::{cut_frames, segment_stream, Segment, SegmentationError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("video '{video}': {source}")]
    Motion { video: String, source: MotionError },
    #[error("video '{video}': {source}")]
    Segmentation {
        video: String,
        source: SegmentationError,
    },
    #[error("video '{video}': {source}")]
    Descriptor {
        video: String,
        source: DescriptorError,
    },
    #[error("video '{0}' has no key-frame images")]
    NoKeyFrames(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("model was trained for {trained}, asked to decode {requested}")]
    ModelMismatch { trained: String, requested: String },
}

/// Descriptors and ground truth of one video at both granularities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizedVideo {
    pub id: String,
    pub models: Vec<AffineMotion>,
    pub segments: Vec<Segment>,
    pub frames: Vec<FrameDescriptors>,
    pub segment_descriptors: Vec<SegmentDescriptors>,
    /// Segment index of every frame.
    pub frame_segment: Vec<usize>,
    pub frame_labels: Vec<String>,
    /// Majority frame label of every segment.
    pub segment_labels: Vec<String>,
}

impl FeaturizedVideo {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Frame descriptors with the color layout of their segment attached.
    pub fn frame_rows(&self) -> Vec<SegmentDescriptors> {
        self.frames
            .iter()
            .zip(&self.frame_segment)
            .map(|(f, &s)| SegmentDescriptors::from_frame(f, self.segment_descriptors[s].cld))
            .collect()
    }

    pub fn labels(&self, granularity: Granularity) -> &[String] {
        match granularity {
            Granularity::Frame => &self.frame_labels,
            Granularity::Segment => &self.segment_labels,
        }
    }

    /// Inclusive frame range of observation `index`.
    pub fn frame_span(&self, granularity: Granularity, index: usize) -> (usize, usize) {
        match granularity {
            Granularity::Frame => (index, index),
            Granularity::Segment => (self.segments[index].t_min, self.segments[index].t_max),
        }
    }
}

fn majority(labels: &[String]) -> String {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    // earliest label wins among equal counts
    let mut best: Option<(&str, usize)> = None;
    for l in labels {
        let c = counts[l.as_str()];
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, _)| l.to_string()).unwrap_or_default()
}

/// Runs motion estimation, segmentation and descriptor extraction.
pub fn featurize(video: &VideoData, overlap: f64) -> Result<FeaturizedVideo, PipelineError> {
    let rec = &video.record;
    let id = rec.id.clone();
    let (w, h) = (rec.width, rec.height);
    let models = video
        .fields
        .par_iter()
        .map(estimate_affine)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| PipelineError::Motion {
            video: id.clone(),
            source,
        })?;
    let segments =
        segment_stream(&models, w, h, overlap).map_err(|source| PipelineError::Segmentation {
            video: id.clone(),
            source,
        })?;
    let cuts = cut_frames(&segments);
    let n = video.fields.len();
    let audio = align_track(&video.audio, n);
    let location = align_track(&video.location, n);

    let frames: Vec<FrameDescriptors> = (0..n)
        .into_par_iter()
        .map(|t| {
            let field = &video.fields[t];
            let (h_tpe_x, h_tpe_y) = instant_motion_histogram(&models[t], w, h);
            let residuals = residual_field(field, &models[t]);
            FrameDescriptors {
                h_tpe_x,
                h_tpe_y,
                h_c: cut_histogram(&cuts, t),
                rm: residual_motion_descriptor(&residuals, &field.block_centers, w, h),
                audio: audio[t],
                location: location[t],
            }
        })
        .collect();

    let mut segment_descriptors = Vec::with_capacity(segments.len());
    for s in &segments {
        let image = video
            .nearest_keyframe(s.key_frame)
            .ok_or_else(|| PipelineError::NoKeyFrames(id.clone()))?;
        let d = aggregate_segment(&frames[s.t_min..=s.t_max], image).map_err(|source| {
            PipelineError::Descriptor {
                video: id.clone(),
                source,
            }
        })?;
        segment_descriptors.push(d);
    }

    let frame_labels = video.truth.frame_labels(n);
    let segment_labels = segments
        .iter()
        .map(|s| majority(&frame_labels[s.t_min..=s.t_max]))
        .collect();
    Ok(FeaturizedVideo {
        id,
        frame_segment: crate::segmentation::frame_to_segment(&segments),
        models,
        segments,
        frames,
        segment_descriptors,
        frame_labels,
        segment_labels,
    })
}

/// Fused observations of one video at the requested granularity.
pub fn observations(
    video: &FeaturizedVideo,
    mask: SpaceMask,
    granularity: Granularity,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    let seq = match granularity {
        Granularity::Frame => assemble(mask, granularity, &video.frames, &video.id)?,
        Granularity::Segment => assemble(mask, granularity, &video.segment_descriptors, &video.id)?,
    };
    Ok(seq.vectors)
}

/// Activity names in a stable order: sorted, reject class last.
pub fn activity_order<'a>(labels: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    let mut names: Vec<String> = labels.into_iter().cloned().collect();
    names.sort();
    names.dedup();
    if let Some(i) = names.iter().position(|n| n == REJECT_CLASS) {
        let none = names.remove(i);
        names.push(none);
    }
    names
}

/// Per-activity training sequences. Frames are fused (color layout taken
/// from the enclosing segment), split into maximal runs of one label, and
/// each run is smoothed and decimated into phase-shifted sequences. Runs
/// shorter than the smoothing window are smoothed and kept whole.
pub fn training_data(
    videos: &[&FeaturizedVideo],
    mask: SpaceMask,
    granularity: Granularity,
) -> Result<Vec<ActivityData>, PipelineError> {
    mask_dimension(mask, granularity)?;
    let names = activity_order(videos.iter().flat_map(|v| v.frame_labels.iter()));
    let mut per_activity: Vec<Vec<Vec<Vec<f64>>>> = vec![Vec::new(); names.len()];
    for v in videos {
        let rows = v.frame_rows();
        let fused = rows
            .iter()
            .map(|r| fuse(mask, r))
            .collect::<Result<Vec<_>, _>>()?;
        let mut start = 0;
        while start < fused.len() {
            let label = &v.frame_labels[start];
            let mut end = start;
            while end + 1 < fused.len() && v.frame_labels[end + 1] == *label {
                end += 1;
            }
            let run = &fused[start..=end];
            let a = names
                .iter()
                .position(|n| n == label)
                .expect("label collected above");
            if run.len() >= SMOOTHING_WINDOW {
                let seqs =
                    smooth_and_decimate(run).map_err(|source| PipelineError::Descriptor {
                        video: v.id.clone(),
                        source,
                    })?;
                per_activity[a].extend(seqs.into_iter().filter(|s| !s.is_empty()));
            } else {
                per_activity[a].push(smooth(run));
            }
            start = end + 1;
        }
    }
    Ok(names
        .into_iter()
        .zip(per_activity)
        .map(|(name, sequences)| ActivityData { name, sequences })
        .collect())
}

pub fn train(
    videos: &[&FeaturizedVideo],
    mask: SpaceMask,
    granularity: Granularity,
    config: &HhmmConfig,
) -> Result<HhmmModel, PipelineError> {
    let data = training_data(videos, mask, granularity)?;
    Ok(train_hhmm(&data, config)?)
}

/// Decodes one video; intervals are in observation indices.
pub fn decode(
    model: &HhmmModel,
    video: &FeaturizedVideo,
    mask: SpaceMask,
    granularity: Granularity,
    beam: f64,
) -> Result<DecodedTimeline, PipelineError> {
    let network = flatten(model)?;
    let obs = observations(video, mask, granularity)?;
    Ok(viterbi_decode(&network, &obs, beam)?)
}

/// `start,end,activity,log_score` with inclusive frame indices.
pub fn timeline_csv(
    timeline: &DecodedTimeline,
    video: &FeaturizedVideo,
    granularity: Granularity,
) -> String {
    let mut out = String::from("start,end,activity,log_score\n");
    for iv in &timeline.intervals {
        let (start, _) = video.frame_span(granularity, iv.start);
        let (_, end) = video.frame_span(granularity, iv.end);
        let _ = writeln!(out, "{start},{end},{},{}", iv.activity, iv.log_score);
    }
    out
}

/// Model, decode and evaluation settings of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mask: SpaceMask,
    pub granularity: Granularity,
    pub hhmm: HhmmConfig,
    pub beam: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mask: SpaceMask::FULL,
            granularity: Granularity::Segment,
            hhmm: HhmmConfig::default(),
            beam: 200.0,
        }
    }
}

/// Trains on `train_videos`, decodes `test` and scores it at the decoding
/// granularity against every activity seen anywhere in the corpus.
pub fn run_fold(
    train_videos: &[&FeaturizedVideo],
    test: &FeaturizedVideo,
    activities: &[String],
    config: &ExperimentConfig,
) -> Result<(DecodedTimeline, EvalReport), PipelineError> {
    let model = train(train_videos, config.mask, config.granularity, &config.hhmm)?;
    let timeline = decode(&model, test, config.mask, config.granularity, config.beam)?;
    let report = evaluate(
        &test.id,
        &timeline.labels(),
        test.labels(config.granularity),
        activities,
    )?;
    Ok((timeline, report))
}

pub fn corpus_activities(videos: &[FeaturizedVideo]) -> Vec<String> {
    activity_order(videos.iter().flat_map(|v| v.frame_labels.iter()))
}

/// Leave-one-video-out cross-validation.
pub fn loocv(
    videos: &[FeaturizedVideo],
    config: &ExperimentConfig,
) -> Result<LoocvReport, PipelineError> {
    mask_dimension(config.mask, config.granularity)?;
    let activities = corpus_activities(videos);
    let report = leave_one_out(videos, |train_videos, test| {
        run_fold(&train_videos, test, &activities, config)
            .map(|(_, r)| r)
            .map_err(|e| EvalError::Fold {
                fold: test.id.clone(),
                message: e.to_string(),
            })
    })?;
    Ok(report)
}

/// Bottom-level topology of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    pub states: usize,
    pub states_none: usize,
    pub mixtures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mask: SpaceMask,
    pub topology: Topology,
    /// `None` when the space is undefined at this granularity.
    pub median_accuracy: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

/// Cross-validates every (description space, topology) cell. Cells are
/// independent and run in parallel; rows come back ranked by decreasing
/// median accuracy, then mean accuracy, then enumeration order. Spaces that
/// need the color layout at frame granularity are kept as unscored rows.
pub fn sweep(
    videos: &[FeaturizedVideo],
    topologies: &[Topology],
    base: &ExperimentConfig,
) -> Result<Vec<SweepRow>, PipelineError> {
    let cells: Vec<(SpaceMask, Topology)> = topologies
        .iter()
        .flat_map(|&t| enumerate_spaces().into_iter().map(move |m| (m, t)))
        .collect();
    let mut rows = cells
        .par_iter()
        .map(|&(mask, topology)| {
            if base.granularity == Granularity::Frame && mask.contains(Part::Cld) {
                return Ok(SweepRow {
                    mask,
                    topology,
                    median_accuracy: None,
                    mean_accuracy: None,
                });
            }
            let config = ExperimentConfig {
                mask,
                hhmm: HhmmConfig {
                    states: topology.states,
                    states_none: topology.states_none,
                    mixtures: topology.mixtures,
                    ..base.hhmm.clone()
                },
                ..base.clone()
            };
            let report = loocv(videos, &config)?;
            Ok(SweepRow {
                mask,
                topology,
                median_accuracy: Some(report.median_accuracy),
                mean_accuracy: Some(report.mean_accuracy()),
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let key = |r: &SweepRow| {
        (
            r.median_accuracy.unwrap_or(-1.0),
            r.mean_accuracy.unwrap_or(-1.0),
        )
    };
    // stable sort keeps enumeration order among ties
    rows.sort_by(|a, b| {
        let (am, aa) = key(a);
        let (bm, ba) = key(b);
        bm.total_cmp(&am).then(ba.total_cmp(&aa))
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow], granularity: Granularity) -> String {
    let mut out =
        String::from("rank,mask,granularity,m,m_none,gaussians,median_accuracy,mean_accuracy\n");
    let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| x.to_string());
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{granularity},{},{},{},{},{}",
            i + 1,
            r.mask,
            r.topology.states,
            r.topology.states_none,
            r.topology.mixtures,
            cell(r.median_accuracy),
            cell(r.mean_accuracy)
        );
    }
    out
}

/// The 60-column dump of one video at frame or segment granularity, with a
/// leading `start,end` frame span.
pub fn descriptor_dump(video: &FeaturizedVideo, granularity: Granularity) -> String {
    let mut out = String::from("start,end,");
    out.push_str(&crate::descriptors::dump_columns().join(","));
    out.push('\n');
    let rows: Vec<Vec<f64>> = match granularity {
        Granularity::Frame => video
            .frame_rows()
            .iter()
            .map(SegmentDescriptors::to_row)
            .collect(),
        Granularity::Segment => video
            .segment_descriptors
            .iter()
            .map(SegmentDescriptors::to_row)
            .collect(),
    };
    for (i, row) in rows.iter().enumerate() {
        let (s, e) = video.frame_span(granularity, i);
        let _ = write!(out, "{s},{e}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn segments_csv(video: &FeaturizedVideo) -> String {
    let mut out = String::from("segment_id,t_min,t_max,key_frame\n");
    for (i, s) in video.segments.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{}", s.t_min, s.t_max, s.key_frame);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_profiles, generate_video, SynthSpec};
    use std::path::Path;

    fn video(seed: u64, index: usize, spread: f64) -> FeaturizedVideo {
        let spec = SynthSpec {
            activities: 3,
            frames: 600,
            spread,
            ..SynthSpec::default()
        };
        let profiles = build_profiles(seed, &spec).unwrap();
        let v = generate_video(seed, &spec, &profiles, index, Path::new("v")).unwrap();
        featurize(&v, 0.5).unwrap()
    }

    #[test]
    fn majority_prefers_earliest_on_tie() {
        let l = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(majority(&l(&["a", "b", "b", "a"])), "a");
        assert_eq!(majority(&l(&["a", "b", "b"])), "b");
    }

    #[test]
    fn featurized_shapes() {
        let v = video(2, 0, 1.0);
        assert_eq!(v.frames.len(), 600);
        assert_eq!(v.frame_segment.len(), 600);
        assert_eq!(v.segment_descriptors.len(), v.segments.len());
        assert_eq!(v.segment_labels.len(), v.segments.len());
        let dump = descriptor_dump(&v, Granularity::Frame);
        assert_eq!(dump.lines().count(), 601);
        assert_eq!(dump.lines().next().unwrap().split(',').count(), 62);
    }

    #[test]
    fn training_data_splits_by_label() {
        let v = video(2, 0, 1.0);
        let data = training_data(&[&v], "audio+loc".parse().unwrap(), Granularity::Frame).unwrap();
        assert_eq!(data.last().unwrap().name, "None");
        for a in &data {
            assert!(!a.sequences.is_empty());
            assert!(a.sequences.iter().all(|s| s.iter().all(|o| o.len() == 14)));
        }
        assert!(training_data(&[&v], SpaceMask::FULL, Granularity::Frame).is_err());
    }

    #[test]
    fn zero_spread_decodes_exactly() {
        let videos: Vec<FeaturizedVideo> = (0..3).map(|i| video(5, i, 0.0)).collect();
        let config = ExperimentConfig {
            mask: "audio+loc".parse().unwrap(),
            granularity: Granularity::Frame,
            ..Default::default()
        };
        let report = loocv(&videos, &config).unwrap();
        assert_eq!(report.folds.len(), 3);
        for f in &report.folds {
            assert_eq!(f.global_accuracy, 1.0, "fold {}", f.fold);
        }
    }
}

//! Deterministic synthetic corpora with scripted activity schedules.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_video, CorpusError, GroundTruth, LabelInterval, VideoData, VideoRecord};
use crate::descriptors::{KeyFrameImage, RM_GRID, TRACK_LEN};
use crate::hhmm::REJECT_CLASS;
use crate::motion::{estimate_affine, AffineMotion, MotionVectorField};
use crate::segmentation::{segment_stream, DEFAULT_OVERLAP};

const ADL_NAMES: [&str; 11] = [
    "Coffee",
    "Dishes",
    "Sweeping",
    "Reading",
    "Phone",
    "Plants",
    "Cooking",
    "Laundry",
    "Television",
    "Brushing",
    "Dressing",
];

/// Translation magnitudes (pixels/frame) an activity can be assigned.
const TRANSLATION_LEVELS: [f64; 6] = [1.2, 2.0, 2.8, 4.5, 6.5, 9.0];

// noise scales at spread 1
const TRANSLATION_NOISE: f64 = 0.3;
const BLOCK_NOISE: f64 = 0.25;
const TRACK_NOISE: f64 = 0.08;
const PIXEL_NOISE: f64 = 10.0;

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Number of activities including the reject class.
    pub activities: usize,
    pub videos: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub block_size: usize,
    pub fps: f64,
    /// Multiplier on every noise source; 0 makes each activity emit exactly
    /// its profile.
    pub spread: f64,
    /// Contrast between activity means of the audio, location and color
    /// profiles; 1 draws them uniformly over their full range.
    pub separation: f64,
    /// Probability that a block carries an unrelated displacement.
    pub outlier_fraction: f64,
    pub min_episode: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            activities: 8,
            videos: 5,
            frames: 3000,
            width: 128,
            height: 96,
            block_size: 16,
            fps: 25.0,
            spread: 1.0,
            separation: 1.0,
            outlier_fraction: 0.05,
            min_episode: 30,
        }
    }
}

impl SynthSpec {
    fn episodes(&self) -> usize {
        2 * (self.activities - 1) + 1
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        if self.activities < 2 {
            return bad(format!(
                "need at least 2 activities including {REJECT_CLASS}, got {}",
                self.activities
            ));
        }
        if self.videos == 0 {
            return bad("video count must be positive".into());
        }
        if self.block_size == 0
            || self.width / self.block_size < 2
            || self.height / self.block_size < 2
        {
            return bad("frame must hold at least 2x2 blocks".into());
        }
        if self.min_episode == 0 || self.frames < self.min_episode * self.episodes() {
            return bad(format!(
                "{} frames cannot hold {} episodes of at least {} frames",
                self.frames,
                self.episodes(),
                self.min_episode
            ));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive".into());
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return bad("spread must be non-negative".into());
        }
        if !(self.separation >= 0.0 && self.separation <= 1.0) {
            return bad("separation must lie in [0, 1]".into());
        }
        if !(0.0..0.5).contains(&self.outlier_fraction) {
            return bad("outlier fraction must lie in [0, 0.5)".into());
        }
        Ok(())
    }
}

/// What one activity looks like to every sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub name: String,
    /// Mean camera translation `(tx, ty)` per frame.
    pub translation: [f64; 2],
    /// Linear affine terms `(a2, a3, a5, a6)`.
    pub linear: [f64; 4],
    /// Residual-grid cells holding an independently moving object.
    pub object_cells: Vec<usize>,
    pub object_motion: [f64; 2],
    pub audio: [f64; TRACK_LEN],
    pub location: [f64; TRACK_LEN],
    /// Colors of a 4x4 grid over the image, row-major.
    pub palette: Vec<[u8; 3]>,
}

/// Activity names for `n` classes; the reject class comes last.
pub fn activity_names(n: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..n.saturating_sub(1))
        .map(|i| match ADL_NAMES.get(i) {
            Some(s) => s.to_string(),
            None => format!("Activity{}", i + 1),
        })
        .collect();
    names.push(REJECT_CLASS.to_string());
    names
}

fn centered(rng: &mut ChaCha8Rng, separation: f64) -> f64 {
    0.5 + separation * (rng.random::<f64>() - 0.5)
}

/// Draws one profile per activity from stream 0 of the seed.
pub fn build_profiles(seed: u64, spec: &SynthSpec) -> Result<Vec<ActivityProfile>, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = TRANSLATION_LEVELS.len();
    let mut combos: Vec<(usize, usize)> = (0..levels * levels)
        .map(|c| (c / levels, c % levels))
        .collect();
    combos.shuffle(&mut rng);
    let cells = RM_GRID * RM_GRID;
    let profiles = activity_names(spec.activities)
        .into_iter()
        .enumerate()
        .map(|(a, name)| {
            let (ix, iy) = combos[a % combos.len()];
            let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
            let translation = [
                sign(&mut rng) * TRANSLATION_LEVELS[ix],
                sign(&mut rng) * TRANSLATION_LEVELS[iy],
            ];
            let linear = std::array::from_fn(|_| rng.random_range(-0.005..0.005));
            let mut all_cells: Vec<usize> = (0..cells).collect();
            all_cells.shuffle(&mut rng);
            let mut object_cells = all_cells[..2].to_vec();
            object_cells.sort_unstable();
            let magnitude = rng.random_range(2.0..8.0);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let object_motion = [magnitude * angle.cos(), magnitude * angle.sin()];
            let audio = std::array::from_fn(|_| centered(&mut rng, spec.separation));
            let location = std::array::from_fn(|_| centered(&mut rng, spec.separation));
            let palette = (0..cells)
                .map(|_| {
                    std::array::from_fn(|_| {
                        (255.0 * centered(&mut rng, spec.separation)).round() as u8
                    })
                })
                .collect();
            ActivityProfile {
                name,
                translation,
                linear,
                object_cells,
                object_motion,
                audio,
                location,
                palette,
            }
        })
        .collect();
    Ok(profiles)
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        sigma * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Episode schedule: the reject class alternates with every other activity
/// in shuffled order, starting and ending with the reject class.
fn schedule(rng: &mut ChaCha8Rng, spec: &SynthSpec, names: &[String]) -> Vec<LabelInterval> {
    let reject = names.len() - 1;
    let mut adls: Vec<usize> = (0..reject).collect();
    adls.shuffle(rng);
    let mut order = vec![reject];
    for a in adls {
        order.push(a);
        order.push(reject);
    }
    let weights: Vec<f64> = order
        .iter()
        .map(|&a| {
            if a == reject {
                rng.random_range(0.5..1.5)
            } else {
                rng.random_range(2.0..4.0)
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let spare = (spec.frames - spec.min_episode * order.len()) as f64;
    let mut lengths: Vec<usize> = weights
        .iter()
        .map(|w| spec.min_episode + (spare * w / total).floor() as usize)
        .collect();
    let assigned: usize = lengths.iter().sum();
    let longest = (0..lengths.len())
        .max_by_key(|&i| (lengths[i], usize::MAX - i))
        .unwrap_or(0);
    lengths[longest] += spec.frames - assigned;

    let mut start = 0;
    order
        .iter()
        .zip(lengths)
        .map(|(&a, len)| {
            let iv = LabelInterval {
                start,
                end: start + len - 1,
                activity: names[a].clone(),
            };
            start += len;
            iv
        })
        .collect()
}

fn render(rng: &mut ChaCha8Rng, profile: &ActivityProfile, spec: &SynthSpec) -> KeyFrameImage {
    let (w, h) = (spec.width, spec.height);
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let cell = (y * RM_GRID / h) * RM_GRID + x * RM_GRID / w;
            let base = profile.palette[cell];
            pixels.push(std::array::from_fn(|c| {
                (base[c] as f64 + normal(rng, PIXEL_NOISE * spec.spread))
                    .round()
                    .clamp(0.0, 255.0) as u8
            }));
        }
    }
    KeyFrameImage::new(w, h, pixels).expect("dimensions match")
}

/// Generates one video in memory. Video `index` draws from its own RNG
/// stream, so videos are independent of generation order.
pub fn generate_video(
    seed: u64,
    spec: &SynthSpec,
    profiles: &[ActivityProfile],
    index: usize,
    dir: &Path,
) -> Result<VideoData, CorpusError> {
    spec.validate()?;
    if profiles.len() != spec.activities {
        return Err(CorpusError::InvalidSpec(format!(
            "{} profiles for {} activities",
            profiles.len(),
            spec.activities
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let names: Vec<String> = profiles.iter().map(|p| p.name.clone()).collect();
    let intervals = schedule(&mut rng, spec, &names);
    let mut frame_activity = Vec::with_capacity(spec.frames);
    for (k, iv) in intervals.iter().enumerate() {
        let a = names.iter().position(|n| *n == iv.activity).unwrap_or(k);
        frame_activity.extend(std::iter::repeat_n(a, iv.end - iv.start + 1));
    }

    let bs = spec.block_size;
    let centers: Vec<(f64, f64)> = (0..spec.height / bs)
        .flat_map(|by| {
            (0..spec.width / bs)
                .map(move |bx| ((bx * bs + bs / 2) as f64, (by * bs + bs / 2) as f64))
        })
        .collect();
    let center_cells: Vec<usize> = centers
        .iter()
        .map(|&(x, y)| {
            let col = (x as usize * RM_GRID / spec.width).min(RM_GRID - 1);
            let row = (y as usize * RM_GRID / spec.height).min(RM_GRID - 1);
            row * RM_GRID + col
        })
        .collect();
    let outlier_range = spec.width as f64 / 8.0;
    let track_noise = TRACK_NOISE * spec.spread;

    let mut fields = Vec::with_capacity(spec.frames);
    let mut audio = Vec::with_capacity(spec.frames);
    let mut location = Vec::with_capacity(spec.frames);
    for (t, &a) in frame_activity.iter().enumerate() {
        let p = &profiles[a];
        let tx = p.translation[0] + normal(&mut rng, TRANSLATION_NOISE * spec.spread);
        let ty = p.translation[1] + normal(&mut rng, TRANSLATION_NOISE * spec.spread);
        let [a2, a3, a5, a6] = p.linear;
        let model = AffineMotion::new([tx, a2, a3, ty, a5, a6]);
        let displacements = centers
            .iter()
            .zip(&center_cells)
            .map(|(&(x, y), cell)| {
                let (mut dx, mut dy) = model.predict(x, y);
                dx += normal(&mut rng, BLOCK_NOISE * spec.spread);
                dy += normal(&mut rng, BLOCK_NOISE * spec.spread);
                if p.object_cells.contains(cell) {
                    dx += p.object_motion[0];
                    dy += p.object_motion[1];
                }
                if spec.spread > 0.0 && rng.random::<f64>() < spec.outlier_fraction {
                    dx = rng.random_range(-outlier_range..outlier_range);
                    dy = rng.random_range(-outlier_range..outlier_range);
                }
                (round4(dx), round4(dy))
            })
            .collect();
        fields.push(
            MotionVectorField::new(t, centers.clone(), displacements, spec.width, spec.height)
                .map_err(|e| CorpusError::InvalidSpec(e.to_string()))?,
        );
        let mut track = |mean: &[f64; TRACK_LEN]| -> [f64; TRACK_LEN] {
            std::array::from_fn(|i| {
                round4((mean[i] + normal(&mut rng, track_noise)).clamp(0.0, 1.0))
            })
        };
        audio.push((t, track(&p.audio)));
        location.push((t, track(&p.location)));
    }

    // key frames follow the segmentation the pipeline will recompute
    let models = fields
        .iter()
        .map(estimate_affine)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;
    let segments = segment_stream(&models, spec.width, spec.height, DEFAULT_OVERLAP)
        .map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;
    let mut keyframes = BTreeMap::new();
    for s in &segments {
        let img = render(&mut rng, &profiles[frame_activity[s.key_frame]], spec);
        keyframes.insert(s.key_frame, img);
    }

    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(VideoData {
        record: VideoRecord {
            id,
            width: spec.width,
            height: spec.height,
            fps: spec.fps,
            frame_count: spec.frames,
            dir: dir.to_path_buf(),
        },
        fields,
        audio,
        location,
        truth: GroundTruth { intervals },
        keyframes,
    })
}

/// Generates and writes a corpus with explicit activity profiles.
pub fn generate_synthetic_with(
    root: &Path,
    seed: u64,
    spec: &SynthSpec,
    profiles: &[ActivityProfile],
) -> Result<Vec<VideoRecord>, CorpusError> {
    spec.validate()?;
    (0..spec.videos)
        .into_par_iter()
        .map(|i| {
            let dir = root.join(format!("video_{i:02}"));
            let video = generate_video(seed, spec, profiles, i, &dir)?;
            write_video(&video)?;
            Ok(video.record)
        })
        .collect()
}

/// Generates and writes a corpus under `root`, one directory per video.
pub fn generate_synthetic(
    root: &Path,
    seed: u64,
    spec: &SynthSpec,
) -> Result<Vec<VideoRecord>, CorpusError> {
    let profiles = build_profiles(seed, spec)?;
    generate_synthetic_with(root, seed, spec, &profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, read_video};

    fn small() -> SynthSpec {
        SynthSpec {
            activities: 3,
            videos: 2,
            frames: 400,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            SynthSpec {
                activities: 1,
                ..small()
            },
            SynthSpec {
                frames: 100,
                ..small()
            },
            SynthSpec {
                spread: -1.0,
                ..small()
            },
            SynthSpec {
                outlier_fraction: 0.6,
                ..small()
            },
            SynthSpec {
                width: 16,
                ..small()
            },
        ];
        for spec in bad {
            assert!(
                matches!(spec.validate(), Err(CorpusError::InvalidSpec(_))),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn schedule_covers_every_frame() {
        let spec = small();
        let profiles = build_profiles(1, &spec).unwrap();
        let v = generate_video(1, &spec, &profiles, 0, Path::new("v")).unwrap();
        let ivs = &v.truth.intervals;
        assert_eq!(ivs.first().unwrap().start, 0);
        assert_eq!(ivs.last().unwrap().end, spec.frames - 1);
        for w in ivs.windows(2) {
            assert_eq!(w[1].start, w[0].end + 1);
        }
        assert!(ivs
            .iter()
            .all(|iv| iv.end - iv.start + 1 >= spec.min_episode));
        assert_eq!(v.truth.activities().len(), spec.activities);
        assert_eq!(v.fields.len(), spec.frames);
        assert!(!v.keyframes.is_empty());
    }

    #[test]
    fn generate_load_write_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = small();
        generate_synthetic(a.path(), 9, &spec).unwrap();
        generate_synthetic(b.path(), 9, &spec).unwrap();
        assert_eq!(load_corpus(a.path()).unwrap().len(), 2);
        for id in ["video_00", "video_01"] {
            let dir = a.path().join(id);
            let mut video = read_video(&dir).unwrap();
            let copy = tempfile::tempdir().unwrap();
            video.record.dir = copy.path().join(id);
            write_video(&video).unwrap();
            for f in [
                "meta.csv",
                "motion.csv",
                "audio.csv",
                "loc.csv",
                "labels.csv",
            ] {
                let orig = std::fs::read(dir.join(f)).unwrap();
                assert_eq!(
                    orig,
                    std::fs::read(copy.path().join(id).join(f)).unwrap(),
                    "{f}"
                );
                assert_eq!(
                    orig,
                    std::fs::read(b.path().join(id).join(f)).unwrap(),
                    "{f}"
                );
            }
            for frame in video.keyframes.keys() {
                let name = format!("keyframes/{frame:06}.ppm");
                assert_eq!(
                    std::fs::read(dir.join(&name)).unwrap(),
                    std::fs::read(copy.path().join(id).join(&name)).unwrap()
                );
            }
        }
    }

    #[test]
    fn zero_spread_emits_profile_means() {
        let spec = SynthSpec {
            spread: 0.0,
            ..small()
        };
        let profiles = build_profiles(4, &spec).unwrap();
        let v = generate_video(4, &spec, &profiles, 1, Path::new("v")).unwrap();
        let labels = v.truth.frame_labels(spec.frames);
        for (t, row) in &v.audio {
            let p = profiles.iter().find(|p| p.name == labels[*t]).unwrap();
            let expected: Vec<f64> = p.audio.iter().map(|x| round4(*x)).collect();
            assert_eq!(row.to_vec(), expected);
        }
    }
}

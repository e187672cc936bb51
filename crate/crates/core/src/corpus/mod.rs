//! On-disk video corpus and a deterministic synthetic generator.
//!
//! Each video lives in its own directory:
//!
//! ```text
//! <root>/<id>/meta.csv        width,height,fps,frame_count
//! <root>/<id>/motion.csv      frame,cx,cy,dx,dy      (one row per block)
//! <root>/<id>/audio.csv       frame,p1..p7           (forward-filled)
//! <root>/<id>/loc.csv         frame,l1..l7           (forward-filled)
//! <root>/<id>/labels.csv      start,end,activity     (inclusive frames)
//! <root>/<id>/keyframes/NNNNNN.ppm
//! ```

pub mod ppm;
mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{KeyFrameImage, TRACK_LEN};
use crate::hhmm::REJECT_CLASS;
use crate::motion::MotionVectorField;

pub use synth::{
    activity_names, build_profiles, generate_synthetic, generate_synthetic_with, generate_video,
    ActivityProfile, SynthSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: u64,
        message: String,
    },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Multiple(Vec<CorpusError>),
}

impl CorpusError {
    fn parse(file: &Path, line: u64, message: impl Into<String>) -> Self {
        CorpusError::Parse {
            file: file.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl ToString) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    fn collect(mut errors: Vec<CorpusError>) -> Option<CorpusError> {
        match errors.len() {
            0 => None,
            1 => errors.pop(),
            _ => Some(CorpusError::Multiple(errors)),
        }
    }
}

/// Metadata and file locations of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frame_count: usize,
    pub dir: PathBuf,
}

impl VideoRecord {
    pub fn meta_path(&self) -> PathBuf {
        self.dir.join("meta.csv")
    }
    pub fn motion_path(&self) -> PathBuf {
        self.dir.join("motion.csv")
    }
    pub fn audio_path(&self) -> PathBuf {
        self.dir.join("audio.csv")
    }
    pub fn location_path(&self) -> PathBuf {
        self.dir.join("loc.csv")
    }
    pub fn labels_path(&self) -> PathBuf {
        self.dir.join("labels.csv")
    }
    pub fn keyframe_dir(&self) -> PathBuf {
        self.dir.join("keyframes")
    }
    pub fn keyframe_path(&self, frame: usize) -> PathBuf {
        self.keyframe_dir().join(format!("{frame:06}.ppm"))
    }
}

/// Labeled frame interval, both ends inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub start: usize,
    pub end: usize,
    pub activity: String,
}

/// Sorted, non-overlapping ground-truth intervals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub intervals: Vec<LabelInterval>,
}

impl GroundTruth {
    /// Sorts intervals by start and rejects overlaps, naming the offending pair.
    pub fn new(mut intervals: Vec<LabelInterval>) -> Result<Self, String> {
        intervals.sort_by_key(|iv| (iv.start, iv.end));
        for iv in &intervals {
            if iv.end < iv.start {
                return Err(format!(
                    "interval {}-{} ends before it starts",
                    iv.start, iv.end
                ));
            }
        }
        for w in intervals.windows(2) {
            if w[1].start <= w[0].end {
                return Err(format!(
                    "intervals {}-{} '{}' and {}-{} '{}' overlap",
                    w[0].start, w[0].end, w[0].activity, w[1].start, w[1].end, w[1].activity
                ));
            }
        }
        Ok(Self { intervals })
    }

    /// Label of every frame; frames outside all intervals get the reject class.
    pub fn frame_labels(&self, frame_count: usize) -> Vec<String> {
        let mut labels = vec![REJECT_CLASS.to_string(); frame_count];
        for iv in &self.intervals {
            for l in labels.iter_mut().take(iv.end + 1).skip(iv.start) {
                l.clone_from(&iv.activity);
            }
        }
        labels
    }

    /// Distinct activity names in first-appearance order.
    pub fn activities(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for iv in &self.intervals {
            if !out.contains(&iv.activity) {
                out.push(iv.activity.clone());
            }
        }
        out
    }
}

/// Fully parsed contents of one video directory.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoData {
    pub record: VideoRecord,
    /// One field per frame, in frame order.
    pub fields: Vec<MotionVectorField>,
    pub audio: Vec<(usize, [f64; TRACK_LEN])>,
    pub location: Vec<(usize, [f64; TRACK_LEN])>,
    pub truth: GroundTruth,
    pub keyframes: BTreeMap<usize, KeyFrameImage>,
}

impl VideoData {
    /// The stored image nearest to `frame` (lower frame on ties).
    pub fn nearest_keyframe(&self, frame: usize) -> Option<&KeyFrameImage> {
        let after = self.keyframes.range(frame..).next();
        let before = self.keyframes.range(..frame).next_back();
        match (before, after) {
            (Some((b, bi)), Some((a, ai))) => Some(if frame - b <= a - frame { bi } else { ai }),
            (Some((_, i)), None) | (None, Some((_, i))) => Some(i),
            (None, None) => None,
        }
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CorpusError::io(path, e))
}

fn check_header(
    rdr: &mut csv::Reader<fs::File>,
    path: &Path,
    expected: &[String],
) -> Result<(), CorpusError> {
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::parse(path, 1, e.to_string()))?;
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CorpusError::parse(
            path,
            1,
            format!("expected header '{}'", expected.join(",")),
        ));
    }
    Ok(())
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Reads every record of a CSV file, converting each with `row`.
fn read_rows<T>(
    path: &Path,
    header: &[String],
    mut row: impl FnMut(&csv::StringRecord) -> Result<T, String>,
) -> Result<Vec<T>, CorpusError> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, path, header)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CorpusError::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(row(&rec).map_err(|m| CorpusError::parse(path, line, m))?);
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, String> {
    let raw = rec
        .get(i)
        .ok_or_else(|| format!("missing column '{name}'"))?;
    raw.parse()
        .map_err(|_| format!("cannot parse {name} '{raw}'"))
}

fn finite(rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64, String> {
    let v: f64 = field(rec, i, name)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite {name}"))
    }
}

fn track_header(prefix: &str) -> Vec<String> {
    std::iter::once("frame".to_string())
        .chain((1..=TRACK_LEN).map(|i| format!("{prefix}{i}")))
        .collect()
}

fn read_meta(dir: &Path) -> Result<VideoRecord, CorpusError> {
    let path = dir.join("meta.csv");
    let header = strings(&["width", "height", "fps", "frame_count"]);
    let rows = read_rows(&path, &header, |r| {
        let width: usize = field(r, 0, "width")?;
        let height: usize = field(r, 1, "height")?;
        let fps = finite(r, 2, "fps")?;
        let frame_count: usize = field(r, 3, "frame_count")?;
        if width == 0 || height == 0 || frame_count == 0 || fps <= 0.0 {
            return Err("width, height, fps and frame_count must be positive".into());
        }
        Ok((width, height, fps, frame_count))
    })?;
    let [(width, height, fps, frame_count)] = rows[..] else {
        return Err(CorpusError::parse(
            &path,
            2,
            "expected exactly one data row",
        ));
    };
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(VideoRecord {
        id,
        width,
        height,
        fps,
        frame_count,
        dir: dir.to_path_buf(),
    })
}

fn read_motion(rec: &VideoRecord) -> Result<Vec<MotionVectorField>, CorpusError> {
    let path = rec.motion_path();
    let header = strings(&["frame", "cx", "cy", "dx", "dy"]);
    type Blocks = (Vec<(f64, f64)>, Vec<(f64, f64)>);
    let mut per_frame: Vec<Blocks> = vec![(Vec::new(), Vec::new()); rec.frame_count];
    read_rows(&path, &header, |r| {
        let frame: usize = field(r, 0, "frame")?;
        if frame >= rec.frame_count {
            return Err(format!(
                "frame {frame} beyond frame_count {}",
                rec.frame_count
            ));
        }
        let (x, y) = (finite(r, 1, "x")?, finite(r, 2, "y")?);
        let (dx, dy) = (finite(r, 3, "dx")?, finite(r, 4, "dy")?);
        per_frame[frame].0.push((x, y));
        per_frame[frame].1.push((dx, dy));
        Ok(())
    })?;
    per_frame
        .into_iter()
        .enumerate()
        .map(|(t, (centers, disp))| {
            MotionVectorField::new(t, centers, disp, rec.width, rec.height)
                .map_err(|e| CorpusError::parse(&path, 0, e.to_string()))
        })
        .collect()
}

fn read_track(
    path: &Path,
    prefix: &str,
    frames: usize,
) -> Result<Vec<(usize, [f64; TRACK_LEN])>, CorpusError> {
    let mut last: Option<usize> = None;
    read_rows(path, &track_header(prefix), |r| {
        let frame: usize = field(r, 0, "frame")?;
        if frame >= frames {
            return Err(format!("frame {frame} beyond frame_count {frames}"));
        }
        if last.is_some_and(|l| frame <= l) {
            return Err(format!("frame {frame} out of order"));
        }
        last = Some(frame);
        let mut v = [0.0; TRACK_LEN];
        for (i, x) in v.iter_mut().enumerate() {
            *x = finite(r, i + 1, &format!("{prefix}{}", i + 1))?;
        }
        Ok((frame, v))
    })
}

fn read_labels(rec: &VideoRecord) -> Result<GroundTruth, CorpusError> {
    let path = rec.labels_path();
    let header = strings(&["start", "end", "activity"]);
    let intervals = read_rows(&path, &header, |r| {
        let start: usize = field(r, 0, "start")?;
        let end: usize = field(r, 1, "end")?;
        let activity: String = field(r, 2, "activity")?;
        if end >= rec.frame_count {
            return Err(format!(
                "interval end {end} beyond frame_count {}",
                rec.frame_count
            ));
        }
        if activity.is_empty() {
            return Err("empty activity name".into());
        }
        Ok(LabelInterval {
            start,
            end,
            activity,
        })
    })?;
    GroundTruth::new(intervals).map_err(|m| CorpusError::parse(&path, 0, m))
}

fn read_keyframes(rec: &VideoRecord) -> Result<BTreeMap<usize, KeyFrameImage>, CorpusError> {
    let dir = rec.keyframe_dir();
    if !dir.is_dir() {
        return Err(CorpusError::MissingFile(dir));
    }
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(&dir).map_err(|e| CorpusError::io(&dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CorpusError::io(&dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("ppm") {
            continue;
        }
        let frame: usize = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse().ok())
            .filter(|&f| f < rec.frame_count)
            .ok_or_else(|| CorpusError::parse(&path, 0, "key-frame name is not a frame index"))?;
        let bytes = fs::read(&path).map_err(|e| CorpusError::io(&path, e))?;
        let img = ppm::decode(&bytes).map_err(|m| CorpusError::parse(&path, 0, m))?;
        out.insert(frame, img);
    }
    Ok(out)
}

/// Parses all files of one video directory, reporting every broken file.
pub fn read_video(dir: &Path) -> Result<VideoData, CorpusError> {
    let record = read_meta(dir)?;
    let fields = read_motion(&record);
    let audio = read_track(&record.audio_path(), "p", record.frame_count);
    let location = read_track(&record.location_path(), "l", record.frame_count);
    let truth = read_labels(&record);
    let keyframes = read_keyframes(&record);
    match (fields, audio, location, truth, keyframes) {
        (Ok(fields), Ok(audio), Ok(location), Ok(truth), Ok(keyframes)) => Ok(VideoData {
            record,
            fields,
            audio,
            location,
            truth,
            keyframes,
        }),
        (f, a, l, t, k) => {
            let errors = [f.err(), a.err(), l.err(), t.err(), k.err()]
                .into_iter()
                .flatten()
                .collect();
            Err(CorpusError::collect(errors).expect("at least one error"))
        }
    }
}

fn video_dirs(root: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::MissingFile(root.to_path_buf()));
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| CorpusError::io(root, e))? {
        let path = entry.map_err(|e| CorpusError::io(root, e))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Loads and validates every video under `root`, sorted by id.
pub fn load_corpus_data(root: &Path) -> Result<Vec<VideoData>, CorpusError> {
    let dirs = video_dirs(root)?;
    if dirs.is_empty() {
        log::warn!("corpus at {} is empty", root.display());
    }
    let results: Vec<Result<VideoData, CorpusError>> =
        dirs.par_iter().map(|d| read_video(d)).collect();
    let mut videos = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(v) => videos.push(v),
            Err(CorpusError::Multiple(es)) => errors.extend(es),
            Err(e) => errors.push(e),
        }
    }
    match CorpusError::collect(errors) {
        Some(e) => Err(e),
        None => Ok(videos),
    }
}

/// Validates every video under `root` and returns their records.
pub fn load_corpus(root: &Path) -> Result<Vec<VideoRecord>, CorpusError> {
    Ok(load_corpus_data(root)?
        .into_iter()
        .map(|v| v.record)
        .collect())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CorpusError> {
    fs::write(path, contents).map_err(|e| CorpusError::io(path, e))
}

fn track_csv(prefix: &str, rows: &[(usize, [f64; TRACK_LEN])]) -> String {
    let mut s = track_header(prefix).join(",");
    s.push('\n');
    for (frame, v) in rows {
        let _ = write!(s, "{frame}");
        for x in v {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
    }
    s
}

/// Writes a video into `video.record.dir`, replacing existing files.
pub fn write_video(video: &VideoData) -> Result<(), CorpusError> {
    let rec = &video.record;
    let kf_dir = rec.keyframe_dir();
    fs::create_dir_all(&kf_dir).map_err(|e| CorpusError::io(&kf_dir, e))?;

    let meta = format!(
        "width,height,fps,frame_count\n{},{},{},{}\n",
        rec.width, rec.height, rec.fps, rec.frame_count
    );
    write_file(&rec.meta_path(), meta.as_bytes())?;

    let mut motion = String::from("frame,cx,cy,dx,dy\n");
    for f in &video.fields {
        for (&(x, y), &(dx, dy)) in f.block_centers.iter().zip(&f.displacements) {
            let _ = writeln!(motion, "{},{x},{y},{dx},{dy}", f.frame_index);
        }
    }
    write_file(&rec.motion_path(), motion.as_bytes())?;
    write_file(&rec.audio_path(), track_csv("p", &video.audio).as_bytes())?;
    write_file(
        &rec.location_path(),
        track_csv("l", &video.location).as_bytes(),
    )?;

    let mut labels = String::from("start,end,activity\n");
    for iv in &video.truth.intervals {
        let _ = writeln!(labels, "{},{},{}", iv.start, iv.end, iv.activity);
    }
    write_file(&rec.labels_path(), labels.as_bytes())?;

    for (frame, img) in &video.keyframes {
        write_file(&rec.keyframe_path(*frame), &ppm::encode(img))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(start: usize, end: usize, a: &str) -> LabelInterval {
        LabelInterval {
            start,
            end,
            activity: a.into(),
        }
    }

    #[test]
    fn overlap_names_pair() {
        let err = GroundTruth::new(vec![iv(10, 20, "B"), iv(0, 10, "A")]).unwrap_err();
        assert!(
            err.contains("0-10 'A'") && err.contains("10-20 'B'"),
            "{err}"
        );
        assert!(GroundTruth::new(vec![iv(11, 20, "B"), iv(0, 10, "A")]).is_ok());
    }

    #[test]
    fn gaps_become_reject_class() {
        let gt = GroundTruth::new(vec![iv(2, 3, "A")]).unwrap();
        assert_eq!(gt.frame_labels(5), vec!["None", "None", "A", "A", "None"]);
    }

    #[test]
    fn empty_corpus_and_missing_root() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_corpus(dir.path()).unwrap().is_empty());
        assert!(matches!(
            load_corpus(&dir.path().join("nope")),
            Err(CorpusError::MissingFile(_))
        ));
    }

    #[test]
    fn broken_files_are_reported_with_line() {
        let root = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            videos: 1,
            frames: 120,
            activities: 2,
            ..SynthSpec::default()
        };
        generate_synthetic(root.path(), 3, &spec).unwrap();
        let dir = root.path().join("video_00");
        let labels = dir.join("labels.csv");
        let mut text = fs::read_to_string(&labels).unwrap();
        text.push_str("5,7,Overlap\n");
        fs::write(&labels, text).unwrap();
        fs::write(dir.join("audio.csv"), "frame,p1\n0,1\n").unwrap();
        let err = load_corpus(root.path()).unwrap_err();
        let CorpusError::Multiple(errors) = &err else {
            panic!("expected several errors, got {err}");
        };
        assert_eq!(errors.len(), 2);
        assert!(err.to_string().contains("overlap"));
        assert!(err.to_string().contains("audio.csv:1"));
        fs::remove_file(dir.join("motion.csv")).unwrap();
        let err = read_video(&dir).unwrap_err();
        assert!(err.to_string().contains("missing file"));
    }

    #[test]
    fn nearest_keyframe_prefers_lower_on_tie() {
        let img = |v| KeyFrameImage::uniform(1, 1, [v, v, v]);
        let mut keyframes = BTreeMap::new();
        keyframes.insert(10, img(1));
        keyframes.insert(20, img(2));
        let video = VideoData {
            record: VideoRecord {
                id: "v".into(),
                width: 1,
                height: 1,
                fps: 1.0,
                frame_count: 30,
                dir: PathBuf::new(),
            },
            fields: vec![],
            audio: vec![],
            location: vec![],
            truth: GroundTruth::default(),
            keyframes,
        };
        assert_eq!(video.nearest_keyframe(15).unwrap().pixel(0, 0), [1, 1, 1]);
        assert_eq!(video.nearest_keyframe(16).unwrap().pixel(0, 0), [2, 2, 2]);
        assert_eq!(video.nearest_keyframe(0).unwrap().pixel(0, 0), [1, 1, 1]);
    }
}

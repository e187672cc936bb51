//! Description spaces and early fusion of descriptors into observation vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{FrameDescriptors, SegmentDescriptors};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("unknown mask token '{0}'")]
    UnknownToken(String),
    #[error("empty description space")]
    EmptyMask,
    #[error("color layout is only defined at segment granularity")]
    CldAtFrameGranularity,
    #[error("descriptor part {0} missing")]
    MissingPart(Part),
    #[error("no observations to assemble")]
    EmptySequence,
    #[error("unknown granularity '{0}'")]
    UnknownGranularity(String),
}

/// One descriptor family, in concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    Htpe,
    Hc,
    Rm,
    Audio,
    Cld,
    Loc,
}

impl Part {
    pub const ALL: [Part; 6] = [
        Part::Htpe,
        Part::Hc,
        Part::Rm,
        Part::Audio,
        Part::Cld,
        Part::Loc,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Part::Htpe => "htpe",
            Part::Hc => "hc",
            Part::Rm => "rm",
            Part::Audio => "audio",
            Part::Cld => "cld",
            Part::Loc => "loc",
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            Part::Htpe => 10,
            Part::Hc => 8,
            Part::Rm => 16,
            Part::Audio => 7,
            Part::Cld => 12,
            Part::Loc => 7,
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Non-empty subset of the six descriptor parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SpaceMask(u8);

impl From<SpaceMask> for String {
    fn from(m: SpaceMask) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for SpaceMask {
    type Error = FusionError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl SpaceMask {
    pub const FULL: SpaceMask = SpaceMask(0b11_1111);

    pub fn from_bits(bits: u8) -> Result<Self, FusionError> {
        if bits == 0 || bits > Self::FULL.0 {
            return Err(FusionError::EmptyMask);
        }
        Ok(Self(bits))
    }

    pub fn from_parts(parts: &[Part]) -> Result<Self, FusionError> {
        Self::from_bits(parts.iter().fold(0, |acc, p| acc | p.bit()))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, part: Part) -> bool {
        self.0 & part.bit() != 0
    }

    pub fn parts(self) -> impl Iterator<Item = Part> {
        Part::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    pub fn is_subset_of(self, other: SpaceMask) -> bool {
        self.0 & !other.0 == 0
    }
}

impl fmt::Display for SpaceMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tokens: Vec<&str> = self.parts().map(Part::token).collect();
        f.write_str(&tokens.join("+"))
    }
}

impl FromStr for SpaceMask {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = Vec::new();
        for token in s.split('+').map(str::trim) {
            let part = Part::ALL
                .into_iter()
                .find(|p| p.token().eq_ignore_ascii_case(token))
                .ok_or_else(|| FusionError::UnknownToken(token.to_string()))?;
            parts.push(part);
        }
        Self::from_parts(&parts)
    }
}

/// The 63 description spaces, in binary counting order (bit 0 = htpe).
pub fn enumerate_spaces() -> Vec<SpaceMask> {
    (1..=SpaceMask::FULL.0).map(SpaceMask).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Frame,
    Segment,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Frame => "frame",
            Granularity::Segment => "segment",
        })
    }
}

impl FromStr for Granularity {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frame" | "frames" => Ok(Granularity::Frame),
            "segment" | "segments" => Ok(Granularity::Segment),
            other => Err(FusionError::UnknownGranularity(other.to_string())),
        }
    }
}

pub fn mask_dimension(mask: SpaceMask, granularity: Granularity) -> Result<usize, FusionError> {
    if granularity == Granularity::Frame && mask.contains(Part::Cld) {
        return Err(FusionError::CldAtFrameGranularity);
    }
    Ok(mask.parts().map(Part::dimension).sum())
}

/// Access to the descriptor parts of one time step.
pub trait DescriptorParts {
    fn part(&self, part: Part) -> Option<Vec<f64>>;
}

impl DescriptorParts for FrameDescriptors {
    fn part(&self, part: Part) -> Option<Vec<f64>> {
        Some(match part {
            Part::Htpe => self.h_tpe_x.iter().chain(&self.h_tpe_y).copied().collect(),
            Part::Hc => self.h_c.to_vec(),
            Part::Rm => self.rm.to_vec(),
            Part::Audio => self.audio.to_vec(),
            Part::Cld => return None,
            Part::Loc => self.location.to_vec(),
        })
    }
}

impl DescriptorParts for SegmentDescriptors {
    fn part(&self, part: Part) -> Option<Vec<f64>> {
        Some(match part {
            Part::Htpe => self.h_tpe_x.iter().chain(&self.h_tpe_y).copied().collect(),
            Part::Hc => self.h_c.to_vec(),
            Part::Rm => self.rm.to_vec(),
            Part::Audio => self.audio.to_vec(),
            Part::Cld => self.cld.to_vec(),
            Part::Loc => self.location.to_vec(),
        })
    }
}

/// Time-ordered fused observation vectors of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    pub granularity: Granularity,
    pub mask: SpaceMask,
    pub vectors: Vec<Vec<f64>>,
    pub source_video: String,
}

impl ObservationSequence {
    pub fn dimension(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Concatenates the selected parts of one time step.
pub fn fuse<D: DescriptorParts>(mask: SpaceMask, descriptor: &D) -> Result<Vec<f64>, FusionError> {
    let mut v = Vec::new();
    for part in mask.parts() {
        v.extend(
            descriptor
                .part(part)
                .ok_or(FusionError::MissingPart(part))?,
        );
    }
    Ok(v)
}

pub fn assemble<D: DescriptorParts>(
    mask: SpaceMask,
    granularity: Granularity,
    descriptors: &[D],
    source_video: &str,
) -> Result<ObservationSequence, FusionError> {
    mask_dimension(mask, granularity)?;
    if descriptors.is_empty() {
        return Err(FusionError::EmptySequence);
    }
    let vectors = descriptors
        .iter()
        .map(|d| fuse(mask, d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ObservationSequence {
        granularity,
        mask,
        vectors,
        source_video: source_video.to_string(),
    })
}

/// Column offsets of each part inside the 60-column layout.
pub fn part_columns(part: Part) -> std::ops::Range<usize> {
    let start: usize = Part::ALL
        .iter()
        .take_while(|&&p| p != part)
        .map(|p| p.dimension())
        .sum();
    start..start + part.dimension()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_three_distinct_spaces() {
        let spaces = enumerate_spaces();
        assert_eq!(spaces.len(), 63);
        let mut uniq = spaces.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 63);
        assert!(spaces.contains(&SpaceMask::FULL));
        for p in Part::ALL {
            assert!(spaces.contains(&SpaceMask::from_parts(&[p]).unwrap()));
        }
    }

    #[test]
    fn dimension_identities() {
        let seg = Granularity::Segment;
        assert_eq!(mask_dimension(SpaceMask::FULL, seg), Ok(60));
        let dynamic = SpaceMask::from_parts(&[Part::Htpe, Part::Hc, Part::Rm]).unwrap();
        assert_eq!(mask_dimension(dynamic, seg), Ok(34));
        let stat = SpaceMask::from_parts(&[Part::Cld, Part::Loc]).unwrap();
        assert_eq!(mask_dimension(stat, seg), Ok(19));
        assert_eq!(mask_dimension("audio".parse().unwrap(), seg), Ok(7));
        assert_eq!(
            mask_dimension(SpaceMask::FULL, Granularity::Frame),
            Err(FusionError::CldAtFrameGranularity)
        );
        let total: usize = Part::ALL.iter().map(|p| p.dimension()).sum();
        assert_eq!(total, 60);
    }

    #[test]
    fn mask_strings() {
        let m: SpaceMask = "hc+loc+cld".parse().unwrap();
        assert_eq!(m.to_string(), "hc+cld+loc");
        assert_eq!(
            "hc+foo".parse::<SpaceMask>(),
            Err(FusionError::UnknownToken("foo".into()))
        );
        for m in enumerate_spaces() {
            assert_eq!(m.to_string().parse::<SpaceMask>().unwrap(), m);
        }
    }

    #[test]
    fn part_columns_tile_sixty() {
        assert_eq!(part_columns(Part::Htpe), 0..10);
        assert_eq!(part_columns(Part::Audio), 34..41);
        assert_eq!(part_columns(Part::Cld), 41..53);
        assert_eq!(part_columns(Part::Loc), 53..60);
    }

    #[test]
    fn audio_pass_through_and_missing_cld() {
        let f = FrameDescriptors {
            audio: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            ..Default::default()
        };
        let seq = assemble(
            "audio".parse().unwrap(),
            Granularity::Frame,
            std::slice::from_ref(&f),
            "v",
        )
        .unwrap();
        assert_eq!(seq.vectors[0], f.audio.to_vec());
        assert_eq!(
            fuse("cld".parse().unwrap(), &f),
            Err(FusionError::MissingPart(Part::Cld))
        );
        assert_eq!(
            assemble::<FrameDescriptors>(SpaceMask::FULL, Granularity::Segment, &[], "v"),
            Err(FusionError::EmptySequence)
        );
    }
}

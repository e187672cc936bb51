//! Activity recognition in wearable-camera video with a hierarchical HMM.
//!
//! The pipeline runs from block motion vectors through ego-motion
//! estimation, motion-based segmentation, descriptor extraction and early
//! fusion, to HHMM training, Viterbi decoding and evaluation.

pub mod config;
pub mod corpus;
pub mod descriptors;
pub mod evaluation;
pub mod fusion;
pub mod hhmm;
pub mod motion;
pub mod pipeline;
pub mod segmentation;

//! Deterministic on-disk formats: sample streams, ground truth, tracker
//! checkpoints, metric traces and reports.

pub mod checkpoint;
pub mod stream;
pub mod trace;
pub mod truth;

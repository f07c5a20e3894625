//! Detection of compromised mobile devices from network-traffic metadata.
//!
//! The pipeline builds a device-app bipartite graph from traffic records,
//! derives ground-truth labels from scanner verdict files, and runs
//! guilt-by-association inference (belief propagation) to score unknown
//! devices. Companion modules evaluate accuracy (balanced cross-validation,
//! ROC/AUC, parameter sweeps), diagnose graph topology (distances,
//! centrality), post-analyze classified devices (privacy leaks,
//! infrastructure statistics), and generate calibrated synthetic corpora so
//! everything is testable without a production traffic feed.

pub mod evaluation;
pub mod graph;
pub mod inference;
pub mod ingest;
pub mod labeling;
pub mod postanalysis;
pub mod synthgen;
pub mod topology;
pub mod util;

pub use graph::{AppId, BipartiteGraph, DeviceId, NodeRef, Side};
pub use inference::{BeliefVector, BpConfig, InferenceResult};
pub use labeling::{AppLabel, GroundTruth, LabelingConfig};

//! slicekit: plan and run split execution of layered neural models across a
//! device/edge pair connected by a constrained uplink.
//!
//! The workflow is: profile a model's split points, benchmark per-split
//! execution and serialization costs, rank the splits under a network profile
//! with and without the compressing transfer-layer pair, then execute the
//! chosen split over an emulated link and compare measurement against the
//! plan.
//!
//! Modules:
//! - [`tensor`] / [`layers`]: dense rank-3 tensors, layer forward/backward,
//!   and the transfer-layer kernels (2x2 stride-2 max pooling, 2x nearest
//!   neighbor upsampling).
//! - [`graph`]: layer graphs, split-point enumeration, model/weight formats,
//!   builtin synthetic models.
//! - [`bench`]: per-split timing and payload measurement.
//! - [`planner`]: the latency cost model and split ranking.
//! - [`preprocess`]: transfer-layer insertion, toy-scale retraining, and
//!   head/tail export.
//! - [`wire`]: the binary frame format spoken between device and edge.
//! - [`netem`]: in-process uplink shaping (bandwidth pacing + added latency).
//! - [`offload`]: the edge server and device client runtime.

pub mod bench;
pub mod graph;
pub mod layers;
pub mod netem;
pub mod offload;
pub mod planner;
pub mod preprocess;
pub mod rng;
pub mod tensor;
pub mod timing;
pub mod wire;

pub use graph::{LayerGraph, SplitId, SplitPoint};
pub use layers::{Layer, LayerKind};
pub use planner::NetworkProfile;
pub use tensor::{Shape, Tensor};

//! Training-set curation for LiDAR odometry.
//!
//! Two stages pick which recorded sequences a pose-regression model trains on:
//!
//! * **Initial selection** segments each trajectory into turn nodes and
//!   straight edges ([`trajgraph`]), scores sequences by how varied and how
//!   substantial their motion is ([`diversity`]), and solves a small 0/1
//!   program that maximizes that score under interval-coverage constraints.
//! * **Incremental selection** ([`ais`]) ranks the remaining sequences by how
//!   badly the current model aligns their frames (a point-to-plane
//!   reconstruction loss) and how unstable its predictions are under
//!   augmentation, then admits the hardest few each round.
//!
//! The model is abstracted behind [`predictor::PosePredictor`]; ICP and
//! ground-truth oracles ship as reference implementations.
//!
//! The crate is `no_std` (with `alloc`) when built without the `std` feature.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod ais;
pub mod cloud;
pub mod diversity;
pub mod efficiency;
pub mod geom;
pub mod icp;
pub mod nn;
pub mod normals;
pub mod predictor;
pub mod seed;
pub mod sequence;
pub mod synth;
pub mod trajgraph;

pub use cloud::PointCloud;
pub use geom::{EulerAngles, Pose, Rotation, Translation};
pub use sequence::{FrameSource, InMemoryFrames, SamplePool, SequenceRecord, Weather};

//! Learned local 3D descriptors for cross-source point cloud registration.
//!
//! The crate covers the full pipeline: synthetic scene generation and
//! sensor-style degradation, region-based training pair sampling with
//! rotation augmentation, TDF voxelization, a Siamese 3D ConvNet trained
//! with a contrastive loss, segmentation-based control point extraction,
//! descriptor matching with RANSAC rigid alignment, and the evaluation
//! harness (overlap ratio, recall sweeps, experiment table).

pub mod cloud;
pub mod error;
pub mod eval;
pub mod features;
pub mod index;
pub mod io;
pub mod net;
pub mod reference;
pub mod register;
pub mod sampler;
pub mod seed;
pub mod segment;
pub mod synth;
pub mod tdf;
pub mod transform;

pub use cloud::{BoundingSphere, PointCloud, Vec3};
pub use error::{Error, Result};
pub use index::SpatialIndex;
pub use transform::RigidTransform;

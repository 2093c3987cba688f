//! Obfuscation schemes for point clouds and the neighborhood-based recovery
//! attack against them.
//!
//! The geometry is generic over the scalar type (`f32` or `f64`); the
//! aliases at the crate root fix it to one of them.

pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod neighborhood;
pub mod obfuscation;
pub mod pipeline;
pub mod recovery;
pub mod rng;
pub mod scalar;
pub mod sidecar;
pub mod spatial;
pub mod synthetic;

pub use error::{Error, Result};
pub use evaluation::{geometric_accuracy, AccuracyReport, ThresholdSpec};
pub use geometry::{Axis, AxisPlaneGeom, Dim, LineGeom, Point, PointCloud, Vec3};
pub use neighborhood::{
    corrupt_neighborhoods, kept_inliers, measure_inlier_ratio, oracle_neighborhoods, Neighborhood, NeighborhoodSet,
    Provenance, SubjectKey,
};
pub use obfuscation::{obfuscate, ObfuscatedCloud, ObfuscatedItem, Obfuscation, ObfuscationOptions, Scheme};
pub use recovery::{recover_cloud, recover_cloud_with_threads, RecoveredCloud, RecoveredPoint, RecoveryConfig, Status};
pub use scalar::Real;
pub use sidecar::SceneSidecar;
pub use synthetic::{generate_synthetic, SceneKind, SyntheticParams, SyntheticScene};

pub type PointCloud64 = PointCloud<f64>;
pub type PointCloud32 = PointCloud<f32>;
pub type ObfuscatedCloud64 = ObfuscatedCloud<f64>;
pub type ObfuscatedCloud32 = ObfuscatedCloud<f32>;
pub type RecoveredCloud64 = RecoveredCloud<f64>;
pub type RecoveredCloud32 = RecoveredCloud<f32>;
pub type SceneSidecar64 = SceneSidecar<f64>;
pub type SceneSidecar32 = SceneSidecar<f32>;

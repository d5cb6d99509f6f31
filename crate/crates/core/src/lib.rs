//! Evaluation machinery for fetal brain MRI segmentation and biometry
//! challenges: per-label segmentation metrics, biometry error scoring,
//! leaderboard construction with missing-result penalties, nonparametric
//! tests and domain-shift attribution.

pub mod biometry;
pub mod domain_shift;
pub mod error;
pub mod labels;
pub mod metadata;
pub mod metrics;
pub mod nifti;
pub mod phantoms;
pub mod ranking;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
pub use labels::{LabelSchema, TissueLabel, TopologyTargets};
pub use metadata::CaseMetadata;
pub use metrics::{evaluate_case, MetricRecord, TopologySummary};
pub use biometry::{BiometryRecord, MeasurementKind};
pub use ranking::{Direction, Leaderboard, Participation};
pub use volume::{Affine, LabelVolume, Mask, Point3};

//! Distributed Gaussian-process target pursuit for a network of camera drones.
//!
//! Each drone tracks a moving rigid target with a passivity-based pursuit and
//! observer law. Target motion is learned offline by per-drone GP experts whose
//! predictions are fused over the communication graph as a product of experts.

pub mod control;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod gp;
pub mod network;
pub mod scenario;
pub mod vision;

pub use control::{ControlInput, ErrorState, Gains, GainsSpec};
pub use error::{Error, Result};
pub use fusion::{fuse, ExpertMessage, FusedPrediction};
pub use geometry::{BodyVelocity, Pose};
pub use gp::{BoundReport, Dataset, GpExpert, HyperParams, Prediction};
pub use network::{DroneGraph, GraphSpec};
pub use scenario::{Mode, ScenarioConfig};
pub use vision::{CameraModel, FeatureSet};

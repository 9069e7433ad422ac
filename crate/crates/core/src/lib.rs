//! Gray-box feedback optimization: controllers that blend model-based inexact
//! gradients with zeroth-order estimates to steer a plant to optimal steady states.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod objective;
pub mod plant;
pub mod sensitivity;
pub mod stochastics;

pub use controller::{AlphaSchedule, BoxConstraint, Controller, ControllerParams, ControllerState, Mode};
pub use error::{Error, Result};
pub use metrics::{BoundConstants, Comparator, ComparatorSequence, StepRecord, TrajectoryLog};
pub use objective::{CubicQuadraticObjective, Objective, TimeVaryingObjectiveSchedule};
pub use plant::{LinearSinePlant, PlantDims, PlantSnapshot};
pub use sensitivity::{SensitivityProvider, SensitivitySpec};
pub use stochastics::RngStream;

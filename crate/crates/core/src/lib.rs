//! Push-sum averaging and stochastic gradient-push over directed networks
//! where messages can be lost or delayed and nodes wake asynchronously.
//! Includes an augmented-matrix verifier that replays a run as a
//! column-stochastic linear system.

pub mod error;
pub mod faultnet;
pub mod graph;
pub mod harness;
pub mod objectives;
pub mod oracle;
pub mod raps;
pub mod rasgp;
pub mod rng;

pub use error::{Error, Result};
pub use faultnet::{FaultBounds, MaskPlan, ScheduleRealization, ScheduleSampler, SendOutcome, SlotSchedule};
pub use graph::{Arc, Topology};
pub use harness::config::ExperimentConfig;
pub use objectives::{NoiseModel, ObjectiveSuite, QuadraticObjective, SvmObjective};
pub use oracle::{ContractionBound, VerificationReport};
pub use raps::{PushSumNodeState, RunOptions, StateTrace, Trajectory};
pub use rasgp::StepSizeLedger;
pub use rng::{Role, Stream};

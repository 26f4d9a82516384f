//! Data-driven meta-design of PI speed controllers.
//!
//! A family of simulated BLDC motors supplies closed-loop datasets. From a
//! meta-dataset of previously tuned systems, a new controller is obtained as
//! a convex combination of the stored ones, optionally with an auto-tuned
//! reference model. VRFT and online black-box tuning serve as baselines.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autotune;
pub mod bench;
pub mod controller;
pub mod error;
pub mod gopt;
pub mod io;
pub mod lti;
pub mod meta;
pub mod motor;
pub mod qp;
pub mod vrft;

pub use autotune::{autotune, AutotuneResult, CalibConfig, ReferenceModel, ReferenceModelSpace};
pub use controller::{ControllerBasis, ControllerParams};
pub use error::{Error, Result};
pub use gopt::{minimize, tune_pi_gains, OptBudget, OptTrace, SearchSpace};
pub use lti::{check_similarity, feedback, TransferFunction};
pub use meta::{design_meta_controller, MetaDesign, MetaDesignConfig, MetaEntry, MetaStatistics, StatisticsMode};
pub use motor::{Dataset, MotorConfig, NoiseConfig};
pub use qp::{solve_simplex_qp, MetaWeights};
pub use vrft::{vrft_design, FilterSpec, VirtualErrorConvention, VrftOptions};

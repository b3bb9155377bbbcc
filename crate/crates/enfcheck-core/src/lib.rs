//! Test generation, execution, and performance gating for runtime enforcers.
//!
//! An enforcer intercepts the events an application emits (`req` events) and
//! rewrites them into the events that actually reach the platform (`api`
//! events) so that a correctness policy holds. This crate builds everything
//! needed to test such an enforcer against a concrete application:
//!
//! * [`model`] — enforcement models and policy monitors (parsing, validation,
//!   simulation),
//! * [`hsi`] — abstract test-sequence generation via transition covers and
//!   harmonized separating families,
//! * [`appsim`] — a deterministic application simulator behind a driver
//!   contract,
//! * [`ripper`] — breadth-first GUI exploration producing an annotated model,
//! * [`concretize`] — mapping abstract sequences to UI-action tests with
//!   differential oracles,
//! * [`runner`] — two-variant execution with fault injection and KPI
//!   collection,
//! * [`compare`] — median aggregation and degradation verdicts.

pub mod appsim;
pub mod compare;
pub mod concretize;
pub mod fixtures;
pub mod hsi;
pub mod model;
pub mod ripper;
pub mod runner;

pub use appsim::{AppSpec, CostVector, Driver, GuiState, SimDriver, UiAction, View};
pub use compare::{DegradationReport, Thresholds};
pub use concretize::{ConcreteTest, OracleSpec};
pub use hsi::{HsiSuite, InputSequence, SeparatingFamilies};
pub use model::{EnforcementModel, Event, EventKind, PolicyMonitor, TraceRun};
pub use ripper::AugmentedGuiModel;
pub use runner::{Deployment, FaultSpec, KpiRecord, RunConfig, SuiteSamples};

//! Closed-loop simulation and benchmarking around `refshift-core`.
//!
//! A [`Scenario`] is a stabilized linear plant whose operational region
//! shrinks at `t_change`. [`run_scenario`] simulates it with either the
//! reference re-optimization or the controller-redesign baseline and records
//! violations; [`run_benchmark`] does that over a suite.

pub mod bench;
pub mod error;
pub mod generate;
pub mod integrate;
pub mod ocr;
pub mod run;
pub mod scenario;

pub use bench::{run_benchmark, BenchConfig, BenchResult, BenchRow, MethodStats, Suite};
pub use error::{Result, SimError};
pub use generate::{generate_scenarios, generate_suite, GenSpec};
pub use integrate::{integrate, Event, EventKind, Integrator, Trajectory};
pub use ocr::{ocr_surrogate, OcrOutcome};
pub use run::{run_scenario, Clock, RunConfig, RunOutcome, Strategy};
pub use scenario::{Scenario, ScenarioFile};

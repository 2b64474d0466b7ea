//! relsen: streaming sensor reliability scoring and data cleaning.
//!
//! Given only a raw measurement stream and a sensor-to-process topology,
//! the engine simultaneously estimates the hidden state of every monitored
//! process and a reliability score for every sensor. Per step it constructs
//! random local linear regression soft sensors from cross-correlated
//! processes, cleans the measurements by a reliability-weighted closed
//! form, and refreshes the scores from a sliding window of attributed
//! errors under the constraint sum(exp(-c)) = 1. A coordinate-descent
//! warm-up over the first T steps bootstraps the loop.
//!
//! The companion modules provide the benchmarking harness from the
//! evaluation protocol: fault injection (`faults`), baseline cleaners
//! (`baselines`), synthetic data with known truth (`synth`), and MAE
//! comparison reports (`eval`).

pub mod baselines;
pub mod cleaning;
pub mod config;
pub mod error;
pub mod eval;
pub mod faults;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod reliability;
pub mod soft_sensor;
pub mod synth;
pub mod warmup;

pub use error::{Error, Result};
pub use model::{Config, EstimateFrame, MeasurementFrame, Normalizer, Topology};
pub use pipeline::{Engine, StepOutput, WarmupReport};

//! Spatio-temporal Bernoulli and categorical models of solar ramping events:
//! extraction from irradiance series, constrained estimation with error
//! certificates, and sequential prediction.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod export;
pub mod extract;
pub mod ingest;
pub mod model;
pub mod predict;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
pub use estimate::{fit, FitOptions, FitReport, Objective};
pub use export::GraphExport;
pub use extract::{EventSequence, ExtractMode, ExtractionConfig};
pub use ingest::{Dataset, DateRange, RadiationSeries, SensorMeta};
pub use model::{HistoryBlock, ModelParams, MultiStateParams, SingleStateParams};

/// Version stamped into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

//! Student proficiency models and the online response-prediction benchmark
//! used to compare them.
//!
//! Four model families are provided:
//!
//! * [`irt`]: one-parameter ogive IRT and its hierarchical (grouped item) extension,
//!   fit by MAP estimation with a damped Newton method.
//! * [`tirt`]: temporal IRT, where proficiency drifts as a Wiener process and older
//!   responses are discounted in closed form.
//! * [`dkt`]: a single-layer recurrent knowledge tracer trained by backpropagation
//!   through time.
//! * a windowed percent-correct baseline in [`eval`].
//!
//! [`dataio`] ingests ASSISTments, KDD Cup and a canonical CSV format, and
//! [`eval`] implements student-level splits, sweeps, cross-validated online
//! prediction and the accuracy/AUC metrics.

pub mod dataio;
pub mod dkt;
pub mod error;
pub mod eval;
pub mod irt;
pub mod link;
pub mod params;
pub mod tirt;

pub use error::{Error, Result};

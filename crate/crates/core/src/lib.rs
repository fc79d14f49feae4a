//! Single-atom laser models: steady states, output spectra, photon statistics
//! and Monte-Carlo wave-function trajectories.
//!
//! Rates and frequencies are dimensionless, measured in units of the
//! spontaneous decay rate of the lasing transition.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod hilbert;
pub mod linalg;
pub mod liouvillian;
pub mod models;
pub mod observables;
pub mod spectrum;
pub mod sweep;
pub mod trajectory;

pub use error::{Error, ErrorKind, Result};
pub use exec::Exec;
pub use hilbert::{OperatorKind, OperatorMatrix, StateSpace, C64};
pub use liouvillian::{adaptive_steady_state, steady_state, Generator, SteadyState, TruncationOptions};
pub use models::{ModelSpec, RateParams, Scheme};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

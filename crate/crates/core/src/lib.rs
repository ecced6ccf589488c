//! Photothermal super-resolution reconstruction of internal defect maps
//! from sequential laser-spot thermography.
//!
//! The crate covers the full synthetic pipeline: an analytic thermal point
//! spread function ([`thermal`]), a phantom generator and forward model
//! ([`phantom`]), two joint-sparse ADMM reconstructions ([`sms`] in the
//! flattened spatial domain and [`spectral`] in the spatial-frequency
//! domain) built on shared optimisation pieces ([`solver`]), conventional
//! baselines ([`baseline`]), scoring ([`evaluation`]) and on-disk formats
//! ([`dataset`]).

// `!(x > 0.0)` is how parameter checks reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod phantom;
mod quadrature;
pub mod recon;
pub mod sms;
pub mod solver;
pub mod spectral;
pub mod thermal;

pub use error::{Error, Result};
pub use grid::Grid2D;
pub use phantom::{DefectMap, MeasurementSet, ScanPlan};
pub use recon::{reconstruct, Method, ReconResult};
pub use solver::{ReconConfig, RhoMode, SolveDiagnostics};
pub use thermal::{ExcitationTemporal, PlateSpec, PsfField};

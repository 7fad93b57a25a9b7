//! Simulation of optically driven electron-spin dynamics in a three-level
//! lambda system (diamond NV center): Raman Rabi oscillations, STIRAP,
//! Ramsey interferometry and CPT spectra, with inhomogeneous-broadening
//! ensembles and curve fitting.

pub mod density;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod fitting;
pub mod propagate;
pub mod pulses;
pub mod scan;

pub use density::DensityMatrix;
pub use dynamics::{FieldSample, LambdaParams};
pub use ensemble::{Ensemble, GaussianSpec, HyperfineConfig};
pub use error::{Error, Result};
pub use experiments::{SimConfig, StirapGeometry};
pub use fitting::{FitModel, FitResult};
pub use pulses::{Envelope, EnvelopeShape, PulseSequence};
pub use scan::{ScanPoint, ScanResult, ScanVariable};

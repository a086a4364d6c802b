//! Sparse estimation of mixture weights over a known dictionary of
//! densities, with adaptive ℓ1 weights and an ℓ2 correction for
//! contaminated samples.
//!
//! ```no_run
//! use csde::{Dictionary, Sample, Variant, VariantParams, fit_variant, FitOptions};
//!
//! let dict = Dictionary::gaussian(&[0.0, 3.0], &[1.0, 1.0]).unwrap();
//! let gram = dict.gram().unwrap();
//! let sample = Sample::Continuous(vec![-0.2, 0.4, 2.9, 3.3]);
//! let fit = fit_variant(
//!     Variant::Csde,
//!     &sample,
//!     &dict,
//!     &gram,
//!     VariantParams::new(0.01, 0.01),
//!     &FitOptions::default(),
//! )
//! .unwrap();
//! println!("{:?}", fit.beta_hat);
//! ```

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod dictionary;
pub mod error;
pub mod io;
pub mod metrics;
pub mod quadrature;
pub mod simgen;
pub mod solver;
pub mod theory;
pub mod tuning;
pub mod weights;

pub use baselines::{em_fit, EmConfig, EmResult};
pub use dictionary::{BaseDensity, Dictionary, DomainKind, GramMatrix, Point, Sample};
pub use error::{CsdeError, Result};
pub use metrics::{l1_error, support_metrics, tv_error, ErrorReport};
pub use simgen::{run_replications, EstimatorSpec, ExperimentConfig, ReplicationReport};
pub use solver::{fit, fit_orthogonal, fit_variant, FitOptions, FitResult, Problem, Variant, VariantParams};
pub use tuning::{tune, TuneConfig, TuneResult};
pub use weights::WeightSpec;

//! False discovery rate control for correlated test statistics, centered on
//! the dueling double bootstrap.
//!
//! The crate covers the full pipeline:
//!
//! - [`factor_model`]: OLS alphas on a factor design, studentized
//!   statistics and residual-bootstrap null draws.
//! - [`testing`]: p-values, step-up thresholds, decisions and FDP accounting.
//! - [`classical`]: single test, BH, BY, BKY, Storey and adaptive Storey.
//! - [`resampling`]: the YB resampling baseline and the dueling double
//!   bootstrap (DDB / DDBA).
//! - [`simulation`]: the equicorrelated benchmark and Monte Carlo harness.
//! - [`io`] and [`cli`]: CSV formats and the `fdrboot` command line.
//!
//! ```
//! use fdrboot::rng::substream;
//! use fdrboot::simulation::{apply_methods, Method, MethodSettings, ScenarioSpec};
//!
//! let spec = ScenarioSpec { n_hyp: 10, pool_size: 600, ..ScenarioSpec::standard(1)? };
//! let inst = spec.make_instance(&mut substream(1, &[]))?;
//! let decisions = apply_methods(
//!     &inst.alpha_hat,
//!     &inst.null_pool,
//!     &[Method::Bh, Method::Ddb],
//!     &MethodSettings::with_q(0.05),
//!     7,
//! )?;
//! assert_eq!(decisions.len(), 2);
//! # Ok::<(), fdrboot::Error>(())
//! ```

pub mod classical;
pub mod cli;
pub mod error;
pub mod factor_model;
pub mod io;
pub mod resampling;
pub mod rng;
pub mod simulation;
pub mod special;
pub mod stats;
pub mod testing;

#[cfg(doctest)]
mod book;

pub use error::{Error, Result};
pub use factor_model::{AlphaEstimates, NullSampleSet};
pub use testing::{Sidedness, TestDecision};

//! Estimation of consumer valuation distributions from bundle transaction data.
//!
//! Every purchase (or non-purchase) constrains the buyer's latent valuation
//! vector to a polyhedron in valuation space. The estimators in this crate
//! treat the valuations as missing data and recover a multivariate Gaussian
//! (or a Gaussian mixture) with a Monte-Carlo EM algorithm whose E-step draws
//! from truncated Gaussians inside those polyhedra.
//!
//! The crate is `no_std` compatible (it needs `alloc`). The default `std`
//! feature turns on data-parallel E-steps through rayon; results are
//! bit-identical with and without it, and at any worker count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
pub mod censored;
pub mod datagen;
pub mod domain;
pub mod em;
mod error;
pub mod gaussian;
pub mod gmm;
pub mod lp;
mod math;
pub mod metrics;
mod par;
pub mod rng;
pub mod sampler;
pub mod theory;

pub use crate::censored::{fit_censored, CensoredDataset, CensoredFitReport, MenuCounts};
pub use crate::domain::{build_ic_polyhedron, Bundle, Dataset, Polyhedron, PriceMenu, Transaction};
pub use crate::em::{fit, EmConfig, FitReport, InitStrategy};
pub use crate::error::{Error, Result};
pub use crate::gaussian::GaussianParams;
pub use crate::gmm::{fit_gmm, GmmComponent, GmmFitReport, GmmParams};
pub use crate::sampler::SampleBatch;

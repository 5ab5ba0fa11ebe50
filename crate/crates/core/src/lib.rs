//! Throughput, outage probability and average power of relay-assisted hybrid
//! ARQ (repetition time diversity and incremental redundancy) over Rayleigh
//! fading, with a Monte Carlo protocol simulator to cross-check every closed
//! form and a power/rate allocation optimizer.

pub mod correlated;
pub mod engine;
pub mod error;
pub mod events;
pub mod fast;
pub mod inr;
pub mod mc;
pub mod metrics;
pub mod noisy;
pub mod optimizer;
pub mod rtd;
pub mod special;
pub mod types;

pub use error::{Error, Result};
pub use events::{EventTerms, FactorTerms};
pub use types::*;

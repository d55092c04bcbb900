//! Sparse polynomial chaos expansions recovered by weighted ℓ1-minimization.

pub mod coherence;
pub mod crossval;
pub mod error;
pub mod experiments;
pub mod index_set;
pub mod l1_solver;
mod linalg;
pub mod model_problems;
pub mod poly_basis;
pub mod rng;
pub mod sampler;

pub use error::{PceError, Result};
pub use index_set::{basis_count, build_index_set, MultiIndex, MultiIndexSet};
pub use poly_basis::{BasisSpec, Family};
pub use sampler::{McmcConfig, Proposal, SampleBatch, SamplingStrategy, StrategyKind};

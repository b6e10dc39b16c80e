//! Compressed sensing under Poisson noise with expander-graph sensing matrices.
//!
//! The crate is organised bottom-up:
//!
//! * [`expander`]: left-regular bipartite graphs, expansion certificates,
//!   cover sets, collision-edge analysis and the RIP-1 check.
//! * [`channel`]: the normalized operator `Φ = A/d`, Poisson sampling and
//!   the likelihood / divergence quantities built on it.
//! * [`recon`]: the penalized MAP decoder, both as a continuous
//!   proximal-gradient solver and as an exhaustive search over a finite
//!   candidate family.
//! * [`bounds`]: numerical checkers for the recovery inequalities.
//! * [`tv`]: the total-variation seminorm for 2-D signals.
//! * [`experiment`]: the sparsity/intensity sweep harness.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Results are
//! identical either way.

pub mod bounds;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod expander;
pub mod io;
pub mod par;
pub mod recon;
pub mod rng;
pub mod tv;

pub use error::{Error, Result};

//! Dropout graph neural networks (DropGNNs) from first principles.
//!
//! A DropGNN executes `r` independent runs of a message-passing GNN on the
//! same input graph, removing every node with a small probability `p` in each
//! run, and merges the `r` per-node embeddings with a permutation-invariant
//! run aggregation before the readout. Observing slightly perturbed variants
//! of every d-hop neighborhood lets the network separate graphs that are
//! indistinguishable to the 1-WL test (and hence to any standard GNN).
//!
//! The crate carries four layers of machinery:
//!
//! * [`graph`], [`wl`], [`signature`], [`iso`] — graph primitives: d-hop
//!   neighborhoods, 1-WL color refinement, canonical unfolding-tree
//!   signatures, and exact isomorphism for small graphs.
//! * [`dropout`] — the probability side: the optimal dropout probability,
//!   exact k-dropout distributions, run-count bounds for the 1-complete and
//!   k-separated regimes, mask sampling, and an empirical concentration
//!   validator.
//! * [`engine`], [`tensor`], [`tape`], [`train`] — a self-contained GIN-style
//!   engine (sum/mean/max aggregation, augmentations, multi-run execution)
//!   with reverse-mode differentiation and Adam.
//! * [`lab`], [`data`] — expressiveness oracles (the two-cycles-plus-hub
//!   counterexample family, port-number neighborhood reconstruction, the
//!   mean-aggregation separator and its counterexample) and the synthetic
//!   benchmark generators.
//!
//! Everything is deterministic under explicit seeds; no global state.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod data;
pub mod dropout;
pub mod engine;
pub mod error;
pub mod graph;
pub mod iso;
pub mod lab;
pub mod rng;
pub mod signature;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod wl;

pub use error::Error;
pub use graph::Graph;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

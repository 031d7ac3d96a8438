//! Knowledge-augmented biomedical relation extraction.
//!
//! This crate is the allocation-only algorithmic core: corpus model and
//! splitting, candidate-pair enumeration and input rendering, offline
//! knowledge stores, knowledge-graph embeddings, SMILES fingerprints, the
//! relation classifier with its fusion heads, scoring, and the experiment
//! protocol. It builds without `std`; file IO and command-line tools live
//! in the companion `kare` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod corpus;
pub mod eval;
pub mod hash;
pub mod harness;
pub mod instances;
pub mod kge;
pub mod knowledge;
pub mod math;
pub mod model;
pub mod molenc;
pub mod nn;
pub mod pipeline;
pub mod synthetic;

/// Seed used for every phase-one run of the hyperparameter search.
pub const DEFAULT_SEED: u64 = 907;

//! Common-sense inference toolkit.
//!
//! The crate covers the full batch pipeline:
//!
//! * reading dependency-parsed corpora, taxonomies, embeddings and pair records ([`corpus_io`]),
//! * predicate-argument extraction over dependency trees ([`extraction`]),
//! * abstraction of propositions into sense-anchored templates ([`abstraction`]),
//! * property derivation over a noun taxonomy ([`taxonomy`], [`properties`]),
//! * hypothesis generation and English surface realization ([`generation`]),
//! * an LSTM encoder-decoder with attention ([`seq2seq`]),
//! * ordinal label aggregation and agreement statistics ([`annotation`]),
//! * pair features, ordinal regression and baselines ([`features`], [`ordinal`]),
//! * metrics and the experiment harness ([`evaluation`]).

pub mod abstraction;
pub mod annotation;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod features;
pub mod generation;
pub mod optim;
pub mod ordinal;
pub mod properties;
pub mod seq2seq;
pub mod taxonomy;
pub mod text;

pub use error::{Error, Result};

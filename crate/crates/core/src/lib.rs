//! Rubric-conditioned vision-language judging.
//!
//! The crate covers three activities:
//!
//! * synthesizing fine-grained rubric feedback data through a staged
//!   generation pipeline ([`synthesis`]),
//! * running rubric-conditioned judges against any chat-completions backend
//!   ([`judge`]),
//! * meta-evaluating judges with correlation, win-rate and bias analyses
//!   ([`metrics`], [`analysis`]).
//!
//! Records are persisted as line-delimited JSON ([`datastore`]); prompts are
//! rendered from text templates ([`prompt_kit`]); model outputs are parsed by
//! [`parser`]; HTTP, caching, retry and the offline stub live in [`backend`].

pub mod analysis;
pub mod backend;
pub mod datastore;
pub mod error;
pub mod judge;
pub mod metrics;
pub mod parser;
pub mod prompt_kit;
pub mod synthesis;

pub use error::{Error, Result};

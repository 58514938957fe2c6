//! Streaming permutation feature importance.
//!
//! `driftwise` explains a model that learns from a data stream. At every step
//! it measures how much the loss grows when one feature is replaced by a value
//! borrowed from a past observation, and smooths those increments over time.

pub mod cli;
pub mod datastream;
pub mod error;
pub mod importance;
pub mod learners;
pub mod sampling;
pub mod theory;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/streams.md")]
    mod streams {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/importance.md")]
    mod importance {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

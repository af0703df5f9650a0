//! Finite-alphabet toolkit for noisy computation: a perfect block function
//! paired with a random channel on the same input, the typical input rate and
//! capacity of such pairs, Feinstein codes built on them, and simulation of
//! the encoder / noisy device / decoder pipeline.

pub mod blocks;
pub mod capacity;
pub mod channels;
pub mod circuits;
pub mod error;
pub mod feinstein;
pub mod prob;
pub mod processes;
pub mod reliable;

pub use error::{Error, Result};

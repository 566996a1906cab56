//! Four-branch driver maneuver anticipation.
//!
//! Inside and outside camera frames plus their motion frames are encoded by
//! separate branches (convolutional backbone, DropBlock, LSTM and global
//! attention for appearance; two stacked LSTMs for motion), fused, and
//! classified into five maneuvers. Evaluation reports accuracy, macro
//! precision, recall and F1 at observation horizons 0 to 4 seconds before
//! the maneuver, with K-fold and test-time voting protocols.

pub mod augment;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod net;
pub mod rng;
pub mod train;

pub use error::{Error, Result};

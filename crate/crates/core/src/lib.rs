//! Synthetic user-specific IMU payment gestures from a regularised autoencoder, and the
//! machinery to measure how much they shorten enrolment for a random-forest authenticator.

pub mod data;
pub mod dissimilarity;
pub mod error;
pub mod features;
pub mod forest;
pub mod genmodel;
pub mod harness;
pub mod metrics;
pub mod plot;
pub mod sampling;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};

//! Simulated RF transmitter fingerprinting.
//!
//! Emitters with individual hardware imperfections send framed packets over
//! scenario-dependent channels; a correlator receiver labels each payload by
//! the decoded header and records it; a 1-D CNN then learns to tell the
//! emitters apart from the raw IQ payload alone.

pub mod channel;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod framing;
pub mod impairments;
pub mod nn;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};

//! Sub-Gaussian mean estimation for heavy-tailed distributions.
//!
//! The pipeline: bucket samples into means, certify centrality of candidate
//! centers with a small SDP, extract and condition dual witnesses, assemble
//! the polynomial feasibility system whose solutions pair centers with
//! witnesses, relax it with a moment SDP, and read the estimate off the
//! resulting pseudoexpectation. A Monte Carlo harness compares confidence
//! radii against baseline estimators.

pub mod error;
pub mod poly;
pub mod sdp;
pub mod sos;
pub mod centrality;
pub mod witness;
pub mod median_sdp;
pub mod estimators;
pub mod harness;

pub use error::{Error, Result};

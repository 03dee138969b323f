//! Feedback-control solvers and a Monte Carlo simulator for cooperative CSI
//! feedback in K-user MISO interference channels.
//!
//! Each receiver decides, slot by slot, how many bits of channel-direction
//! feedback to send to every interfering transmitter. The crate provides:
//!
//! - [`quantizer`]: analytic CSI quantization error laws and a random-codebook quantizer.
//! - [`channel`]: Gauss–Markov fading, CSIT tracking and the (g, δ, β) decomposition.
//! - [`mdp`]: state discretization, kernel estimation, value/policy iteration and
//!   the Lagrangian budget search.
//! - [`structure`]: checks of the monotone threshold structure of optimal policies.
//! - [`highmob`]: water-filling feedback policies for block fading and rate
//!   allocation across interferers with unequal path loss.
//! - [`netsim`]: zero-forcing network simulation with baseline feedback schemes.

pub mod channel;
pub mod cvec;
pub mod error;
pub mod highmob;
pub mod mdp;
pub mod netsim;
pub mod quantizer;
pub mod special;
pub mod structure;

pub use error::{Error, Result};

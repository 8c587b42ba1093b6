//! Energy-efficiency maximization for a NOMA downlink assisted by a
//! simultaneously transmitting and reflecting RIS (STAR-RIS), driven by a
//! DDPG agent that jointly tunes BS beamformers and surface coefficients.

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod config;
pub mod ddpg;
pub mod env;
pub mod error;
pub mod numerics;
pub mod phy;
pub mod units;

pub use error::{Error, Result};

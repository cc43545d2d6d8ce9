//! Link-level Monte-Carlo simulator for a synchronous DS-CDMA uplink over
//! time-varying Rayleigh flat fading, with conventional (MF, SIC, PIC) and
//! blind-adaptive (BA-SIC, BA-PIC) multiuser receivers.

pub mod channel;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod receivers;
pub mod sequences;
pub mod transmitter;

pub use error::{Error, Result};

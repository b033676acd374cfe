//! Link-level simulation and analysis of twin-IRS beam-index modulation at
//! millimeter-wave frequencies.

pub mod analysis;
pub mod beampattern;
pub mod channel;
pub mod cli;
pub mod config;
pub mod detect;
pub mod geometry;
pub mod mapping;
pub mod plot;
pub mod sim;
pub mod snr_opt;
pub mod specialfn;
pub mod stats;

#[cfg(test)]
pub(crate) mod testutil;

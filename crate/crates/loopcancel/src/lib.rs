//! Design and validation toolkit for loop-back interference cancelation in
//! amplify-and-forward single-frequency full-duplex relays.
//!
//! The crate builds a baseband-equivalent hybrid model of the relay loop,
//! synthesizes the H-infinity-optimal digital canceler through
//! fast-sample/fast-hold lifting, and verifies closed-loop stability and
//! OFDM communication quality in a time-domain Monte-Carlo simulator.
//!
//! Start with the `examples/` directory: each major capability has a
//! runnable example (`cargo run --example <name>` from the workspace).

pub mod cli;
pub mod error;
pub mod lti;
pub mod ofdm;
pub mod relay;
pub mod sdh;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};

//! Modeling, de-embedding and parameter estimation for a four-port router
//! cell: one two-level emitter side-coupled to two open waveguides `A` and `B`.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] evaluates the closed-form scattering coefficients of the cell
//!   and the dephasing, thermal, saturation and dressed-state extensions.
//! * [`network`] embeds the cell between input/output line two-ports and
//!   computes what a network analyzer sees, either exactly or as a truncated
//!   multiple-reflection series.
//! * [`calibration`] turns raw four-channel traces into cell responses.
//! * [`estimation`] fits physical rates to calibrated and time-domain data.
//! * [`synth`] produces seeded synthetic campaigns with known ground truth.
//! * [`io`] reads and writes the CSV and Touchstone spectrum formats.
//!
//! All rates and frequencies are angular (rad/s) inside the library. Files
//! and the command line use Hz; see [`units`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod estimation;
pub mod io;
pub mod model;
pub mod network;
pub mod spectrum;
pub mod synth;
pub mod units;

pub use error::{Error, Result};
pub use model::CellParams;
pub use network::{LineModel, PortMatrix};
pub use spectrum::{Channel, ChannelSpectrum};

/// Complex amplitude type used throughout the crate.
pub type C64 = num_complex::Complex64;

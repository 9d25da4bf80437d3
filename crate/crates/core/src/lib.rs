//! Joint localization and channel reconstruction for a single-user link
//! aided by a reconfigurable intelligent surface (RIS).
//!
//! An access point sends OFDM pilots to a user over a direct path and a path
//! reflected by an `M x N` RIS whose phase profile changes every snapshot.
//! The crate synthesizes such measurements, recovers both channels and the
//! user position with mean-field variational inference over a sparse angular
//! dictionary, evaluates the position Cramér–Rao bound, and provides two
//! reference localizers plus a seeded Monte Carlo harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bcrb;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod locate;
pub mod vbi;

pub use error::{Error, Result};

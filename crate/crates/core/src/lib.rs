//! Transient angular stability of parallel grid-following inverters on a
//! weak grid.
//!
//! The crate is layered bottom-up: [`phasor`] arithmetic, the [`network`]
//! reduction, the implicit PCC voltage solve in [`pcc`], time-domain
//! [`dynamics`], and [`stability`] studies on top. [`config`], [`report`]
//! and [`sweep`] back the `gflswing` binary.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod network;
pub mod pcc;
pub mod phasor;
pub mod stability;

pub mod cli;
pub mod config;
pub mod report;
pub mod sweep;

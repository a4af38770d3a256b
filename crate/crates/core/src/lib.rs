//! Gait perturbation training toolkit.
//!
//! The crate covers both halves of a perturbation-based balance training
//! setup built around a heel-mounted 6-axis IMU:
//!
//! - online: [`controller`] estimates the gait phase from heel strikes and
//!   fires randomized 0.5 s forward/backward pulses into an emulated
//!   pneumatic boot, and [`sim`] closes the loop with a synthetic walker;
//! - offline: [`segment`] cuts recordings into steps, [`reference`] averages
//!   unperturbed steps into a per-subject template, [`dtw`] scores each step
//!   against it and [`stats`] compares conditions with a paired Wilcoxon
//!   signed-rank test.
//!
//! [`ingest`] holds the shared data model and the on-disk formats.

pub mod controller;
pub mod dtw;
pub mod ingest;
pub mod reference;
pub mod segment;
pub mod sim;
pub mod stats;

pub use ingest::{Channel, ImuSample, Leg, Recording, Session};

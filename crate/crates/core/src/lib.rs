//! Resource planning for distributed surface-code lattice surgery.
//!
//! Decides whether remote Bell pairs should be consumed raw or distilled by
//! comparing required code distances, Bell-pair and time costs, operating
//! regimes under finite generation rate and memory decay, and per-module
//! physical-qubit budgets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod cost_model;
pub mod distillation;
pub mod error;
pub mod error_model;
pub mod montecarlo;
pub mod temporal;

pub use error::{PlanError, Result};

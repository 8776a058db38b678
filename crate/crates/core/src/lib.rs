//! Estimation of continuous-treatment dose-response curves.

// `!(x > 0.0)` is used on purpose so that NaN is rejected together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod data;
pub mod dgp;
pub mod dist;
pub mod error;
pub mod hoif;
pub mod kernels;
pub mod local_poly;
pub mod nuisance;
pub mod projection;
pub mod pseudo;
pub mod quadrature;
pub mod rates;
pub mod sensitivity;
pub mod series;
pub mod sim;

pub use error::{Error, Result};

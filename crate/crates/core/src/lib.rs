// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod controller;
pub mod error;
pub mod exploration;
pub mod export;
pub mod geometry;
pub mod gradient;
pub mod graph;
pub mod nav2d;
pub mod pusht;
pub mod resolver;

pub use error::{Error, Result};

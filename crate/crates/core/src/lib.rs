#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsp;
pub mod canonical;
pub mod cluster;
pub mod error;
pub mod eval;
pub mod geom;
pub mod icp;
pub mod io;
pub mod labels;
pub mod latent;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod polytope;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod error;
pub mod fiber;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod levels;
pub mod model;
pub mod optimizer;
pub mod potential;
pub mod power;
pub mod problems;
pub mod run;
pub mod verify;

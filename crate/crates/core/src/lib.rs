//! Full counting statistics and first-passage times of monitored open quantum systems.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod block;
pub mod diffusion;
pub mod error;
pub mod fpt;
pub mod jump;
pub mod kur;
pub mod models;
pub mod operator;
pub mod propagate;
pub mod state;
pub mod trajectory;

pub use error::{Error, ErrorKind, Result};
pub use operator::{
    build_jump_super, build_liouvillian, build_no_jump, drazin_inverse, steady_state,
    DensityMatrix, JumpChannel, LindbladModel, Superoperator, C64, CMatrix, CVector,
};

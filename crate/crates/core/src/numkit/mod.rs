//! Minimal dense numeric kernel.
//!
//! Everything here is `f64` and single-threaded; callers parallelise across
//! independent values. All randomness flows through an explicit [`Rng`].

mod gradcheck;
mod matrix;
mod mlp;
mod optim;
mod rng;

pub use gradcheck::{gradient_check, gradient_check_against};
pub use matrix::Matrix;
pub use mlp::{Gradients, Loss, Mlp, OutputHead, Trace};
pub use optim::{sgd_step, Sgd, SgdConfig};
pub use rng::Rng;

//! Dense f64 tensors, reverse-mode differentiation, optimization, and
//! parameter persistence. Everything downstream of the models funnels
//! through this module, so it is the most heavily oracle-tested code in
//! the crate.

pub mod adam;
pub mod params;
pub mod rng;
pub mod schedule;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{Bound, ParamSet};
pub use rng::RngStream;
pub use schedule::LrSchedule;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

//! Small neural-network toolkit over candle tensors: a named parameter store
//! with seeded initialization, thin layer wrappers, gradient reversal, and
//! masked sequence losses. The CPU backend's rng cannot be seeded, so every
//! random draw here (init, dropout) comes from explicitly seeded streams.

mod ctx;
mod grl;
mod layers;
pub mod masked;
mod params;

pub use ctx::ForwardCtx;
pub use grl::grad_reverse;
pub use layers::{Conv1dLayer, Conv2dLayer, Dense, GruCell, Highway, LstmCell, LstmState};
pub use params::{Init, ParamStore};

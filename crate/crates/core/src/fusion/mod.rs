//! Multi-frame fusion: FISTA on the masked-warp degradation model with an l1
//! prior on intensities.

mod fista;
mod operator;
mod pipeline;

pub use fista::{
    data_gradient, estimate_lipschitz, estimate_step, fista_defence, next_momentum, prox_l1,
    soft_threshold, FistaOutcome, FistaParams, FistaProblem, FistaState,
};
pub use operator::DegradationOperator;
pub use pipeline::{defence_pipeline, fill_nearest, DefenceOutput};

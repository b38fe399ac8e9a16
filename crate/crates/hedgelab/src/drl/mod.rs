//! From-scratch distributional actor-critic: dense networks with exact
//! backpropagation, a quantile-regression critic, FIFO replay, target
//! networks, and the training/evaluation loops.

pub mod mlp;
pub mod quantile;
pub mod replay;
pub mod snapshot;
pub mod train;

pub use mlp::{Activation, Adam, ForwardCache, Gradients, Mlp};
pub use quantile::{
    actor_objective, actor_objective_grad, critic_target, quantile_huber_loss, quantile_levels,
    Objective, QuantileDistribution, N_QUANTILES,
};
pub use replay::{ReplayBuffer, StoredTransition};
pub use snapshot::{Actor, PolicySnapshot, SNAPSHOT_VERSION};
pub use train::{evaluate, train, CurvePoint, EnvStep, Environment, TrainError, TrainResult, TrainerConfig};

//! Deep Q-learning: a rectifier MLP Q-network with hand-written
//! backpropagation, Huber loss, AdamW, replay memory, and a target network.

mod agent;
mod checkpoint;
mod network;
mod optim;
mod replay;

pub use agent::{bellman_targets, epsilon_for_epoch, select_action, DqnAgent, DqnConfig};
pub use checkpoint::{AgentCheckpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use network::{argmax, huber_grad, huber_loss, QNetwork};
pub use optim::{clip_grad_norm, AdamW, AdamWConfig};
pub use replay::{ReplayMemory, Transition};

//! Multi-agent soft actor-critic for hybrid discrete-continuous actions,
//! with centralized critics, a deterministic 2-D particle world, and a
//! reproducible training/evaluation harness.

pub mod autodiff;
pub mod harness;
pub mod heads;
pub mod learner;
pub mod replay;
pub mod world;

pub use autodiff::adam::{Adam, AdamParams};
pub use autodiff::{grad_check, GradError, Tape, Tensor, Var};
pub use heads::{ActorNet, CriticNet, EntropyWeights, HybridAction, PolicyOutput};
pub use learner::{AgentLearner, LearnerSettings, UpdateReport};

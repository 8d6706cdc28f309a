//! Experiment orchestration: configuration files, seed-stream discipline,
//! training loops, checkpoints, evaluation, and cross-play tournaments.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod seeds;
pub mod train;

use crate::heads::HeadError;
use crate::learner::LearnError;
use crate::replay::ReplayError;
use crate::world::WorldError;
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{Algorithm, ExperimentConfig};
pub use eval::{cross_play, evaluate, evaluate_range, EpisodeRecord, EvalRun, EvalSummary};
pub use seeds::{stream_rng, StreamKind};
pub use train::{build_team, run_training, TrainReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Checkpoint(String),
    #[error("non-finite {what} at episode {episode}, step {step}")]
    NonFiniteMetric {
        what: &'static str,
        episode: u64,
        step: u64,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Head(#[from] HeadError),
}

impl HarnessError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Discounted return of one reward sequence from its first step:
/// `sum_t gamma^t r_t`.  `gamma = 1` gives the plain sum, `gamma = 0` the
/// first reward.
pub fn episode_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for &r in rewards {
        total += weight * r;
        weight *= gamma;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episode_return_matches_hand_values() {
        assert_eq!(episode_return(&[1.0, 1.0, 1.0], 0.0), 1.0);
        assert_eq!(episode_return(&[1.0, 1.0, 1.0], 1.0), 3.0);
        assert_eq!(episode_return(&[1.0, 2.0, 3.0], 0.5), 2.75);
        assert_eq!(episode_return(&[], 0.9), 0.0);
    }
}

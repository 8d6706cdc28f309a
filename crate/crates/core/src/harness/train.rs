//! The training loop: episode rollouts feeding a replay buffer, periodic
//! team updates, trailing-window metrics rows, and rolling checkpoints.
//! Single-threaded by design so a (config, seed) pair fully determines
//! every byte of output.

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::config::ExperimentConfig;
use super::seeds::{stream_rng, StreamKind};
use super::HarnessError;
use crate::learner::{assemble_batch, update_all, AgentLearner, UpdateReport};
use crate::replay::{ReplayBuffer, Transition};
use crate::world::{World, CONTINUOUS_DIM, DISCRETE_MOVES};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const METRICS_HEADER: &str = "episode,mean_team_reward_100,actor_loss,critic_loss,entropy_est";
pub const METRICS_EVERY: u64 = 100;
pub const CHECKPOINT_EVERY: u64 = 2000;

#[derive(Debug)]
pub struct TrainReport {
    pub episodes: u64,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Builds the world and one learner per agent, each initialized from its
/// own seed stream so team composition changes never reshuffle another
/// agent's weights.
pub fn build_team(cfg: &ExperimentConfig) -> Result<(World, Vec<AgentLearner>), HarnessError> {
    let world = World::new(cfg.scenario_config())?;
    let dims = world.obs_dims();
    let settings = cfg.learner_settings();
    let mut learners = Vec::with_capacity(world.num_agents());
    for i in 0..world.num_agents() {
        let algo = cfg.algorithm_for_agent(i, world.prey_index());
        let mut rng = stream_rng(cfg.seed, StreamKind::Init, i as u64);
        learners.push(AgentLearner::new(
            i,
            &dims,
            DISCRETE_MOVES,
            CONTINUOUS_DIM,
            algo.centralized(),
            &settings,
            &mut rng,
        )?);
    }
    Ok((world, learners))
}

struct MetricsWriter {
    file: std::io::BufWriter<std::fs::File>,
    path: PathBuf,
}

impl MetricsWriter {
    /// Creates the metrics file with a config echo and header, or appends
    /// to an existing one when resuming.
    fn open(path: &Path, cfg: &ExperimentConfig, append: bool) -> Result<Self, HarnessError> {
        let exists = path.exists();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(append && exists)
            .write(true)
            .truncate(!(append && exists))
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        let mut writer = MetricsWriter {
            file: std::io::BufWriter::new(file),
            path: path.to_path_buf(),
        };
        if !(append && exists) {
            let mut head = String::new();
            for line in cfg.to_text().lines() {
                head.push_str("# ");
                head.push_str(line);
                head.push('\n');
            }
            head.push_str(METRICS_HEADER);
            head.push('\n');
            writer.write(&head)?;
        }
        Ok(writer)
    }

    fn write(&mut self, s: &str) -> Result<(), HarnessError> {
        self.file
            .write_all(s.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| HarnessError::io(&self.path, e))
    }

    fn row(
        &mut self,
        episode: u64,
        reward: f64,
        actor_loss: f64,
        critic_loss: f64,
        entropy_est: f64,
    ) -> Result<(), HarnessError> {
        self.write(&format!(
            "{episode},{reward:?},{actor_loss:?},{critic_loss:?},{entropy_est:?}\n"
        ))
    }
}

#[derive(Default)]
struct LossWindow {
    actor: f64,
    critic: f64,
    entropy: f64,
    count: u64,
}

impl LossWindow {
    fn add(&mut self, r: &UpdateReport) {
        self.actor += r.actor_loss;
        self.critic += r.critic_loss;
        self.entropy += r.mean_entropy_estimate;
        self.count += 1;
    }

    fn means(&self) -> (f64, f64, f64) {
        if self.count == 0 {
            return (0.0, 0.0, 0.0);
        }
        let n = self.count as f64;
        (self.actor / n, self.critic / n, self.entropy / n)
    }
}

/// Runs (or resumes) one training experiment, writing metrics and a rolling
/// checkpoint under `out_dir`.
pub fn run_training(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainReport, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let metrics_path = out_dir.join(&cfg.metrics_path);
    let checkpoint_path = out_dir.join(&cfg.checkpoint_path);

    let (mut world, mut learners) = build_team(cfg)?;
    let mut start_episode = 0u64;
    if let Some(ckpt) = resume {
        let loaded = load_checkpoint(ckpt)?;
        if loaded.config.scenario != cfg.scenario {
            return Err(HarnessError::Config(format!(
                "resume checkpoint trained {} but the config asks for {}",
                loaded.config.scenario.name(),
                cfg.scenario.name()
            )));
        }
        for (i, learner) in loaded.learners.iter().enumerate() {
            let want = cfg.algorithm_for_agent(i, world.prey_index()).centralized();
            if learner.centralized != want {
                return Err(HarnessError::Config(format!(
                    "resume checkpoint agent {i} critic mode does not match the config"
                )));
            }
        }
        if loaded.episode >= cfg.episodes {
            return Err(HarnessError::Config(format!(
                "checkpoint is already at episode {}, config asks for {}",
                loaded.episode, cfg.episodes
            )));
        }
        start_episode = loaded.episode;
        learners = loaded.learners;
    }

    let mut metrics = MetricsWriter::open(&metrics_path, cfg, start_episode > 0)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, world.obs_dims())?;
    let episode_length = cfg.episode_length as u64;
    let mut global_step = start_episode * episode_length;
    let mut reward_window: Vec<f64> = Vec::new();
    let mut losses = LossWindow::default();

    for e in start_episode..cfg.episodes {
        let mut env_rng = stream_rng(cfg.seed, StreamKind::Env, e);
        let mut action_rng = stream_rng(cfg.seed, StreamKind::Action, e);
        let mut obs = world.reset(&mut env_rng);
        let mut team_reward = 0.0;

        for _ in 0..episode_length {
            let mut actions = Vec::with_capacity(learners.len());
            for (learner, o) in learners.iter().zip(&obs) {
                actions.push(learner.act(o, &mut action_rng, false)?);
            }
            let outcome = world.step(&actions)?;
            team_reward += outcome.rewards.iter().sum::<f64>();
            let next_obs = outcome.observations;
            buffer.push(Transition {
                observations: obs,
                actions,
                rewards: outcome.rewards,
                next_observations: next_obs.clone(),
                done: outcome.done,
            })?;
            obs = next_obs;
            global_step += 1;

            if buffer.len() >= cfg.warmup && global_step % cfg.update_period == 0 {
                let mut replay_rng = stream_rng(cfg.seed, StreamKind::Replay, global_step);
                let sampled = buffer.sample(cfg.batch_size, &mut replay_rng)?;
                let batch = assemble_batch(&sampled)?;
                let mut update_rng = stream_rng(cfg.seed, StreamKind::Update, global_step);
                let reports = update_all(&mut learners, &batch, cfg.tau, &mut update_rng)?;
                for r in &reports {
                    let finite = r.actor_loss.is_finite()
                        && r.critic_loss.is_finite()
                        && r.mean_entropy_estimate.is_finite()
                        && r.mean_q.is_finite();
                    if !finite {
                        return Err(HarnessError::NonFiniteMetric {
                            what: "update report",
                            episode: e,
                            step: global_step,
                        });
                    }
                    losses.add(r);
                }
            }
        }

        reward_window.push(team_reward);
        let done_episodes = e + 1;
        if done_episodes % METRICS_EVERY == 0 {
            let mean_reward =
                reward_window.iter().sum::<f64>() / reward_window.len() as f64;
            if !mean_reward.is_finite() {
                return Err(HarnessError::NonFiniteMetric {
                    what: "mean team reward",
                    episode: e,
                    step: global_step,
                });
            }
            let (actor, critic, entropy) = losses.means();
            metrics.row(done_episodes, mean_reward, actor, critic, entropy)?;
            reward_window.clear();
            losses = LossWindow::default();
        }
        if done_episodes % CHECKPOINT_EVERY == 0 {
            save_checkpoint(&checkpoint_path, done_episodes, cfg, &learners)?;
        }
    }

    save_checkpoint(&checkpoint_path, cfg.episodes, cfg, &learners)?;
    Ok(TrainReport {
        episodes: cfg.episodes,
        metrics_path,
        checkpoint_path,
    })
}

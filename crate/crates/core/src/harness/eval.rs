//! Deterministic-policy evaluation and cross-play tournaments.
//!
//! Episodes are keyed by index into their own seed streams, so evaluation
//! can be split into shards and merged back with results identical to a
//! single pass: the merge re-orders per-episode records by index and
//! reduces them in that order.

use super::checkpoint::Checkpoint;
use super::seeds::{stream_rng, StreamKind};
use super::{episode_return, HarnessError};
use crate::learner::AgentLearner;
use crate::world::{EpisodeMetrics, Scenario, World};
use std::io::Write;

/// Everything measured in one evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub index: u64,
    /// Undiscounted per-agent returns.
    pub agent_returns: Vec<f64>,
    /// Undiscounted sum over the team.
    pub team_return: f64,
    /// Discounted sum over the team at the training gamma.
    pub team_return_discounted: f64,
    pub metrics: EpisodeMetrics,
}

/// A batch of evaluated episodes, mergeable across shards.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
}

/// Aggregate means over an [`EvalRun`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub episodes: u64,
    pub seed: u64,
    pub mean_agent_returns: Vec<f64>,
    pub mean_team_return: f64,
    pub mean_team_return_discounted: f64,
    pub mean_collisions: f64,
    pub mean_dist: f64,
    pub mean_touches: f64,
}

impl EvalRun {
    /// Combines shards into one run.  Records are re-ordered by episode
    /// index; duplicate or missing indices are rejected, so a merged run
    /// aggregates exactly like the equivalent single pass.
    pub fn merge(shards: Vec<EvalRun>) -> Result<EvalRun, HarnessError> {
        let mut iter = shards.into_iter();
        let mut merged = iter.next().ok_or_else(|| {
            HarnessError::Config("cannot merge zero evaluation shards".to_string())
        })?;
        for shard in iter {
            if shard.seed != merged.seed {
                return Err(HarnessError::Config(format!(
                    "evaluation shards used different seeds: {} vs {}",
                    merged.seed, shard.seed
                )));
            }
            merged.records.extend(shard.records);
        }
        merged.records.sort_by_key(|r| r.index);
        for pair in merged.records.windows(2) {
            if pair[0].index == pair[1].index {
                return Err(HarnessError::Config(format!(
                    "duplicate evaluation episode index {}",
                    pair[0].index
                )));
            }
        }
        Ok(merged)
    }

    pub fn summary(&self) -> EvalSummary {
        let n = self.records.len().max(1) as f64;
        let agents = self
            .records
            .first()
            .map(|r| r.agent_returns.len())
            .unwrap_or(0);
        let mut sum_agent = vec![0.0; agents];
        let mut sum_team = 0.0;
        let mut sum_team_disc = 0.0;
        let mut sum_coll = 0.0;
        let mut sum_dist = 0.0;
        let mut sum_touch = 0.0;
        for r in &self.records {
            for (s, v) in sum_agent.iter_mut().zip(&r.agent_returns) {
                *s += v;
            }
            sum_team += r.team_return;
            sum_team_disc += r.team_return_discounted;
            sum_coll += r.metrics.collisions as f64;
            sum_dist += r.metrics.dist;
            sum_touch += r.metrics.touches as f64;
        }
        EvalSummary {
            episodes: self.records.len() as u64,
            seed: self.seed,
            mean_agent_returns: sum_agent.into_iter().map(|s| s / n).collect(),
            mean_team_return: sum_team / n,
            mean_team_return_discounted: sum_team_disc / n,
            mean_collisions: sum_coll / n,
            mean_dist: sum_dist / n,
            mean_touches: sum_touch / n,
        }
    }
}

impl EvalSummary {
    pub const CSV_HEADER: &'static str =
        "episodes,seed,mean_team_return,mean_team_return_discounted,mean_collisions,mean_dist,mean_touches";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:?},{:?},{:?},{:?},{:?}",
            self.episodes,
            self.seed,
            self.mean_team_return,
            self.mean_team_return_discounted,
            self.mean_collisions,
            self.mean_dist,
            self.mean_touches
        )
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("episodes                 {}\n", self.episodes));
        s.push_str(&format!("seed                     {}\n", self.seed));
        s.push_str(&format!(
            "mean team return         {:.6}\n",
            self.mean_team_return
        ));
        s.push_str(&format!(
            "mean team return (disc.) {:.6}\n",
            self.mean_team_return_discounted
        ));
        for (i, r) in self.mean_agent_returns.iter().enumerate() {
            s.push_str(&format!("mean return agent {i}      {r:.6}\n"));
        }
        s.push_str(&format!(
            "mean collisions/episode  {:.6}\n",
            self.mean_collisions
        ));
        s.push_str(&format!(
            "mean dist/episode        {:.6}\n",
            self.mean_dist
        ));
        s.push_str(&format!(
            "mean touches/episode     {:.6}\n",
            self.mean_touches
        ));
        s
    }
}

/// Evaluates episodes `[start, start + count)` with deterministic policies,
/// optionally dumping `episode,step,entity,x,y,vx,vy` trajectory rows.
pub fn evaluate_range(
    world: &mut World,
    learners: &[AgentLearner],
    seed: u64,
    start: u64,
    count: u64,
    gamma: f64,
    mut trajectory_sink: Option<&mut dyn Write>,
) -> Result<EvalRun, HarnessError> {
    let n = world.num_agents();
    let steps = world.config().episode_length;
    let mut records = Vec::with_capacity(count as usize);

    for index in start..start + count {
        let mut rng = stream_rng(seed, StreamKind::Eval, index);
        let mut obs = world.reset(&mut rng);
        if let Some(sink) = trajectory_sink.as_deref_mut() {
            dump_state(sink, world, index, 0)?;
        }
        let mut rewards: Vec<Vec<f64>> = vec![Vec::with_capacity(steps as usize); n];
        let mut team: Vec<f64> = Vec::with_capacity(steps as usize);
        for step in 1..=steps {
            let mut actions = Vec::with_capacity(n);
            for (learner, o) in learners.iter().zip(&obs) {
                actions.push(learner.act(o, &mut rng, true)?);
            }
            let outcome = world.step(&actions)?;
            for (seq, r) in rewards.iter_mut().zip(&outcome.rewards) {
                seq.push(*r);
            }
            team.push(outcome.rewards.iter().sum());
            obs = outcome.observations;
            if let Some(sink) = trajectory_sink.as_deref_mut() {
                dump_state(sink, world, index, step)?;
            }
        }
        let metrics = world.episode_metrics()?;
        records.push(EpisodeRecord {
            index,
            agent_returns: rewards.iter().map(|seq| episode_return(seq, 1.0)).collect(),
            team_return: episode_return(&team, 1.0),
            team_return_discounted: episode_return(&team, gamma),
            metrics,
        });
    }
    Ok(EvalRun { seed, records })
}

fn dump_state(
    sink: &mut dyn Write,
    world: &World,
    episode: u64,
    step: u32,
) -> Result<(), HarnessError> {
    let state = world.state();
    for (entity, (p, v)) in state
        .positions
        .iter()
        .zip(&state.velocities)
        .enumerate()
    {
        writeln!(
            sink,
            "{episode},{step},{entity},{:?},{:?},{:?},{:?}",
            p[0], p[1], v[0], v[1]
        )
        .map_err(|e| HarnessError::Io {
            path: "<trajectory sink>".to_string(),
            source: e,
        })?;
    }
    Ok(())
}

/// Full evaluation pass over `episodes` fresh episodes.
pub fn evaluate(
    world: &mut World,
    learners: &[AgentLearner],
    seed: u64,
    episodes: u64,
    gamma: f64,
) -> Result<EvalSummary, HarnessError> {
    Ok(evaluate_range(world, learners, seed, 0, episodes, gamma, None)?.summary())
}

/// Evaluates predators from one checkpoint against prey from another.
pub fn cross_play(
    predators: &Checkpoint,
    prey: &Checkpoint,
    episodes: u64,
    seed: u64,
) -> Result<EvalSummary, HarnessError> {
    for (label, ckpt) in [("predator", predators), ("prey", prey)] {
        if ckpt.config.scenario != Scenario::PredatorPrey {
            return Err(HarnessError::Checkpoint(format!(
                "{label} checkpoint was trained on {}, cross-play needs predator_prey",
                ckpt.config.scenario.name()
            )));
        }
    }
    if predators.config.scenario_config() != prey.config.scenario_config() {
        return Err(HarnessError::Checkpoint(
            "checkpoints use different environment parameters".to_string(),
        ));
    }
    let mut world = World::new(predators.config.scenario_config())?;
    let prey_index = world
        .prey_index()
        .expect("predator_prey world has a prey slot");
    let mut team: Vec<AgentLearner> = Vec::with_capacity(world.num_agents());
    for i in 0..world.num_agents() {
        let source = if i == prey_index { prey } else { predators };
        team.push(source.learners[i].clone());
    }
    let gamma = predators.config.gamma;
    evaluate(&mut world, &team, seed, episodes, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::train::build_team;

    fn small_team(scenario: Scenario) -> (ExperimentConfig, World, Vec<AgentLearner>) {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario = scenario;
        cfg.hidden = 8;
        cfg.seed = 11;
        let (world, learners) = build_team(&cfg).unwrap();
        (cfg, world, learners)
    }

    #[test]
    fn sharded_evaluation_merges_to_the_single_pass_exactly() {
        let (cfg, mut world, learners) = small_team(Scenario::CoopNav);
        let full = evaluate_range(&mut world, &learners, cfg.seed, 0, 8, cfg.gamma, None)
            .unwrap();
        let shard_a =
            evaluate_range(&mut world, &learners, cfg.seed, 0, 3, cfg.gamma, None).unwrap();
        let shard_b =
            evaluate_range(&mut world, &learners, cfg.seed, 3, 5, cfg.gamma, None).unwrap();
        let merged = EvalRun::merge(vec![shard_b, shard_a]).unwrap();
        assert_eq!(merged, full);
        assert_eq!(merged.summary(), full.summary());
    }

    #[test]
    fn merge_rejects_duplicates_and_mixed_seeds() {
        let (cfg, mut world, learners) = small_team(Scenario::CoopNav);
        let a = evaluate_range(&mut world, &learners, cfg.seed, 0, 2, cfg.gamma, None).unwrap();
        let dup = a.clone();
        assert!(EvalRun::merge(vec![a.clone(), dup]).is_err());
        let mut b = evaluate_range(&mut world, &learners, cfg.seed, 2, 2, cfg.gamma, None)
            .unwrap();
        b.seed = cfg.seed + 1;
        assert!(EvalRun::merge(vec![a, b]).is_err());
    }

    #[test]
    fn repeated_evaluation_is_identical_and_mutates_nothing() {
        let (cfg, mut world, learners) = small_team(Scenario::CoopNav);
        let before: Vec<Vec<f64>> = learners
            .iter()
            .flat_map(|l| l.named_params().into_iter().map(|(_, t)| t.data().to_vec()))
            .collect();
        let one = evaluate(&mut world, &learners, cfg.seed, 5, cfg.gamma).unwrap();
        let two = evaluate(&mut world, &learners, cfg.seed, 5, cfg.gamma).unwrap();
        assert_eq!(one, two);
        let after: Vec<Vec<f64>> = learners
            .iter()
            .flat_map(|l| l.named_params().into_iter().map(|(_, t)| t.data().to_vec()))
            .collect();
        assert_eq!(before, after);
        assert!(one.mean_dist > 0.0, "random policies never cover exactly");
        assert!(one.mean_team_return.is_finite());
    }

    #[test]
    fn trajectory_dump_has_one_row_per_entity_per_step() {
        let (cfg, mut world, learners) = small_team(Scenario::CoopNav);
        let mut sink: Vec<u8> = Vec::new();
        evaluate_range(
            &mut world,
            &learners,
            cfg.seed,
            0,
            2,
            cfg.gamma,
            Some(&mut sink),
        )
        .unwrap();
        let text = String::from_utf8(sink).unwrap();
        let entities = world.entities().len();
        let expected = 2 * (world.config().episode_length as usize + 1) * entities;
        assert_eq!(text.lines().count(), expected);
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("0,0,0,"), "{first}");
        for field in first.split(',').skip(3) {
            let v: f64 = field.parse().unwrap();
            assert!(v.is_finite());
        }
    }

    #[test]
    fn cross_play_self_matchup_reproduces_self_play() {
        let (cfg, mut world, learners) = small_team(Scenario::PredatorPrey);
        let self_play = evaluate(&mut world, &learners, 99, 4, cfg.gamma).unwrap();
        let ckpt = Checkpoint {
            episode: 0,
            config: cfg.clone(),
            learners,
        };
        let crossed = cross_play(&ckpt, &ckpt, 4, 99).unwrap();
        assert_eq!(crossed.mean_touches, self_play.mean_touches);
        assert_eq!(crossed.mean_team_return, self_play.mean_team_return);
    }

    #[test]
    fn cross_play_rejects_wrong_scenarios() {
        let (coop_cfg, _, coop_learners) = small_team(Scenario::CoopNav);
        let (pp_cfg, _, pp_learners) = small_team(Scenario::PredatorPrey);
        let coop = Checkpoint {
            episode: 0,
            config: coop_cfg,
            learners: coop_learners,
        };
        let pp = Checkpoint {
            episode: 0,
            config: pp_cfg,
            learners: pp_learners,
        };
        let err = cross_play(&coop, &pp, 2, 1).unwrap_err();
        assert!(err.to_string().contains("coop_nav"), "{err}");
        let err = cross_play(&pp, &coop, 2, 1).unwrap_err();
        assert!(err.to_string().contains("prey checkpoint"), "{err}");
    }

    #[test]
    fn cross_play_rejects_mismatched_environments() {
        let (mut cfg_a, _, learners_a) = small_team(Scenario::PredatorPrey);
        let (_, _, learners_b) = small_team(Scenario::PredatorPrey);
        let mut cfg_b = cfg_a.clone();
        cfg_b.prey_max_speed = 2.0;
        cfg_a.prey_max_speed = 1.3;
        let a = Checkpoint {
            episode: 0,
            config: cfg_a,
            learners: learners_a,
        };
        let b = Checkpoint {
            episode: 0,
            config: cfg_b,
            learners: learners_b,
        };
        let err = cross_play(&a, &b, 2, 1).unwrap_err();
        assert!(err.to_string().contains("environment"), "{err}");
    }
}

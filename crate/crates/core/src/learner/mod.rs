//! Per-agent soft actor-critic update engine for hybrid actions.
//!
//! Each agent owns one stochastic actor, twin critics, and slowly-tracking
//! target copies of all three.  In centralized mode a critic conditions on
//! every agent's observation, every agent's continuous action, and one-hot
//! encodings of the *other* agents' discrete actions, while its K outputs
//! index the owner's discrete action.  In decentralized mode the critic sees
//! only the owner's observation and continuous action, which turns the team
//! into independent single-agent learners.
//!
//! Bellman targets follow the rewarded-entropy convention:
//! `y = r + gamma * (1 - done) * (min(Q1bar, Q2bar)[a'] - alpha_d log pi_d(a')
//! - alpha_c log pi_c(a'))` with next actions drawn from the target actors.

use crate::autodiff::adam::{Adam, AdamParams};
use crate::autodiff::{GradError, Tape, Tensor, Var};
use crate::heads::dist::{
    categorical_entropy, categorical_sample, standard_normal, tanh_gaussian_sample,
    tanh_gaussian_sample_graph, DistError, JACOBIAN_EPS,
};
use crate::heads::{
    hybrid_neg_log_prob, ActorNet, ActorVars, CriticNet, EntropyWeights, HeadError, HybridAction,
    MlpVars, PolicyOutput,
};
use crate::replay::Transition;
use rand::Rng;
use thiserror::Error;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch field {field} has {got} entries for agent count {expected}")]
    BatchShape {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite {what}, update skipped")]
    NonFinite { what: &'static str },
    #[error("soft update rate {0} outside [0, 1]")]
    BadTau(f64),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("parameter {name} has shape {got}, expected {expected}")]
    ParamShape {
        name: String,
        expected: String,
        got: String,
    },
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Grad(#[from] GradError),
}

/// Column layout of a sampled minibatch: everything flattened per agent,
/// row-major over the batch dimension.
pub struct Batch {
    pub size: usize,
    pub obs: Vec<Vec<f64>>,
    pub next_obs: Vec<Vec<f64>>,
    pub disc: Vec<Vec<usize>>,
    pub cont: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub done: Vec<f64>,
}

/// Flattens sampled transitions into the per-agent column layout.
pub fn assemble_batch(transitions: &[&Transition]) -> Result<Batch, LearnError> {
    let first = transitions.first().ok_or(LearnError::EmptyBatch)?;
    let n = first.observations.len();
    let size = transitions.len();
    let mut batch = Batch {
        size,
        obs: vec![Vec::new(); n],
        next_obs: vec![Vec::new(); n],
        disc: vec![Vec::with_capacity(size); n],
        cont: vec![Vec::new(); n],
        rewards: vec![Vec::with_capacity(size); n],
        done: Vec::with_capacity(size),
    };
    for t in transitions {
        if t.observations.len() != n {
            return Err(LearnError::BatchShape {
                field: "observations",
                expected: n,
                got: t.observations.len(),
            });
        }
        for agent in 0..n {
            batch.obs[agent].extend(&t.observations[agent]);
            batch.next_obs[agent].extend(&t.next_observations[agent]);
            batch.disc[agent].push(t.actions[agent].discrete);
            batch.cont[agent].extend(&t.actions[agent].continuous);
            batch.rewards[agent].push(t.rewards[agent]);
        }
        batch.done.push(if t.done { 1.0 } else { 0.0 });
    }
    Ok(batch)
}

/// Joint critic input for one time point.  Centralized: all observations,
/// then all continuous actions, then one-hots of every *other* agent's
/// discrete action, in agent-index order.  Decentralized: own observation
/// and continuous action only.
pub fn build_critic_input(
    observations: &[&[f64]],
    continuous: &[&[f64]],
    discrete: &[usize],
    k: usize,
    own_index: usize,
    centralized: bool,
) -> Vec<f64> {
    if !centralized {
        let mut input =
            Vec::with_capacity(observations[own_index].len() + continuous[own_index].len());
        input.extend(observations[own_index]);
        input.extend(continuous[own_index]);
        return input;
    }
    let mut input = Vec::new();
    for obs in observations {
        input.extend(*obs);
    }
    for cont in continuous {
        input.extend(*cont);
    }
    for (j, &d) in discrete.iter().enumerate() {
        if j == own_index {
            continue;
        }
        let mut onehot = vec![0.0; k];
        onehot[d] = 1.0;
        input.extend(onehot);
    }
    input
}

/// Scalar Bellman backup with the entropy bonus added to the bootstrap.
pub fn bellman_target(
    reward: f64,
    gamma: f64,
    done: bool,
    min_target_q: f64,
    weighted_neg_log_prob: f64,
) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (min_target_q + weighted_neg_log_prob)
    }
}

/// Per-agent learner statistics for one committed update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_entropy_estimate: f64,
    pub mean_q: f64,
}

/// Learner hyperparameters that live inside the agent.
#[derive(Debug, Clone, Copy)]
pub struct LearnerSettings {
    pub gamma: f64,
    pub weights: EntropyWeights,
    pub lr: f64,
    pub hidden: usize,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        LearnerSettings {
            gamma: 0.95,
            weights: EntropyWeights {
                alpha_d: 0.05,
                alpha_c: 0.05,
            },
            lr: 3e-4,
            hidden: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentLearner {
    pub index: usize,
    pub centralized: bool,
    pub gamma: f64,
    pub weights: EntropyWeights,
    obs_dims: Vec<usize>,
    k: usize,
    c: usize,
    pub actor: ActorNet,
    pub critic1: CriticNet,
    pub critic2: CriticNet,
    pub target_actor: ActorNet,
    pub target_critic1: CriticNet,
    pub target_critic2: CriticNet,
    actor_opt: Adam,
    critic_opt: Adam,
}

/// Everything `build_actor_loss` needs besides the networks.
pub struct ActorLossContext<'a> {
    pub batch: &'a Batch,
    /// Pre-drawn standard normal noise, shape `[batch, C]`.
    pub xi: &'a Tensor,
    pub own_index: usize,
    pub centralized: bool,
    pub weights: EntropyWeights,
    pub k: usize,
}

/// Actor loss graph plus the intermediate values reports are derived from.
pub struct ActorLossGraph {
    pub loss: Var,
    pub logits: Var,
    pub mean: Var,
    pub log_std: Var,
    pub action: Var,
    pub qmin: Var,
}

/// Builds the full actor objective on the tape:
/// `mean_b [ sum_k pi_k (alpha_d log pi_k - minQ_k) + alpha_c log pi_c ]`
/// with the continuous action reparameterized from the current actor and
/// other agents' actions taken from the batch.
pub fn build_actor_loss(
    tape: &mut Tape,
    actor: &ActorVars,
    critic1: &MlpVars,
    critic2: &MlpVars,
    ctx: &ActorLossContext,
) -> Result<ActorLossGraph, LearnError> {
    let batch = ctx.batch;
    let b = batch.size;
    let i = ctx.own_index;
    let obs_dim = batch.obs[i].len() / b;

    let obs = tape.constant(Tensor::new(vec![b, obs_dim], batch.obs[i].clone())?);
    let heads = actor.forward(tape, obs)?;
    let sample = tanh_gaussian_sample_graph(tape, heads.mean, heads.log_std, ctx.xi)?;

    // Joint critic input, with the own continuous block carrying gradient.
    let critic_input = if ctx.centralized {
        let mut parts = Vec::new();
        for obs_j in &batch.obs {
            let d = obs_j.len() / b;
            parts.push(tape.constant(Tensor::new(vec![b, d], obs_j.clone())?));
        }
        for (j, cont_j) in batch.cont.iter().enumerate() {
            if j == i {
                parts.push(sample.action);
            } else {
                let d = cont_j.len() / b;
                parts.push(tape.constant(Tensor::new(vec![b, d], cont_j.clone())?));
            }
        }
        for (j, disc_j) in batch.disc.iter().enumerate() {
            if j == i {
                continue;
            }
            let mut onehot = vec![0.0; b * ctx.k];
            for (row, &d) in disc_j.iter().enumerate() {
                onehot[row * ctx.k + d] = 1.0;
            }
            parts.push(tape.constant(Tensor::new(vec![b, ctx.k], onehot)?));
        }
        tape.concat(&parts)?
    } else {
        let own_obs = tape.constant(Tensor::new(vec![b, obs_dim], batch.obs[i].clone())?);
        tape.concat(&[own_obs, sample.action])?
    };

    let q1 = critic1.forward(tape, critic_input)?;
    let q2 = critic2.forward(tape, critic_input)?;
    let qmin = tape.minimum(q1, q2)?;

    let lsm = tape.log_softmax(heads.logits)?;
    let probs = tape.exp(lsm);
    let scaled_lsm = tape.mul_scalar(lsm, ctx.weights.alpha_d);
    let inner = tape.sub(scaled_lsm, qmin)?;
    let weighted = tape.mul(probs, inner)?;
    let discrete_sum = tape.sum(weighted);
    let discrete_part = tape.mul_scalar(discrete_sum, 1.0 / b as f64);
    let cont_part = tape.mul_scalar(sample.log_prob_sum, ctx.weights.alpha_c / b as f64);
    let loss = tape.add(discrete_part, cont_part)?;
    Ok(ActorLossGraph {
        loss,
        logits: heads.logits,
        mean: heads.mean,
        log_std: heads.log_std,
        action: sample.action,
        qmin,
    })
}

/// Builds the twin-critic regression loss on the tape:
/// `0.5 * mean over batch and both critics of (Q[a^d] - y)^2`.
pub fn build_critic_loss(
    tape: &mut Tape,
    critic1: &MlpVars,
    critic2: &MlpVars,
    input: Var,
    own_disc: &[usize],
    targets: Var,
) -> Result<Var, LearnError> {
    let b = own_disc.len();
    let q1 = critic1.forward(tape, input)?;
    let q2 = critic2.forward(tape, input)?;
    let picked1 = tape.gather(q1, own_disc)?;
    let picked2 = tape.gather(q2, own_disc)?;
    let err1 = tape.sub(picked1, targets)?;
    let err2 = tape.sub(picked2, targets)?;
    let sq1 = tape.square(err1);
    let sq2 = tape.square(err2);
    let sum1 = tape.sum(sq1);
    let sum2 = tape.sum(sq2);
    let total = tape.add(sum1, sum2)?;
    Ok(tape.mul_scalar(total, 0.25 / b as f64))
}

impl AgentLearner {
    pub fn new<R: Rng>(
        index: usize,
        obs_dims: &[usize],
        k: usize,
        c: usize,
        centralized: bool,
        settings: &LearnerSettings,
        rng: &mut R,
    ) -> Result<Self, LearnError> {
        let n = obs_dims.len();
        let critic_input_dim = if centralized {
            obs_dims.iter().sum::<usize>() + c * n + k * (n - 1)
        } else {
            obs_dims[index] + c
        };
        let actor = ActorNet::new(obs_dims[index], k, c, settings.hidden, rng)?;
        let critic1 = CriticNet::new(critic_input_dim, k, settings.hidden, rng)?;
        let critic2 = CriticNet::new(critic_input_dim, k, settings.hidden, rng)?;
        let target_actor = actor.clone();
        let target_critic1 = critic1.clone();
        let target_critic2 = critic2.clone();
        let actor_sizes: Vec<usize> = actor.params().iter().map(|t| t.numel()).collect();
        let critic_sizes: Vec<usize> = critic1
            .mlp
            .layers()
            .iter()
            .chain(critic2.mlp.layers())
            .flat_map(|l| [l.weight.numel(), l.bias.numel()])
            .collect();
        Ok(AgentLearner {
            index,
            centralized,
            gamma: settings.gamma,
            weights: settings.weights,
            obs_dims: obs_dims.to_vec(),
            k,
            c,
            actor,
            critic1,
            critic2,
            target_actor,
            target_critic1,
            target_critic2,
            actor_opt: Adam::new(AdamParams::with_lr(settings.lr), &actor_sizes)?,
            critic_opt: Adam::new(AdamParams::with_lr(settings.lr), &critic_sizes)?,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dims[self.index]
    }

    pub fn discrete_count(&self) -> usize {
        self.k
    }

    pub fn continuous_dim(&self) -> usize {
        self.c
    }

    /// Local-observation action selection.  Stochastic mode samples both
    /// heads; deterministic mode takes the argmax logit and `tanh(mean)`.
    pub fn act<R: Rng>(
        &self,
        obs: &[f64],
        rng: &mut R,
        deterministic: bool,
    ) -> Result<HybridAction, LearnError> {
        let out = self.actor.policy_output(obs)?;
        if deterministic {
            let discrete = out
                .logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                .map(|(i, _)| i)
                .expect("non-empty logits");
            let continuous = out.mean.iter().map(|m| m.tanh()).collect();
            return Ok(HybridAction {
                discrete,
                continuous,
            });
        }
        let discrete = categorical_sample(&out.logits, rng.gen::<f64>());
        let xi: Vec<f64> = (0..self.c).map(|_| standard_normal(rng)).collect();
        let (continuous, _) = tanh_gaussian_sample(&out.mean, &out.sigma(), &xi)?;
        Ok(HybridAction {
            discrete,
            continuous,
        })
    }

    fn sample_joint_actions<R: Rng>(
        outs: &[Vec<PolicyOutput>],
        row: usize,
        c: usize,
        rng: &mut R,
    ) -> Result<Vec<(HybridAction, f64)>, LearnError> {
        let mut joint = Vec::with_capacity(outs.len());
        for agent_outs in outs {
            let out = &agent_outs[row];
            let discrete = categorical_sample(&out.logits, rng.gen::<f64>());
            let xi: Vec<f64> = (0..c).map(|_| standard_normal(rng)).collect();
            let (continuous, log_prob_c) = tanh_gaussian_sample(&out.mean, &out.sigma(), &xi)?;
            joint.push((
                HybridAction {
                    discrete,
                    continuous,
                },
                log_prob_c,
            ));
        }
        Ok(joint)
    }

    /// Detached Bellman targets for this agent: next joint actions come from
    /// every agent's target actor, values from this agent's target critics.
    pub fn compute_target_y<R: Rng>(
        &self,
        batch: &Batch,
        target_actors: &[&ActorNet],
        rng: &mut R,
    ) -> Result<Vec<f64>, LearnError> {
        let b = batch.size;
        let n = target_actors.len();
        if batch.next_obs.len() != n {
            return Err(LearnError::BatchShape {
                field: "next_obs",
                expected: n,
                got: batch.next_obs.len(),
            });
        }
        let outs: Vec<Vec<PolicyOutput>> = target_actors
            .iter()
            .zip(&batch.next_obs)
            .map(|(actor, obs)| actor.policy_output_batch(obs, b))
            .collect::<Result<_, _>>()?;

        let mut neg_log_probs = Vec::with_capacity(b);
        let mut own_disc = Vec::with_capacity(b);
        let mut inputs = Vec::with_capacity(b * self.critic1.input_dim());
        for row in 0..b {
            let joint = Self::sample_joint_actions(&outs, row, self.c, rng)?;
            let own = &joint[self.index].0;
            neg_log_probs.push(hybrid_neg_log_prob(
                &outs[self.index][row],
                own,
                self.weights,
            )?);
            own_disc.push(own.discrete);
            let obs_rows: Vec<&[f64]> = batch
                .next_obs
                .iter()
                .map(|obs| {
                    let d = obs.len() / b;
                    &obs[row * d..(row + 1) * d]
                })
                .collect();
            let cont_rows: Vec<&[f64]> = joint.iter().map(|(a, _)| a.continuous.as_slice()).collect();
            let disc_rows: Vec<usize> = joint.iter().map(|(a, _)| a.discrete).collect();
            inputs.extend(build_critic_input(
                &obs_rows,
                &cont_rows,
                &disc_rows,
                self.k,
                self.index,
                self.centralized,
            ));
        }

        let q1 = self.target_critic1.q_values_batch(&inputs, b)?;
        let q2 = self.target_critic2.q_values_batch(&inputs, b)?;
        let mut targets = Vec::with_capacity(b);
        for row in 0..b {
            let d = own_disc[row];
            let min_q = q1[row * self.k + d].min(q2[row * self.k + d]);
            targets.push(bellman_target(
                batch.rewards[self.index][row],
                self.gamma,
                batch.done[row] != 0.0,
                min_q,
                neg_log_probs[row],
            ));
        }
        Ok(targets)
    }

    /// One twin-critic regression step toward detached targets.
    pub fn critic_update(&mut self, batch: &Batch, targets: &[f64]) -> Result<f64, LearnError> {
        let b = batch.size;
        let mut inputs = Vec::with_capacity(b * self.critic1.input_dim());
        for row in 0..b {
            let obs_rows: Vec<&[f64]> = batch
                .obs
                .iter()
                .map(|obs| {
                    let d = obs.len() / b;
                    &obs[row * d..(row + 1) * d]
                })
                .collect();
            let cont_rows: Vec<&[f64]> = batch
                .cont
                .iter()
                .map(|cont| {
                    let d = cont.len() / b;
                    &cont[row * d..(row + 1) * d]
                })
                .collect();
            let disc_rows: Vec<usize> = batch.disc.iter().map(|d| d[row]).collect();
            inputs.extend(build_critic_input(
                &obs_rows,
                &cont_rows,
                &disc_rows,
                self.k,
                self.index,
                self.centralized,
            ));
        }

        let mut tape = Tape::new();
        let input = tape.constant(Tensor::new(vec![b, self.critic1.input_dim()], inputs)?);
        let y = tape.constant(Tensor::new(vec![b], targets.to_vec())?);
        let c1 = self.critic1.mlp.insert(&mut tape, true);
        let c2 = self.critic2.mlp.insert(&mut tape, true);
        let loss = build_critic_loss(
            &mut tape,
            &c1,
            &c2,
            input,
            &batch.disc[self.index],
            y,
        )?;
        let loss_value = tape.data(loss)[0];
        if !loss_value.is_finite() {
            return Err(LearnError::NonFinite {
                what: "critic loss",
            });
        }
        tape.backward(loss)?;
        let vars: Vec<Var> = c1.all().into_iter().chain(c2.all()).collect();
        let grads: Vec<Option<&[f64]>> = vars.iter().map(|&v| tape.grad(v)).collect();
        let mut params: Vec<&mut Tensor> = self
            .critic1
            .mlp
            .layers_mut()
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect();
        params.extend(
            self.critic2
                .mlp
                .layers_mut()
                .iter_mut()
                .flat_map(|l| [&mut l.weight, &mut l.bias]),
        );
        self.critic_opt.step(&mut params, &grads)?;
        Ok(loss_value)
    }

    /// One actor step against the current (frozen-for-this-step) critics.
    /// Returns the loss and the report statistics derived from the same
    /// forward pass.
    pub fn actor_update<R: Rng>(
        &mut self,
        batch: &Batch,
        rng: &mut R,
    ) -> Result<(f64, f64, f64), LearnError> {
        let b = batch.size;
        let xi_data: Vec<f64> = (0..b * self.c).map(|_| standard_normal(rng)).collect();
        let xi = Tensor::new(vec![b, self.c], xi_data)?;

        let mut tape = Tape::new();
        let actor_vars = self.actor.insert(&mut tape, true);
        let c1 = self.critic1.mlp.insert(&mut tape, false);
        let c2 = self.critic2.mlp.insert(&mut tape, false);
        let ctx = ActorLossContext {
            batch,
            xi: &xi,
            own_index: self.index,
            centralized: self.centralized,
            weights: self.weights,
            k: self.k,
        };
        let graph = build_actor_loss(&mut tape, &actor_vars, &c1, &c2, &ctx)?;
        let loss_value = tape.data(graph.loss)[0];
        if !loss_value.is_finite() {
            return Err(LearnError::NonFinite { what: "actor loss" });
        }

        // Report statistics from the same pass, before the weights move.
        let logits = tape.data(graph.logits);
        let log_std = tape.data(graph.log_std);
        let action = tape.data(graph.action);
        let qmin = tape.data(graph.qmin);
        let mut entropy_sum = 0.0;
        let mut q_sum = 0.0;
        for row in 0..b {
            let row_logits = &logits[row * self.k..(row + 1) * self.k];
            let mut log_prob_c = 0.0;
            for col in 0..self.c {
                let ix = row * self.c + col;
                let a = action[ix];
                log_prob_c += -log_std[ix]
                    - 0.5 * LN_2PI
                    - 0.5 * xi.data()[ix] * xi.data()[ix]
                    - (1.0 - a * a + JACOBIAN_EPS).ln();
            }
            entropy_sum += self.weights.alpha_d * categorical_entropy(row_logits)
                + self.weights.alpha_c * (-log_prob_c);
            let lsm = crate::heads::dist::log_softmax_vec(row_logits);
            for col in 0..self.k {
                q_sum += lsm[col].exp() * qmin[row * self.k + col];
            }
        }

        tape.backward(graph.loss)?;
        let vars = [
            actor_vars.fc1.w,
            actor_vars.fc1.b,
            actor_vars.fc2.w,
            actor_vars.fc2.b,
            actor_vars.logits_head.w,
            actor_vars.logits_head.b,
            actor_vars.mean_head.w,
            actor_vars.mean_head.b,
            actor_vars.log_std_head.w,
            actor_vars.log_std_head.b,
        ];
        let grads: Vec<Option<&[f64]>> = vars.iter().map(|&v| tape.grad(v)).collect();
        let mut params = self.actor.params_mut();
        self.actor_opt.step(&mut params, &grads)?;
        Ok((loss_value, entropy_sum / b as f64, q_sum / b as f64))
    }

    /// Polyak step of every target toward its online network.
    pub fn soft_update(&mut self, tau: f64) -> Result<(), LearnError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(LearnError::BadTau(tau));
        }
        let lerp = |target: &mut Tensor, online: &Tensor| {
            for (t, o) in target.data_mut().iter_mut().zip(online.data()) {
                *t = tau * o + (1.0 - tau) * *t;
            }
        };
        for (target, online) in self
            .target_actor
            .params_mut()
            .into_iter()
            .zip(self.actor.params())
        {
            lerp(target, online);
        }
        for (tc, oc) in [
            (&mut self.target_critic1, &self.critic1),
            (&mut self.target_critic2, &self.critic2),
        ] {
            for (tl, ol) in tc.mlp.layers_mut().iter_mut().zip(oc.mlp.layers()) {
                lerp(&mut tl.weight, &ol.weight);
                lerp(&mut tl.bias, &ol.bias);
            }
        }
        Ok(())
    }

    /// Stable names for every parameter, online and target, used by the
    /// checkpoint format.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, net) in [("actor", &self.actor), ("target_actor", &self.target_actor)] {
            for (name, t) in [
                ("fc1.weight", &net.fc1.weight),
                ("fc1.bias", &net.fc1.bias),
                ("fc2.weight", &net.fc2.weight),
                ("fc2.bias", &net.fc2.bias),
                ("logits_head.weight", &net.logits_head.weight),
                ("logits_head.bias", &net.logits_head.bias),
                ("mean_head.weight", &net.mean_head.weight),
                ("mean_head.bias", &net.mean_head.bias),
                ("log_std_head.weight", &net.log_std_head.weight),
                ("log_std_head.bias", &net.log_std_head.bias),
            ] {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        for (prefix, net) in [
            ("critic1", &self.critic1),
            ("critic2", &self.critic2),
            ("target_critic1", &self.target_critic1),
            ("target_critic2", &self.target_critic2),
        ] {
            for (l, layer) in net.mlp.layers().iter().enumerate() {
                out.push((format!("{prefix}.layer{l}.weight"), &layer.weight));
                out.push((format!("{prefix}.layer{l}.bias"), &layer.bias));
            }
        }
        out
    }

    /// Replaces one named parameter, enforcing an exact shape match.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<(), LearnError> {
        let slot = self.param_slot(name)?;
        if slot.shape() != value.shape() {
            return Err(LearnError::ParamShape {
                name: name.to_string(),
                expected: format!("{:?}", slot.shape()),
                got: format!("{:?}", value.shape()),
            });
        }
        *slot = value;
        Ok(())
    }

    fn param_slot(&mut self, name: &str) -> Result<&mut Tensor, LearnError> {
        fn actor_slot<'a>(a: &'a mut ActorNet, rest: &str) -> Option<&'a mut Tensor> {
            Some(match rest {
                "fc1.weight" => &mut a.fc1.weight,
                "fc1.bias" => &mut a.fc1.bias,
                "fc2.weight" => &mut a.fc2.weight,
                "fc2.bias" => &mut a.fc2.bias,
                "logits_head.weight" => &mut a.logits_head.weight,
                "logits_head.bias" => &mut a.logits_head.bias,
                "mean_head.weight" => &mut a.mean_head.weight,
                "mean_head.bias" => &mut a.mean_head.bias,
                "log_std_head.weight" => &mut a.log_std_head.weight,
                "log_std_head.bias" => &mut a.log_std_head.bias,
                _ => return None,
            })
        }
        fn critic_slot<'a>(c: &'a mut CriticNet, rest: &str) -> Option<&'a mut Tensor> {
            let (layer, field) = rest.split_once('.')?;
            let idx: usize = layer.strip_prefix("layer")?.parse().ok()?;
            let l = c.mlp.layers_mut().get_mut(idx)?;
            Some(match field {
                "weight" => &mut l.weight,
                "bias" => &mut l.bias,
                _ => return None,
            })
        }
        let (net, rest) = name
            .split_once('.')
            .ok_or_else(|| LearnError::UnknownParam(name.to_string()))?;
        match net {
            "actor" => actor_slot(&mut self.actor, rest),
            "target_actor" => actor_slot(&mut self.target_actor, rest),
            "critic1" => critic_slot(&mut self.critic1, rest),
            "critic2" => critic_slot(&mut self.critic2, rest),
            "target_critic1" => critic_slot(&mut self.target_critic1, rest),
            "target_critic2" => critic_slot(&mut self.target_critic2, rest),
            _ => None,
        }
        .ok_or_else(|| LearnError::UnknownParam(name.to_string()))
    }

    /// Drops optimizer history, as after loading a checkpoint.
    pub fn reset_optimizers(&mut self) {
        self.actor_opt.reset();
        self.critic_opt.reset();
    }
}

/// One full team update round, interleaving-independent by construction:
/// all targets are computed against pre-update networks first, then each
/// agent takes its critic and actor steps, then every target network moves.
pub fn update_all<R: Rng>(
    learners: &mut [AgentLearner],
    batch: &Batch,
    tau: f64,
    rng: &mut R,
) -> Result<Vec<UpdateReport>, LearnError> {
    let targets: Vec<Vec<f64>> = {
        let target_actors: Vec<&ActorNet> = learners.iter().map(|l| &l.target_actor).collect();
        learners
            .iter()
            .map(|l| l.compute_target_y(batch, &target_actors, rng))
            .collect::<Result<_, _>>()?
    };
    let mut reports = Vec::with_capacity(learners.len());
    for (learner, y) in learners.iter_mut().zip(&targets) {
        let critic_loss = learner.critic_update(batch, y)?;
        let (actor_loss, mean_entropy_estimate, mean_q) = learner.actor_update(batch, rng)?;
        reports.push(UpdateReport {
            critic_loss,
            actor_loss,
            mean_entropy_estimate,
            mean_q,
        });
    }
    for learner in learners.iter_mut() {
        learner.soft_update(tau)?;
    }
    Ok(reports)
}

//! Policy and value networks plus the hybrid action types they act over.
//!
//! An actor maps a local observation to a categorical head over `K`
//! discrete moves and a state-conditioned Gaussian head over `C` continuous
//! components (squashed by tanh).  A critic maps a joint input vector to
//! `K` action values, one per discrete move of the owning agent.

pub mod dist;

use crate::autodiff::{GradError, Tape, Tensor, Var};
use dist::{categorical_entropy, log_softmax_vec};
use rand::Rng;
use thiserror::Error;

pub use dist::DistError;

/// Clamp bounds for the log standard deviation head.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("observation has {got} values, network expects {expected}")]
    ObsDimension { expected: usize, got: usize },
    #[error("input has {got} values, network expects {expected}")]
    InputDimension { expected: usize, got: usize },
    #[error("network needs at least one unit per layer")]
    EmptyLayer,
    #[error("entropy weights must be non-negative and finite")]
    BadEntropyWeights,
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// One discrete move index paired with the continuous components.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridAction {
    pub discrete: usize,
    pub continuous: Vec<f64>,
}

/// Non-negative temperatures weighting the discrete and continuous entropy
/// contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyWeights {
    pub alpha_d: f64,
    pub alpha_c: f64,
}

impl EntropyWeights {
    pub fn new(alpha_d: f64, alpha_c: f64) -> Result<Self, HeadError> {
        if !(alpha_d >= 0.0 && alpha_d.is_finite() && alpha_c >= 0.0 && alpha_c.is_finite()) {
            return Err(HeadError::BadEntropyWeights);
        }
        Ok(EntropyWeights { alpha_d, alpha_c })
    }
}

/// Raw distribution parameters produced by one actor forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl PolicyOutput {
    pub fn sigma(&self) -> Vec<f64> {
        self.log_std.iter().map(|v| v.exp()).collect()
    }
}

/// Weighted negative log density of a hybrid action:
/// `alpha_d * (-log pi_d) + alpha_c * (-log pi_c)`.
pub fn hybrid_neg_log_prob(
    out: &PolicyOutput,
    action: &HybridAction,
    w: EntropyWeights,
) -> Result<f64, HeadError> {
    if action.discrete >= out.logits.len() {
        return Err(HeadError::InputDimension {
            expected: out.logits.len(),
            got: action.discrete,
        });
    }
    let lsm = log_softmax_vec(&out.logits);
    let lp_d = lsm[action.discrete];
    let lp_c = dist::tanh_gaussian_log_prob(&action.continuous, &out.mean, &out.sigma())?;
    Ok(w.alpha_d * (-lp_d) + w.alpha_c * (-lp_c))
}

/// Weighted hybrid entropy with the discrete part computed exactly and the
/// continuous part supplied as an estimate (e.g. a mean of `-log pi_c`
/// over fresh samples).  Because the continuous head does not condition on
/// the discrete move, the mixture over discrete moves collapses to a single
/// continuous term.
pub fn hybrid_entropy(out: &PolicyOutput, cont_entropy_estimate: f64, w: EntropyWeights) -> f64 {
    w.alpha_d * categorical_entropy(&out.logits) + w.alpha_c * cont_entropy_estimate
}

/// A linear layer `x -> x W + b` with `W` stored `[fan_in, fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, weights first,
    /// row-major, then biases, so the draw order is reproducible.
    pub fn new<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let bias: Vec<f64> = (0..fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
        Linear {
            weight: Tensor::matrix(fan_in, fan_out, weight).expect("sized above"),
            bias: Tensor::vector(bias).expect("sized above"),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Leaf handles for one [`Linear`] inserted into a tape.
#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

impl LinearVars {
    pub fn insert(layer: &Linear, tape: &mut Tape, trainable: bool) -> Self {
        let (mut w, mut b) = (layer.weight.clone(), layer.bias.clone());
        if trainable {
            w = w.with_grad();
            b = b.with_grad();
        }
        LinearVars {
            w: tape.leaf(w),
            b: tape.leaf(b),
        }
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var, GradError> {
        tape.affine(x, self.w, self.b)
    }
}

/// Shape of a fully-connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

/// Plain multilayer perceptron with ReLU between layers and a linear
/// output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng>(spec: &MlpSpec, rng: &mut R) -> Result<Self, HeadError> {
        if spec.input_dim == 0 || spec.output_dim == 0 || spec.hidden.iter().any(|&h| h == 0) {
            return Err(HeadError::EmptyLayer);
        }
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.hidden);
        dims.push(spec.output_dim);
        let layers = dims
            .windows(2)
            .map(|pair| Linear::new(pair[0], pair[1], rng))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    /// Inserts all parameters as leaves and returns their handles in layer
    /// order (weight, bias per layer).
    pub fn insert(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| LinearVars::insert(l, tape, trainable))
                .collect(),
        }
    }

    /// Batched numeric forward without gradient bookkeeping.
    pub fn forward_numeric(&self, input: &[f64], rows: usize) -> Result<Vec<f64>, HeadError> {
        if input.len() != rows * self.input_dim() {
            return Err(HeadError::InputDimension {
                expected: rows * self.input_dim(),
                got: input.len(),
            });
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![rows, self.input_dim()], input.to_vec())?);
        let vars = self.insert(&mut tape, false);
        let out = vars.forward(&mut tape, x)?;
        Ok(tape.data(out).to_vec())
    }
}

/// Leaf handles for an [`Mlp`] inserted into a tape.
pub struct MlpVars {
    pub layers: Vec<LinearVars>,
}

impl MlpVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, GradError> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(tape, h)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    pub fn all(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|l| [l.w, l.b]).collect()
    }
}

/// Actor network: shared ReLU trunk feeding a logit head, a mean head and a
/// clamped log-std head.  The Gaussian head conditions only on the
/// observation, not on the sampled discrete move.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    pub fc1: Linear,
    pub fc2: Linear,
    pub logits_head: Linear,
    pub mean_head: Linear,
    pub log_std_head: Linear,
}

/// Leaf handles for an [`ActorNet`] on a tape.
pub struct ActorVars {
    pub fc1: LinearVars,
    pub fc2: LinearVars,
    pub logits_head: LinearVars,
    pub mean_head: LinearVars,
    pub log_std_head: LinearVars,
}

impl ActorVars {
    /// Builds the trunk and all three heads for a `[rows, obs_dim]` or
    /// `[obs_dim]` input already on the tape.
    pub fn forward(&self, tape: &mut Tape, obs: Var) -> Result<ActorHeads, GradError> {
        let h1 = self.fc1.apply(tape, obs)?;
        let h1 = tape.relu(h1);
        let h2 = self.fc2.apply(tape, h1)?;
        let h2 = tape.relu(h2);
        let logits = self.logits_head.apply(tape, h2)?;
        let mean = self.mean_head.apply(tape, h2)?;
        let log_std_raw = self.log_std_head.apply(tape, h2)?;
        let log_std = tape.clamp(log_std_raw, LOG_STD_MIN, LOG_STD_MAX);
        Ok(ActorHeads {
            logits,
            mean,
            log_std,
        })
    }
}

/// Graph outputs of an actor forward pass.
pub struct ActorHeads {
    pub logits: Var,
    pub mean: Var,
    /// Already clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Var,
}

impl ActorNet {
    pub fn new<R: Rng>(
        obs_dim: usize,
        k: usize,
        c: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, HeadError> {
        if obs_dim == 0 || k == 0 || c == 0 || hidden == 0 {
            return Err(HeadError::EmptyLayer);
        }
        Ok(ActorNet {
            fc1: Linear::new(obs_dim, hidden, rng),
            fc2: Linear::new(hidden, hidden, rng),
            logits_head: Linear::new(hidden, k, rng),
            mean_head: Linear::new(hidden, c, rng),
            log_std_head: Linear::new(hidden, c, rng),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.fc1.fan_in()
    }

    pub fn discrete_count(&self) -> usize {
        self.logits_head.fan_out()
    }

    pub fn continuous_dim(&self) -> usize {
        self.mean_head.fan_out()
    }

    pub fn insert(&self, tape: &mut Tape, trainable: bool) -> ActorVars {
        ActorVars {
            fc1: LinearVars::insert(&self.fc1, tape, trainable),
            fc2: LinearVars::insert(&self.fc2, tape, trainable),
            logits_head: LinearVars::insert(&self.logits_head, tape, trainable),
            mean_head: LinearVars::insert(&self.mean_head, tape, trainable),
            log_std_head: LinearVars::insert(&self.log_std_head, tape, trainable),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.fc1.weight,
            &self.fc1.bias,
            &self.fc2.weight,
            &self.fc2.bias,
            &self.logits_head.weight,
            &self.logits_head.bias,
            &self.mean_head.weight,
            &self.mean_head.bias,
            &self.log_std_head.weight,
            &self.log_std_head.bias,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
            &mut self.logits_head.weight,
            &mut self.logits_head.bias,
            &mut self.mean_head.weight,
            &mut self.mean_head.bias,
            &mut self.log_std_head.weight,
            &mut self.log_std_head.bias,
        ]
    }

    /// Numeric forward for a single observation.
    pub fn policy_output(&self, obs: &[f64]) -> Result<PolicyOutput, HeadError> {
        let batch = self.policy_output_batch(obs, 1)?;
        Ok(batch.into_iter().next().expect("one row"))
    }

    /// Numeric forward for `rows` stacked observations.
    pub fn policy_output_batch(
        &self,
        obs: &[f64],
        rows: usize,
    ) -> Result<Vec<PolicyOutput>, HeadError> {
        let d = self.obs_dim();
        if obs.len() != rows * d {
            return Err(HeadError::ObsDimension {
                expected: rows * d,
                got: obs.len(),
            });
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![rows, d], obs.to_vec())?);
        let vars = self.insert(&mut tape, false);
        let heads = vars.forward(&mut tape, x)?;
        let k = self.discrete_count();
        let c = self.continuous_dim();
        let logits = tape.data(heads.logits);
        let mean = tape.data(heads.mean);
        let log_std = tape.data(heads.log_std);
        Ok((0..rows)
            .map(|i| PolicyOutput {
                logits: logits[i * k..(i + 1) * k].to_vec(),
                mean: mean[i * c..(i + 1) * c].to_vec(),
                log_std: log_std[i * c..(i + 1) * c].to_vec(),
            })
            .collect())
    }
}

/// Critic network: an [`Mlp`] from a joint input vector to one value per
/// discrete move of the owning agent.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub mlp: Mlp,
}

impl CriticNet {
    pub fn new<R: Rng>(
        input_dim: usize,
        k: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, HeadError> {
        Ok(CriticNet {
            mlp: Mlp::new(
                &MlpSpec {
                    input_dim,
                    hidden: vec![hidden, hidden],
                    output_dim: k,
                },
                rng,
            )?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn discrete_count(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Numeric Q-values for one joint input row.
    pub fn q_values(&self, input: &[f64]) -> Result<Vec<f64>, HeadError> {
        self.mlp.forward_numeric(input, 1)
    }

    /// Numeric Q-values for `rows` stacked joint inputs.
    pub fn q_values_batch(&self, input: &[f64], rows: usize) -> Result<Vec<f64>, HeadError> {
        self.mlp.forward_numeric(input, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    #[test]
    fn init_stays_within_fan_in_bound() {
        let layer = Linear::new(16, 8, &mut rng());
        let bound = 1.0 / 4.0;
        for v in layer.weight.data().iter().chain(layer.bias.data()) {
            assert!(v.abs() <= bound, "{v}");
        }
    }

    #[test]
    fn actor_output_dims_match_heads() {
        let actor = ActorNet::new(14, 5, 1, 64, &mut rng()).unwrap();
        let out = actor.policy_output(&vec![0.1; 14]).unwrap();
        assert_eq!(out.logits.len(), 5);
        assert_eq!(out.mean.len(), 1);
        assert_eq!(out.log_std.len(), 1);
        assert!(out.log_std[0] >= LOG_STD_MIN && out.log_std[0] <= LOG_STD_MAX);
    }

    #[test]
    fn actor_rejects_wrong_observation_width() {
        let actor = ActorNet::new(14, 5, 1, 64, &mut rng()).unwrap();
        assert!(actor.policy_output(&vec![0.0; 13]).is_err());
    }

    #[test]
    fn batched_forward_matches_single_rows() {
        let actor = ActorNet::new(6, 3, 2, 32, &mut rng()).unwrap();
        let a: Vec<f64> = (0..6).map(|i| i as f64 * 0.1).collect();
        let b: Vec<f64> = (0..6).map(|i| -(i as f64) * 0.05).collect();
        let stacked: Vec<f64> = a.iter().chain(&b).cloned().collect();
        let batch = actor.policy_output_batch(&stacked, 2).unwrap();
        assert_eq!(batch[0], actor.policy_output(&a).unwrap());
        assert_eq!(batch[1], actor.policy_output(&b).unwrap());
    }

    #[test]
    fn critic_emits_one_value_per_discrete_move() {
        let critic = CriticNet::new(55, 5, 64, &mut rng()).unwrap();
        let q = critic.q_values(&vec![0.2; 55]).unwrap();
        assert_eq!(q.len(), 5);
        assert!(q.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn same_seed_gives_identical_networks() {
        let a = ActorNet::new(10, 5, 1, 64, &mut rng()).unwrap();
        let b = ActorNet::new(10, 5, 1, 64, &mut rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hybrid_neg_log_prob_combines_both_heads() {
        let out = PolicyOutput {
            logits: vec![0.0, 0.0],
            mean: vec![0.0],
            log_std: vec![0.0],
        };
        let action = HybridAction {
            discrete: 0,
            continuous: vec![0.0],
        };
        let w = EntropyWeights::new(1.0, 1.0).unwrap();
        let nlp = hybrid_neg_log_prob(&out, &action, w).unwrap();
        // -log pi_d = log 2; -log pi_c = 0.5 ln 2pi + ln(1 + eps).
        let expected = (2.0f64).ln() + 0.5 * 1.8378770664093453 + (1.0 + dist::JACOBIAN_EPS).ln();
        assert!((nlp - expected).abs() < 1e-12, "{nlp}");
    }

    #[test]
    fn hybrid_entropy_weights_each_part() {
        let out = PolicyOutput {
            logits: vec![0.0, 0.0, 0.0, 0.0],
            mean: vec![0.0],
            log_std: vec![0.0],
        };
        let w = EntropyWeights::new(0.5, 2.0).unwrap();
        let h = hybrid_entropy(&out, 1.25, w);
        let expected = 0.5 * (4.0f64).ln() + 2.0 * 1.25;
        assert!((h - expected).abs() < 1e-12);
    }

    #[test]
    fn entropy_weights_reject_negatives() {
        assert!(EntropyWeights::new(-0.1, 0.0).is_err());
        assert!(EntropyWeights::new(0.0, f64::NAN).is_err());
    }
}

//! Deterministic 2-D particle world with hybrid actions and the two
//! benchmark scenarios: cooperative navigation (3 agents cover 3 landmarks)
//! and predator-prey (3 slower predators chase 1 faster prey around 2
//! obstacles).
//!
//! Every agent picks one of `K = 5` discrete moves {noop, +x, -x, +y, -y}
//! and one continuous throttle in `[-1, 1]`, mapped to a force magnitude
//! factor `(a + 1) / 2`.  Rewards, collision counts and touch counts are
//! evaluated on the state the actions are applied to, before integration,
//! so an overlapping pair always counts in the step that observes it.

use crate::heads::HybridAction;
use rand::Rng;
use thiserror::Error;

/// Number of discrete moves per agent.
pub const DISCRETE_MOVES: usize = 5;
/// Continuous components per agent.
pub const CONTINUOUS_DIM: usize = 1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("discrete action {got} out of range, world has {k} moves")]
    DiscreteOutOfRange { got: usize, k: usize },
    #[error("continuous action invalid: {detail}")]
    ContinuousInvalid { detail: String },
    #[error("episode already finished ({length} steps)")]
    EpisodeOver { length: u32 },
    #[error("episode metrics requested mid-episode at step {step} of {length}")]
    MidEpisode { step: u32, length: u32 },
    #[error("invalid scenario config: {0}")]
    BadConfig(String),
    #[error("entity index {0} out of range")]
    EntityIndex(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    CoopNav,
    PredatorPrey,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::CoopNav => "coop_nav",
            Scenario::PredatorPrey => "predator_prey",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        match s {
            "coop_nav" => Some(Scenario::CoopNav),
            "predator_prey" => Some(Scenario::PredatorPrey),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Agent,
    Landmark,
    Obstacle,
}

/// Physical description of one entity.  Landmarks are markers only and
/// exert no contact force; obstacles block movable entities.
#[derive(Debug, Clone, PartialEq)]
pub struct EntitySpec {
    pub radius: f64,
    pub mass: f64,
    pub max_speed: Option<f64>,
    pub movable: bool,
    pub kind: EntityKind,
}

impl EntitySpec {
    fn solid(&self) -> bool {
        self.kind != EntityKind::Landmark
    }
}

/// Physics constants and per-scenario geometry.  Counts per scenario are
/// fixed (coop_nav: 3 agents + 3 landmarks; predator_prey: 3 predators +
/// 1 prey + 2 obstacles); everything else can be overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub episode_length: u32,
    pub dt: f64,
    pub damping: f64,
    pub max_force: f64,
    pub contact_stiffness: f64,
    pub agent_radius: f64,
    pub landmark_radius: f64,
    pub predator_radius: f64,
    pub prey_radius: f64,
    pub obstacle_radius: f64,
    pub predator_max_speed: f64,
    pub prey_max_speed: f64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            episode_length: 25,
            dt: 0.1,
            damping: 0.25,
            max_force: 5.0,
            contact_stiffness: 100.0,
            agent_radius: 0.15,
            landmark_radius: 0.05,
            predator_radius: 0.075,
            prey_radius: 0.05,
            obstacle_radius: 0.20,
            predator_max_speed: 1.0,
            prey_max_speed: 1.3,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let positive = [
            ("dt", self.dt),
            ("max_force", self.max_force),
            ("contact_stiffness", self.contact_stiffness),
            ("agent_radius", self.agent_radius),
            ("landmark_radius", self.landmark_radius),
            ("predator_radius", self.predator_radius),
            ("prey_radius", self.prey_radius),
            ("obstacle_radius", self.obstacle_radius),
            ("predator_max_speed", self.predator_max_speed),
            ("prey_max_speed", self.prey_max_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(WorldError::BadConfig(format!("{name} must be positive")));
            }
        }
        if self.episode_length == 0 {
            return Err(WorldError::BadConfig("episode_length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.damping) {
            return Err(WorldError::BadConfig("damping must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// Mutable simulation state.  Velocity slots exist for every entity;
/// non-movable ones stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub step_index: u32,
    pub collisions: u64,
    pub touches: u64,
    dist_accum: f64,
}

/// Per-episode aggregate counters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeMetrics {
    /// Overlapping agent-pair events accumulated over the episode.
    pub collisions: u64,
    /// Mean over steps of the landmark-coverage distance sum, normalized by
    /// the landmark count (0 in scenarios without landmarks).
    pub dist: f64,
    /// Predator-prey overlap events accumulated over the episode.
    pub touches: u64,
}

/// Everything one `step` call reports back.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub done: bool,
    pub observations: Vec<Vec<f64>>,
}

pub struct World {
    cfg: ScenarioConfig,
    entities: Vec<EntitySpec>,
    state: WorldState,
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Out-of-bounds shaping for a single coordinate: zero inside the unit box,
/// exponential ramp outside, capped at 10.
fn bound_penalty(x: f64) -> f64 {
    let excess = x.abs() - 1.0;
    if excess < 0.0 {
        0.0
    } else {
        ((2.0 * excess).exp() - 1.0).min(10.0)
    }
}

impl World {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, WorldError> {
        cfg.validate()?;
        let entities = match cfg.scenario {
            Scenario::CoopNav => {
                let agent = EntitySpec {
                    radius: cfg.agent_radius,
                    mass: 1.0,
                    max_speed: None,
                    movable: true,
                    kind: EntityKind::Agent,
                };
                let landmark = EntitySpec {
                    radius: cfg.landmark_radius,
                    mass: 1.0,
                    max_speed: None,
                    movable: false,
                    kind: EntityKind::Landmark,
                };
                vec![
                    agent.clone(),
                    agent.clone(),
                    agent,
                    landmark.clone(),
                    landmark.clone(),
                    landmark,
                ]
            }
            Scenario::PredatorPrey => {
                let predator = EntitySpec {
                    radius: cfg.predator_radius,
                    mass: 1.0,
                    max_speed: Some(cfg.predator_max_speed),
                    movable: true,
                    kind: EntityKind::Agent,
                };
                let prey = EntitySpec {
                    radius: cfg.prey_radius,
                    mass: 1.0,
                    max_speed: Some(cfg.prey_max_speed),
                    movable: true,
                    kind: EntityKind::Agent,
                };
                let obstacle = EntitySpec {
                    radius: cfg.obstacle_radius,
                    mass: 1.0,
                    max_speed: None,
                    movable: false,
                    kind: EntityKind::Obstacle,
                };
                vec![
                    predator.clone(),
                    predator.clone(),
                    predator,
                    prey,
                    obstacle.clone(),
                    obstacle,
                ]
            }
        };
        let n = entities.len();
        Ok(World {
            cfg,
            entities,
            state: WorldState {
                positions: vec![[0.0; 2]; n],
                velocities: vec![[0.0; 2]; n],
                step_index: 0,
                collisions: 0,
                touches: 0,
                dist_accum: 0.0,
            },
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn entities(&self) -> &[EntitySpec] {
        &self.entities
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Agents always occupy the leading entity indices.
    pub fn num_agents(&self) -> usize {
        self.entities
            .iter()
            .filter(|e| e.kind == EntityKind::Agent)
            .count()
    }

    pub fn num_landmarks(&self) -> usize {
        self.entities
            .iter()
            .filter(|e| e.kind == EntityKind::Landmark)
            .count()
    }

    /// In predator-prey the prey is the last agent; every other agent is a
    /// predator.  Irrelevant for coop-nav.
    pub fn prey_index(&self) -> Option<usize> {
        match self.cfg.scenario {
            Scenario::CoopNav => None,
            Scenario::PredatorPrey => Some(3),
        }
    }

    pub fn obs_dim(&self, agent: usize) -> usize {
        match self.cfg.scenario {
            Scenario::CoopNav => 14,
            Scenario::PredatorPrey => {
                if agent == 3 {
                    14
                } else {
                    16
                }
            }
        }
    }

    pub fn obs_dims(&self) -> Vec<usize> {
        (0..self.num_agents()).map(|i| self.obs_dim(i)).collect()
    }

    /// Draws fresh uniform positions in `[-1,1]^2` for every entity in
    /// index order (x before y), zeroes velocities and counters.
    pub fn reset<R: Rng>(&mut self, rng: &mut R) -> Vec<Vec<f64>> {
        for p in &mut self.state.positions {
            p[0] = rng.gen::<f64>() * 2.0 - 1.0;
            p[1] = rng.gen::<f64>() * 2.0 - 1.0;
        }
        for v in &mut self.state.velocities {
            *v = [0.0; 2];
        }
        self.state.step_index = 0;
        self.state.collisions = 0;
        self.state.touches = 0;
        self.state.dist_accum = 0.0;
        self.observations()
    }

    /// Places one entity directly; intended for scripted scenarios and
    /// oracle tests.
    pub fn place_entity(
        &mut self,
        index: usize,
        position: [f64; 2],
        velocity: [f64; 2],
    ) -> Result<(), WorldError> {
        if index >= self.entities.len() {
            return Err(WorldError::EntityIndex(index));
        }
        self.state.positions[index] = position;
        self.state.velocities[index] = velocity;
        Ok(())
    }

    fn validate_actions(&self, actions: &[HybridAction]) -> Result<(), WorldError> {
        let n = self.num_agents();
        if actions.len() != n {
            return Err(WorldError::ActionCount {
                expected: n,
                got: actions.len(),
            });
        }
        for a in actions {
            if a.discrete >= DISCRETE_MOVES {
                return Err(WorldError::DiscreteOutOfRange {
                    got: a.discrete,
                    k: DISCRETE_MOVES,
                });
            }
            if a.continuous.len() != CONTINUOUS_DIM {
                return Err(WorldError::ContinuousInvalid {
                    detail: format!(
                        "expected {CONTINUOUS_DIM} components, got {}",
                        a.continuous.len()
                    ),
                });
            }
            for &c in &a.continuous {
                if !c.is_finite() || c.abs() > 1.0 {
                    return Err(WorldError::ContinuousInvalid {
                        detail: format!("component {c} outside [-1, 1]"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Overlapping agent pairs in the current state, by entity index.
    fn colliding_agent_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.num_agents();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dist2(self.state.positions[i], self.state.positions[j]);
                if d < self.entities[i].radius + self.entities[j].radius {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// Which predators currently overlap the prey.
    fn touching_predators(&self) -> Vec<usize> {
        let Some(prey) = self.prey_index() else {
            return Vec::new();
        };
        (0..prey)
            .filter(|&i| {
                dist2(self.state.positions[i], self.state.positions[prey])
                    < self.entities[i].radius + self.entities[prey].radius
            })
            .collect()
    }

    /// Sum over landmarks of the nearest agent's distance.
    fn coverage_distance_sum(&self) -> f64 {
        let n = self.num_agents();
        self.entities
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == EntityKind::Landmark)
            .map(|(l, _)| {
                (0..n)
                    .map(|i| dist2(self.state.positions[i], self.state.positions[l]))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    }

    /// Per-agent rewards for the current state.  `step` calls this after
    /// integrating, so returned rewards score the state an action produced.
    pub fn rewards(&self) -> Vec<f64> {
        match self.cfg.scenario {
            Scenario::CoopNav => {
                let r = -self.coverage_distance_sum()
                    - self.colliding_agent_pairs().len() as f64;
                vec![r; self.num_agents()]
            }
            Scenario::PredatorPrey => {
                let prey = self.prey_index().expect("predator_prey has a prey");
                let touching = self.touching_predators();
                let mut rewards = Vec::with_capacity(self.num_agents());
                let mut dist_sum = 0.0;
                for i in 0..prey {
                    let d = dist2(self.state.positions[i], self.state.positions[prey]);
                    dist_sum += d;
                    let touch = if touching.contains(&i) { 10.0 } else { 0.0 };
                    rewards.push(touch - 0.1 * d);
                }
                let out_of_bounds: f64 = self.state.positions[prey]
                    .iter()
                    .map(|&c| bound_penalty(c))
                    .sum();
                rewards.push(-10.0 * touching.len() as f64 + 0.1 * dist_sum - out_of_bounds);
                rewards
            }
        }
    }

    /// Advances one tick: applies control and contact forces, integrates,
    /// then scores and observes the new state, so rewards and overlap
    /// counters reflect what the joint action caused.
    pub fn step(&mut self, actions: &[HybridAction]) -> Result<StepOutcome, WorldError> {
        if self.state.step_index >= self.cfg.episode_length {
            return Err(WorldError::EpisodeOver {
                length: self.cfg.episode_length,
            });
        }
        self.validate_actions(actions)?;

        let n_entities = self.entities.len();
        let mut forces = vec![[0.0f64; 2]; n_entities];
        for (i, action) in actions.iter().enumerate() {
            let dir: [f64; 2] = match action.discrete {
                0 => [0.0, 0.0],
                1 => [1.0, 0.0],
                2 => [-1.0, 0.0],
                3 => [0.0, 1.0],
                _ => [0.0, -1.0],
            };
            let throttle = (action.continuous[0] + 1.0) / 2.0;
            let scale = self.cfg.max_force * self.entities[i].mass * throttle;
            forces[i][0] += scale * dir[0];
            forces[i][1] += scale * dir[1];
        }

        // Soft contacts: any overlapping solid pair pushes its movable
        // members apart along the center line.
        for i in 0..n_entities {
            for j in (i + 1)..n_entities {
                if !self.entities[i].solid() || !self.entities[j].solid() {
                    continue;
                }
                if !self.entities[i].movable && !self.entities[j].movable {
                    continue;
                }
                let pi = self.state.positions[i];
                let pj = self.state.positions[j];
                let d = dist2(pi, pj);
                let r_sum = self.entities[i].radius + self.entities[j].radius;
                if d >= r_sum {
                    continue;
                }
                let magnitude = self.cfg.contact_stiffness * (r_sum - d);
                let unit = if d > 1e-9 {
                    [(pi[0] - pj[0]) / d, (pi[1] - pj[1]) / d]
                } else {
                    [1.0, 0.0]
                };
                if self.entities[i].movable {
                    forces[i][0] += magnitude * unit[0];
                    forces[i][1] += magnitude * unit[1];
                }
                if self.entities[j].movable {
                    forces[j][0] -= magnitude * unit[0];
                    forces[j][1] -= magnitude * unit[1];
                }
            }
        }

        for i in 0..n_entities {
            if !self.entities[i].movable {
                continue;
            }
            let v = &mut self.state.velocities[i];
            let keep = 1.0 - self.cfg.damping;
            v[0] = v[0] * keep + forces[i][0] / self.entities[i].mass * self.cfg.dt;
            v[1] = v[1] * keep + forces[i][1] / self.entities[i].mass * self.cfg.dt;
            if let Some(limit) = self.entities[i].max_speed {
                let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
                if speed > limit {
                    v[0] *= limit / speed;
                    v[1] *= limit / speed;
                }
            }
            self.state.positions[i][0] += v[0] * self.cfg.dt;
            self.state.positions[i][1] += v[1] * self.cfg.dt;
        }

        self.state.step_index += 1;

        // Score the integrated state, so each reward and counter reflects
        // the consequences of the actions just applied.
        let rewards = self.rewards();
        self.state.collisions += self.colliding_agent_pairs().len() as u64;
        self.state.touches += self.touching_predators().len() as u64;
        if self.cfg.scenario == Scenario::CoopNav {
            self.state.dist_accum += self.coverage_distance_sum();
        }

        let done = self.state.step_index == self.cfg.episode_length;
        Ok(StepOutcome {
            rewards,
            done,
            observations: self.observations(),
        })
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.num_agents()).map(|i| self.observe(i)).collect()
    }

    /// Local observation with fixed entity-index ordering.
    pub fn observe(&self, agent: usize) -> Vec<f64> {
        let p = self.state.positions[agent];
        let v = self.state.velocities[agent];
        let rel = |other: usize| {
            let q = self.state.positions[other];
            [q[0] - p[0], q[1] - p[1]]
        };
        let mut obs = vec![v[0], v[1], p[0], p[1]];
        match self.cfg.scenario {
            Scenario::CoopNav => {
                for l in 3..6 {
                    obs.extend(rel(l));
                }
                for other in 0..3 {
                    if other != agent {
                        obs.extend(rel(other));
                    }
                }
            }
            Scenario::PredatorPrey => {
                for o in 4..6 {
                    obs.extend(rel(o));
                }
                if agent == 3 {
                    for pred in 0..3 {
                        obs.extend(rel(pred));
                    }
                } else {
                    for pred in 0..3 {
                        if pred != agent {
                            obs.extend(rel(pred));
                        }
                    }
                    obs.extend(rel(3));
                    obs.extend(self.state.velocities[3]);
                }
            }
        }
        obs
    }

    /// Episode aggregates; only valid once the episode has run to its
    /// configured length.
    pub fn episode_metrics(&self) -> Result<EpisodeMetrics, WorldError> {
        if self.state.step_index != self.cfg.episode_length {
            return Err(WorldError::MidEpisode {
                step: self.state.step_index,
                length: self.cfg.episode_length,
            });
        }
        let landmarks = self.num_landmarks();
        let dist = if landmarks == 0 {
            0.0
        } else {
            self.state.dist_accum / self.cfg.episode_length as f64 / landmarks as f64
        };
        Ok(EpisodeMetrics {
            collisions: self.state.collisions,
            dist,
            touches: self.state.touches,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn noop() -> HybridAction {
        HybridAction {
            discrete: 0,
            continuous: vec![-1.0],
        }
    }

    fn push(discrete: usize, throttle_raw: f64) -> HybridAction {
        HybridAction {
            discrete,
            continuous: vec![throttle_raw],
        }
    }

    /// Coop-nav world with everything far apart so no contacts interfere.
    fn spread_world() -> World {
        let mut w = World::new(ScenarioConfig::new(Scenario::CoopNav)).unwrap();
        let spots = [
            [0.0, 0.0],
            [50.0, 0.0],
            [0.0, 50.0],
            [50.0, 50.0],
            [-50.0, 0.0],
            [0.0, -50.0],
        ];
        for (i, s) in spots.iter().enumerate() {
            w.place_entity(i, *s, [0.0, 0.0]).unwrap();
        }
        w
    }

    #[test]
    fn full_throttle_push_integrates_by_hand() {
        // F = 5, v = 0*0.75 + (5/1)*0.1 = 0.5, p moves 0.5*0.1 = 0.05.
        let mut w = spread_world();
        let out = w
            .step(&[push(1, 1.0), noop(), noop()])
            .unwrap();
        assert_eq!(w.state().velocities[0], [0.5, 0.0]);
        assert_eq!(w.state().positions[0], [0.05, 0.0]);
        assert!(!out.done);
    }

    #[test]
    fn noop_from_rest_holds_still() {
        let mut w = spread_world();
        let before = w.state().positions.clone();
        w.step(&[noop(), noop(), noop()]).unwrap();
        assert_eq!(w.state().positions, before);
        assert!(w.state().velocities.iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn damping_decays_velocity() {
        let mut w = spread_world();
        w.place_entity(0, [0.0, 0.0], [1.0, 0.0]).unwrap();
        w.step(&[noop(), noop(), noop()]).unwrap();
        assert_eq!(w.state().velocities[0], [0.75, 0.0]);
    }

    #[test]
    fn throttle_maps_minus_one_to_zero_force() {
        let mut w = spread_world();
        w.step(&[push(1, -1.0), noop(), noop()]).unwrap();
        assert_eq!(w.state().velocities[0], [0.0, 0.0]);
    }

    #[test]
    fn all_discrete_directions_point_correctly() {
        for (d, expected) in [
            (1usize, [0.5, 0.0]),
            (2, [-0.5, 0.0]),
            (3, [0.0, 0.5]),
            (4, [0.0, -0.5]),
        ] {
            let mut w = spread_world();
            w.step(&[push(d, 1.0), noop(), noop()]).unwrap();
            assert_eq!(w.state().velocities[0], expected, "direction {d}");
        }
    }

    #[test]
    fn agents_ending_the_step_overlapped_count_one_pair() {
        let mut w = spread_world();
        // Just out of contact (gap 0.08), driven into each other: each moves
        // 0.05 this step, ending 0.28 apart with radii summing to 0.30.
        w.place_entity(0, [-0.19, 0.0], [0.0, 0.0]).unwrap();
        w.place_entity(1, [0.19, 0.0], [0.0, 0.0]).unwrap();
        w.step(&[push(1, 1.0), push(2, 1.0), noop()]).unwrap();
        assert_eq!(w.state().collisions, 1);
    }

    #[test]
    fn three_agents_converging_count_three_pairs() {
        let mut w = spread_world();
        // Outer agents coast inward (no contact before the step) and end
        // within 0.28 of each other and 0.14 of the center agent.
        w.place_entity(0, [-0.34, 0.0], [8.0 / 3.0, 0.0]).unwrap();
        w.place_entity(1, [0.0, 0.0], [0.0, 0.0]).unwrap();
        w.place_entity(2, [0.34, 0.0], [-8.0 / 3.0, 0.0]).unwrap();
        w.step(&[noop(), noop(), noop()]).unwrap();
        assert_eq!(w.state().collisions, 3);
    }

    #[test]
    fn contact_force_separates_overlapping_agents() {
        let mut w = spread_world();
        w.place_entity(0, [-0.05, 0.0], [0.0, 0.0]).unwrap();
        w.place_entity(1, [0.05, 0.0], [0.0, 0.0]).unwrap();
        w.step(&[noop(), noop(), noop()]).unwrap();
        let (p0, p1) = (w.state().positions[0], w.state().positions[1]);
        assert!(p0[0] < -0.05 && p1[0] > 0.05, "{p0:?} {p1:?}");
        // Equal and opposite push.
        assert!((p0[0] + p1[0]).abs() < 1e-12);
    }

    #[test]
    fn landmarks_never_move_and_exert_no_force() {
        let mut w = spread_world();
        // Agent 0 sits exactly on landmark 3.
        w.place_entity(0, [0.3, 0.3], [0.0, 0.0]).unwrap();
        w.place_entity(3, [0.3, 0.3], [0.0, 0.0]).unwrap();
        w.step(&[noop(), noop(), noop()]).unwrap();
        assert_eq!(w.state().positions[0], [0.3, 0.3]);
        assert_eq!(w.state().positions[3], [0.3, 0.3]);
    }

    #[test]
    fn obstacles_block_but_do_not_move() {
        let mut w = World::new(ScenarioConfig::new(Scenario::PredatorPrey)).unwrap();
        let spots = [
            [0.18, 0.0],
            [5.0, 5.0],
            [-5.0, 5.0],
            [5.0, -5.0],
            [0.0, 0.0],
            [-5.0, -5.0],
        ];
        for (i, s) in spots.iter().enumerate() {
            w.place_entity(i, *s, [0.0, 0.0]).unwrap();
        }
        // Predator 0 overlaps obstacle 4 (0.18 < 0.075 + 0.20).
        w.step(&[noop(), noop(), noop(), noop()]).unwrap();
        assert!(w.state().positions[0][0] > 0.18);
        assert_eq!(w.state().positions[4], [0.0, 0.0]);
    }

    #[test]
    fn predator_speed_clamps_at_limit() {
        let mut w = World::new(ScenarioConfig::new(Scenario::PredatorPrey)).unwrap();
        let spots = [
            [0.0, 0.0],
            [5.0, 5.0],
            [-5.0, 5.0],
            [5.0, -5.0],
            [8.0, 8.0],
            [-8.0, -8.0],
        ];
        for (i, s) in spots.iter().enumerate() {
            w.place_entity(i, *s, [0.0, 0.0]).unwrap();
        }
        for _ in 0..10 {
            w.step(&[push(1, 1.0), noop(), noop(), noop()]).unwrap();
            let v = w.state().velocities[0];
            let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
            assert!(speed <= 1.0 + 1e-12, "speed {speed}");
        }
        let v = w.state().velocities[0];
        assert_eq!((v[0] * v[0] + v[1] * v[1]).sqrt(), 1.0);
    }

    #[test]
    fn coop_reward_is_zero_iff_perfect_coverage() {
        let mut w = spread_world();
        // Move each agent exactly onto a distinct landmark.
        for (agent, landmark) in [(0usize, 3usize), (1, 4), (2, 5)] {
            let spot = w.state().positions[landmark];
            w.place_entity(agent, spot, [0.0, 0.0]).unwrap();
        }
        assert_eq!(w.rewards(), vec![0.0, 0.0, 0.0]);
        // Nudge one agent off by distance 1: reward drops to exactly -1.
        let l = w.state().positions[3];
        w.place_entity(0, [l[0] + 1.0, l[1]], [0.0, 0.0]).unwrap();
        let r = w.rewards()[0];
        assert!((r + 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn coop_reward_penalizes_each_colliding_pair_by_one() {
        // Agents 0 and 1 sit symmetric about (50, 0), far from every
        // landmark, so shrinking their gap below the radius sum changes the
        // coverage term by strictly less than the -1 collision penalty.
        let mut w = spread_world();
        w.place_entity(0, [50.0, 0.2], [0.0, 0.0]).unwrap();
        w.place_entity(1, [50.0, -0.2], [0.0, 0.0]).unwrap();
        let apart = w.rewards()[0];
        w.place_entity(0, [50.0, 0.05], [0.0, 0.0]).unwrap();
        w.place_entity(1, [50.0, -0.05], [0.0, 0.0]).unwrap();
        let overlapped = w.rewards()[0];
        let expected = -coverage_sum(&w) - 1.0;
        assert!((overlapped - expected).abs() < 1e-12, "{overlapped} vs {expected}");
        assert!(overlapped < apart);
    }

    fn coverage_sum(w: &World) -> f64 {
        let mut sum = 0.0;
        for l in 3..6 {
            let lp = w.state().positions[l];
            let mut best = f64::INFINITY;
            for a in 0..3 {
                let ap = w.state().positions[a];
                best = best.min(((ap[0] - lp[0]).powi(2) + (ap[1] - lp[1]).powi(2)).sqrt());
            }
            sum += best;
        }
        sum
    }

    #[test]
    fn coop_reward_never_positive_on_random_states() {
        let mut w = World::new(ScenarioConfig::new(Scenario::CoopNav)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..200 {
            w.reset(&mut rng);
            assert!(w.rewards()[0] <= 0.0);
        }
    }

    #[test]
    fn coop_reward_is_shared_and_permutation_invariant() {
        let mut w = World::new(ScenarioConfig::new(Scenario::CoopNav)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        w.reset(&mut rng);
        let r = w.rewards();
        assert_eq!(r[0], r[1]);
        assert_eq!(r[1], r[2]);
        // Swap agents 0 and 1: shared reward unchanged.
        let (p0, p1) = (w.state().positions[0], w.state().positions[1]);
        w.place_entity(0, p1, [0.0, 0.0]).unwrap();
        w.place_entity(1, p0, [0.0, 0.0]).unwrap();
        assert!((w.rewards()[0] - r[0]).abs() < 1e-12);
    }

    fn placed_predator_world() -> World {
        let mut w = World::new(ScenarioConfig::new(Scenario::PredatorPrey)).unwrap();
        let spots = [
            [0.5, 0.0],
            [-0.5, 0.0],
            [0.0, 0.5],
            [0.0, 0.0],
            [5.0, 5.0],
            [-5.0, -5.0],
        ];
        for (i, s) in spots.iter().enumerate() {
            w.place_entity(i, *s, [0.0, 0.0]).unwrap();
        }
        w
    }

    #[test]
    fn predator_prey_shaping_without_touches() {
        let w = placed_predator_world();
        let r = w.rewards();
        assert!((r[0] + 0.05).abs() < 1e-12);
        assert!((r[1] + 0.05).abs() < 1e-12);
        assert!((r[2] + 0.05).abs() < 1e-12);
        assert!((r[3] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn touch_pays_the_toucher_and_charges_the_prey() {
        let mut w = placed_predator_world();
        // Move predator 0 into the prey (distance 0.1 < 0.075 + 0.05).
        w.place_entity(0, [0.1, 0.0], [0.0, 0.0]).unwrap();
        let r = w.rewards();
        assert!((r[0] - (10.0 - 0.1 * 0.1)).abs() < 1e-12, "{}", r[0]);
        assert!((r[1] + 0.05).abs() < 1e-12);
        let dist_sum = 0.1 + 0.5 + 0.5;
        assert!((r[3] - (-10.0 + 0.1 * dist_sum)).abs() < 1e-12, "{}", r[3]);
    }

    #[test]
    fn touch_ledger_sums_to_zero_net_of_shaping_and_bounds() {
        let mut w = placed_predator_world();
        w.place_entity(0, [0.1, 0.0], [0.0, 0.0]).unwrap();
        let r = w.rewards();
        // Predator shaping (-0.1 * sum d) cancels prey shaping (+0.1 * sum d)
        // and touch terms cancel, so the team total is exactly zero while
        // the prey sits in bounds.
        let total: f64 = r.iter().sum();
        assert!(total.abs() < 1e-12, "{total}");
    }

    #[test]
    fn prey_bound_penalty_kicks_in_outside_the_unit_box() {
        assert_eq!(bound_penalty(1.0), 0.0);
        assert_eq!(bound_penalty(-0.3), 0.0);
        let at_1_5 = bound_penalty(1.5);
        assert!((at_1_5 - ((1.0f64).exp() - 1.0)).abs() < 1e-12);
        assert_eq!(bound_penalty(3.0), 10.0);
        assert_eq!(bound_penalty(-3.0), 10.0);
    }

    #[test]
    fn coop_observation_layout_checks_by_hand() {
        let mut w = World::new(ScenarioConfig::new(Scenario::CoopNav)).unwrap();
        let spots = [
            [0.1, 0.2],
            [0.5, 0.5],
            [-0.5, -0.5],
            [0.1, 0.2],
            [1.0, 1.0],
            [-1.0, 0.0],
        ];
        for (i, s) in spots.iter().enumerate() {
            w.place_entity(i, *s, [0.0, 0.0]).unwrap();
        }
        w.place_entity(0, [0.1, 0.2], [0.3, -0.4]).unwrap();
        let obs = w.observe(0);
        assert_eq!(obs.len(), 14);
        assert_eq!(&obs[0..2], &[0.3, -0.4]); // own velocity
        assert_eq!(&obs[2..4], &[0.1, 0.2]); // own position
        assert_eq!(&obs[4..6], &[0.0, 0.0]); // landmark 3 on top of agent
        assert!((obs[6] - 0.9).abs() < 1e-12 && (obs[7] - 0.8).abs() < 1e-12);
        assert!((obs[8] + 1.1).abs() < 1e-12 && (obs[9] + 0.2).abs() < 1e-12);
        assert!((obs[10] - 0.4).abs() < 1e-12 && (obs[11] - 0.3).abs() < 1e-12);
        assert!((obs[12] + 0.6).abs() < 1e-12 && (obs[13] + 0.7).abs() < 1e-12);
    }

    #[test]
    fn coop_observation_relative_blocks_are_translation_invariant() {
        let mut w = World::new(ScenarioConfig::new(Scenario::CoopNav)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        w.reset(&mut rng);
        let before = w.observe(1);
        for i in 0..6 {
            let p = w.state().positions[i];
            let v = w.state().velocities[i];
            w.place_entity(i, [p[0] + 1.0, p[1] + 1.0], v).unwrap();
        }
        let after = w.observe(1);
        // Own position block shifts; every relative block is unchanged.
        assert_eq!(&before[0..2], &after[0..2]);
        for i in 4..14 {
            assert!((before[i] - after[i]).abs() < 1e-12, "component {i}");
        }
    }

    #[test]
    fn predator_and_prey_observation_layouts_check_by_hand() {
        let w = placed_predator_world();
        let pred = w.observe(0);
        assert_eq!(pred.len(), 16);
        assert_eq!(&pred[2..4], &[0.5, 0.0]);
        assert_eq!(&pred[4..6], &[4.5, 5.0]); // obstacle 4 relative
        assert_eq!(&pred[6..8], &[-5.5, -5.0]); // obstacle 5 relative
        assert_eq!(&pred[8..10], &[-1.0, 0.0]); // predator 1 relative
        assert_eq!(&pred[10..12], &[-0.5, 0.5]); // predator 2 relative
        assert_eq!(&pred[12..14], &[-0.5, 0.0]); // prey relative
        assert_eq!(&pred[14..16], &[0.0, 0.0]); // prey velocity

        let prey = w.observe(3);
        assert_eq!(prey.len(), 14);
        assert_eq!(&prey[4..6], &[5.0, 5.0]);
        assert_eq!(&prey[6..8], &[-5.0, -5.0]);
        assert_eq!(&prey[8..10], &[0.5, 0.0]);
        assert_eq!(&prey[10..12], &[-0.5, 0.0]);
        assert_eq!(&prey[12..14], &[0.0, 0.5]);
    }

    #[test]
    fn reset_is_deterministic_and_in_range() {
        let mut w1 = World::new(ScenarioConfig::new(Scenario::CoopNav)).unwrap();
        let mut w2 = World::new(ScenarioConfig::new(Scenario::CoopNav)).unwrap();
        let o1 = w1.reset(&mut ChaCha20Rng::seed_from_u64(42));
        let o2 = w2.reset(&mut ChaCha20Rng::seed_from_u64(42));
        assert_eq!(o1, o2);
        assert_eq!(w1.state(), w2.state());
        for p in &w1.state().positions {
            assert!(p[0] >= -1.0 && p[0] <= 1.0 && p[1] >= -1.0 && p[1] <= 1.0);
        }
        assert_eq!(o1.len(), 3);
        assert!(o1.iter().all(|o| o.len() == 14));
    }

    #[test]
    fn scripted_two_step_episode_counts_exactly() {
        let mut cfg = ScenarioConfig::new(Scenario::CoopNav);
        cfg.episode_length = 2;
        // Stiffness 0 keeps the overlapping pair overlapping both steps.
        cfg.contact_stiffness = 1e-12;
        let mut w = World::new(cfg).unwrap();
        let spots = [
            [0.0, 0.0],
            [0.05, 0.0],
            [30.0, 30.0],
            [0.0, 0.0],
            [40.0, 40.0],
            [-40.0, 40.0],
        ];
        for (i, s) in spots.iter().enumerate() {
            w.place_entity(i, *s, [0.0, 0.0]).unwrap();
        }
        assert!(w.episode_metrics().is_err());
        let first = w.step(&[noop(), noop(), noop()]).unwrap();
        assert!(!first.done);
        let second = w.step(&[noop(), noop(), noop()]).unwrap();
        assert!(second.done);
        let m = w.episode_metrics().unwrap();
        assert_eq!(m.collisions, 2);
        assert_eq!(m.touches, 0);
        assert!(m.dist > 0.0);
        // A third step is rejected.
        assert!(w.step(&[noop(), noop(), noop()]).is_err());
    }

    #[test]
    fn rejects_malformed_actions() {
        let mut w = spread_world();
        assert!(w.step(&[noop(), noop()]).is_err());
        assert!(w
            .step(&[push(9, 0.0), noop(), noop()])
            .is_err());
        assert!(w
            .step(&[push(1, 1.5), noop(), noop()])
            .is_err());
        let bad_len = HybridAction {
            discrete: 0,
            continuous: vec![0.0, 0.0],
        };
        assert!(w.step(&[bad_len, noop(), noop()]).is_err());
    }

    #[test]
    fn identical_action_sequences_replay_bit_identically() {
        let cfg = ScenarioConfig::new(Scenario::PredatorPrey);
        let mut w1 = World::new(cfg.clone()).unwrap();
        let mut w2 = World::new(cfg).unwrap();
        w1.reset(&mut ChaCha20Rng::seed_from_u64(77));
        w2.reset(&mut ChaCha20Rng::seed_from_u64(77));
        let mut rng = ChaCha20Rng::seed_from_u64(78);
        for _ in 0..25 {
            let actions: Vec<HybridAction> = (0..4)
                .map(|_| HybridAction {
                    discrete: rng.gen_range(0..5),
                    continuous: vec![rng.gen::<f64>() * 2.0 - 1.0],
                })
                .collect();
            let o1 = w1.step(&actions).unwrap();
            let o2 = w2.step(&actions).unwrap();
            assert_eq!(o1, o2);
        }
        assert_eq!(w1.state(), w2.state());
        assert_eq!(
            w1.episode_metrics().unwrap(),
            w2.episode_metrics().unwrap()
        );
    }
}

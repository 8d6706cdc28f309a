//! C ABI for the hybrid-action multi-agent learner and its particle world.
//!
//! The surface is a single opaque handle, [`MahsacSim`], that owns a world,
//! one policy per agent, and the seed-stream state needed for reproducible
//! rollouts.  Handles come from [`mahsac_sim_new`] (freshly initialized
//! policies) or [`mahsac_sim_load`] (policies restored from a training
//! checkpoint) and must be released with [`mahsac_sim_free`].
//!
//! Conventions:
//! - Every fallible function returns a [`MahsacStatus`]; out-parameters are
//!   written only when the result is `MAHSAC_STATUS_OK`.
//! - Buffers are caller-allocated; their lengths are validated against the
//!   handle's dimensions and mismatches fail with `MAHSAC_STATUS_BAD_LENGTH`.
//! - On failure a human-readable message is stored per thread and can be
//!   fetched with [`mahsac_last_error`].
//! - Panics never cross the boundary; they are caught and reported as
//!   `MAHSAC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mahsac::harness::{build_team, evaluate, load_checkpoint, stream_rng, StreamKind};
use mahsac::world::{Scenario, World, CONTINUOUS_DIM};
use mahsac::{AgentLearner, HybridAction};
use rand_chacha::ChaCha20Rng;

/// Result codes returned by every fallible function in this library.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MahsacStatus {
    /// Success; out-parameters are valid.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument value was rejected (unknown name, wrong state, bad value).
    InvalidArgument = 2,
    /// A buffer length did not match the handle's dimensions.
    BadLength = 3,
    /// A file could not be read.
    IoError = 4,
    /// A file was read but its contents did not parse.
    ParseError = 5,
    /// An agent index was out of range.
    OutOfRange = 6,
    /// An internal panic was caught at the boundary.
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(bytes).unwrap_or_default();
    });
}

fn fail(status: MahsacStatus, msg: impl Into<String>) -> MahsacStatus {
    set_error(msg);
    status
}

/// Runs `f` with panics converted to `MAHSAC_STATUS_PANIC`.
fn guarded(f: impl FnOnce() -> MahsacStatus) -> MahsacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail(MahsacStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated C string.
unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, MahsacStatus> {
    if ptr.is_null() {
        return Err(fail(MahsacStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(MahsacStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// An initialized world plus one policy per agent.
///
/// The struct is opaque to C; all access goes through the `mahsac_sim_*`
/// functions.
pub struct MahsacSim {
    world: World,
    learners: Vec<AgentLearner>,
    master_seed: u64,
    gamma: f64,
    /// Episode index of the most recent reset; drives the per-episode
    /// environment and action seed streams.
    episode: u64,
    action_rng: ChaCha20Rng,
    started: bool,
}

impl MahsacSim {
    fn new(world: World, learners: Vec<AgentLearner>, master_seed: u64, gamma: f64) -> Self {
        let action_rng = stream_rng(master_seed, StreamKind::Action, 0);
        MahsacSim {
            world,
            learners,
            master_seed,
            gamma,
            episode: 0,
            action_rng,
            started: false,
        }
    }
}

/// # Safety
/// `sim` must be null or a pointer previously returned by `mahsac_sim_new` /
/// `mahsac_sim_load` that has not been freed.
unsafe fn sim_ref<'a>(sim: *const MahsacSim) -> Result<&'a MahsacSim, MahsacStatus> {
    sim.as_ref()
        .ok_or_else(|| fail(MahsacStatus::NullPointer, "sim is null"))
}

/// # Safety
/// Same contract as [`sim_ref`].
unsafe fn sim_mut<'a>(sim: *mut MahsacSim) -> Result<&'a mut MahsacSim, MahsacStatus> {
    sim.as_mut()
        .ok_or_else(|| fail(MahsacStatus::NullPointer, "sim is null"))
}

fn require<T>(ptr: *mut T, what: &str) -> Result<(), MahsacStatus> {
    if ptr.is_null() {
        Err(fail(MahsacStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Creates a simulation with freshly initialized policies.
///
/// `scenario` is `"coop_nav"` or `"predator_prey"`; `algorithm` is
/// `"mahsac"` (joint-observation critics) or `"ihsac"` (local critics) and
/// applies to every agent.  `seed` is the master seed for initialization and
/// all rollout randomness.
///
/// # Safety
/// `scenario` and `algorithm` must be valid NUL-terminated strings and `out`
/// must be a valid pointer.  On success `*out` owns the handle and must be
/// released with [`mahsac_sim_free`].
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_new(
    scenario: *const c_char,
    algorithm: *const c_char,
    seed: u64,
    out: *mut *mut MahsacSim,
) -> MahsacStatus {
    guarded(|| {
        if let Err(s) = require(out, "out") {
            return s;
        }
        let scenario = match read_str(scenario, "scenario") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let algorithm = match read_str(algorithm, "algorithm") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if Scenario::parse(scenario).is_none() {
            return fail(
                MahsacStatus::InvalidArgument,
                format!("unknown scenario {scenario:?}"),
            );
        }
        let text = format!(
            "[experiment]\nscenario = {scenario}\nalgorithm = {algorithm}\nseed = {seed}\n"
        );
        let cfg = match mahsac::harness::ExperimentConfig::parse_str(&text) {
            Ok(cfg) => cfg,
            Err(e) => return fail(MahsacStatus::InvalidArgument, e.to_string()),
        };
        let (world, learners) = match build_team(&cfg) {
            Ok(pair) => pair,
            Err(e) => return fail(MahsacStatus::InvalidArgument, e.to_string()),
        };
        let sim = MahsacSim::new(world, learners, seed, cfg.gamma);
        *out = Box::into_raw(Box::new(sim));
        MahsacStatus::Ok
    })
}

/// Loads policies from a training checkpoint file and builds the matching
/// world.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
/// On success `*out` owns the handle and must be released with
/// [`mahsac_sim_free`].
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_load(
    path: *const c_char,
    out: *mut *mut MahsacSim,
) -> MahsacStatus {
    guarded(|| {
        if let Err(s) = require(out, "out") {
            return s;
        }
        let path = match read_str(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if !Path::new(path).exists() {
            return fail(MahsacStatus::IoError, format!("no such file: {path}"));
        }
        let ckpt = match load_checkpoint(Path::new(path)) {
            Ok(c) => c,
            Err(e) => return fail(MahsacStatus::ParseError, e.to_string()),
        };
        let world = match World::new(ckpt.config.scenario_config()) {
            Ok(w) => w,
            Err(e) => return fail(MahsacStatus::ParseError, e.to_string()),
        };
        let sim = MahsacSim::new(world, ckpt.learners, ckpt.config.seed, ckpt.config.gamma);
        *out = Box::into_raw(Box::new(sim));
        MahsacStatus::Ok
    })
}

/// Releases a handle.  Passing null is a no-op.
///
/// # Safety
/// `sim` must be null or an unfreed handle from this library; it must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_free(sim: *mut MahsacSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Writes the number of agents to `out`.
///
/// # Safety
/// `sim` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_num_agents(
    sim: *const MahsacSim,
    out: *mut usize,
) -> MahsacStatus {
    guarded(|| {
        let sim = match sim_ref(sim) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(s) = require(out, "out") {
            return s;
        }
        *out = sim.world.num_agents();
        MahsacStatus::Ok
    })
}

/// Writes agent `agent`'s observation length to `out`.
///
/// # Safety
/// `sim` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_obs_dim(
    sim: *const MahsacSim,
    agent: usize,
    out: *mut usize,
) -> MahsacStatus {
    guarded(|| {
        let sim = match sim_ref(sim) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(s) = require(out, "out") {
            return s;
        }
        if agent >= sim.world.num_agents() {
            return fail(
                MahsacStatus::OutOfRange,
                format!("agent {agent} out of range (n = {})", sim.world.num_agents()),
            );
        }
        *out = sim.world.obs_dim(agent);
        MahsacStatus::Ok
    })
}

/// Writes the number of discrete moves and the continuous dimension of every
/// agent's action.
///
/// # Safety
/// `sim` must be a valid handle; `discrete_out` and `continuous_out` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_action_dims(
    sim: *const MahsacSim,
    discrete_out: *mut usize,
    continuous_out: *mut usize,
) -> MahsacStatus {
    guarded(|| {
        if let Err(status) = sim_ref(sim) {
            return status;
        }
        if let Err(s) = require(discrete_out, "discrete_out") {
            return s;
        }
        if let Err(s) = require(continuous_out, "continuous_out") {
            return s;
        }
        *discrete_out = mahsac::world::DISCRETE_MOVES;
        *continuous_out = CONTINUOUS_DIM;
        MahsacStatus::Ok
    })
}

/// Writes the configured episode length (steps per episode) to `out`.
///
/// # Safety
/// `sim` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_episode_length(
    sim: *const MahsacSim,
    out: *mut usize,
) -> MahsacStatus {
    guarded(|| {
        let sim = match sim_ref(sim) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(s) = require(out, "out") {
            return s;
        }
        *out = sim.world.config().episode_length as usize;
        MahsacStatus::Ok
    })
}

/// Starts episode `episode`: redraws entity placements from the per-episode
/// environment stream and reseeds the per-episode action stream, so a replay
/// of the same episode index reproduces the same rollout bit for bit.
///
/// # Safety
/// `sim` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_reset(sim: *mut MahsacSim, episode: u64) -> MahsacStatus {
    guarded(|| {
        let sim = match sim_mut(sim) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let mut env_rng = stream_rng(sim.master_seed, StreamKind::Env, episode);
        sim.world.reset(&mut env_rng);
        sim.action_rng = stream_rng(sim.master_seed, StreamKind::Action, episode);
        sim.episode = episode;
        sim.started = true;
        MahsacStatus::Ok
    })
}

/// Copies agent `agent`'s current observation into `buf`.
///
/// `len` must equal the value reported by [`mahsac_sim_obs_dim`].
///
/// # Safety
/// `sim` must be a valid handle and `buf` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_observe(
    sim: *const MahsacSim,
    agent: usize,
    buf: *mut f64,
    len: usize,
) -> MahsacStatus {
    guarded(|| {
        let sim = match sim_ref(sim) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(s) = require(buf, "buf") {
            return s;
        }
        if agent >= sim.world.num_agents() {
            return fail(
                MahsacStatus::OutOfRange,
                format!("agent {agent} out of range (n = {})", sim.world.num_agents()),
            );
        }
        if !sim.started {
            return fail(
                MahsacStatus::InvalidArgument,
                "mahsac_sim_reset must be called before observing",
            );
        }
        let obs = sim.world.observe(agent);
        if len != obs.len() {
            return fail(
                MahsacStatus::BadLength,
                format!("obs buffer holds {len} values, agent {agent} needs {}", obs.len()),
            );
        }
        std::ptr::copy_nonoverlapping(obs.as_ptr(), buf, obs.len());
        MahsacStatus::Ok
    })
}

/// Runs agent `agent`'s policy on a caller-provided observation.
///
/// This is the decentralized-execution entry point: the policy sees only the
/// observation passed in, never the rest of the world.  With
/// `deterministic = true` the modal action is returned (argmax discrete
/// choice, tanh of the Gaussian mean); otherwise both heads are sampled from
/// the handle's action stream.  `continuous_len` must equal the continuous
/// dimension from [`mahsac_sim_action_dims`].
///
/// # Safety
/// `sim` must be a valid handle, `obs` must point to `obs_len` readable
/// doubles, and `discrete_out` / `continuous_out` must be writable
/// (`continuous_out` for `continuous_len` doubles).
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_act(
    sim: *mut MahsacSim,
    agent: usize,
    obs: *const f64,
    obs_len: usize,
    deterministic: bool,
    discrete_out: *mut usize,
    continuous_out: *mut f64,
    continuous_len: usize,
) -> MahsacStatus {
    guarded(|| {
        let sim = match sim_mut(sim) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if obs.is_null() {
            return fail(MahsacStatus::NullPointer, "obs is null");
        }
        if let Err(s) = require(discrete_out, "discrete_out") {
            return s;
        }
        if let Err(s) = require(continuous_out, "continuous_out") {
            return s;
        }
        if agent >= sim.learners.len() {
            return fail(
                MahsacStatus::OutOfRange,
                format!("agent {agent} out of range (n = {})", sim.learners.len()),
            );
        }
        let expected = sim.world.obs_dim(agent);
        if obs_len != expected {
            return fail(
                MahsacStatus::BadLength,
                format!("obs has {obs_len} values, agent {agent} expects {expected}"),
            );
        }
        if continuous_len != CONTINUOUS_DIM {
            return fail(
                MahsacStatus::BadLength,
                format!("continuous buffer holds {continuous_len} values, need {CONTINUOUS_DIM}"),
            );
        }
        let obs = std::slice::from_raw_parts(obs, obs_len);
        let action = match sim.learners[agent].act(obs, &mut sim.action_rng, deterministic) {
            Ok(a) => a,
            Err(e) => return fail(MahsacStatus::InvalidArgument, e.to_string()),
        };
        *discrete_out = action.discrete;
        std::ptr::copy_nonoverlapping(action.continuous.as_ptr(), continuous_out, CONTINUOUS_DIM);
        MahsacStatus::Ok
    })
}

/// Advances the world one tick with the given joint action.
///
/// `discrete` holds one move index per agent, `continuous` one block of
/// continuous values per agent in agent order (`num_agents *
/// continuous_dim` doubles), `rewards_out` receives one reward per agent,
/// and `done_out` is set to true when the episode has reached its configured
/// length.
///
/// # Safety
/// `sim` must be a valid handle; the three arrays must match the lengths
/// described above; `done_out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_step(
    sim: *mut MahsacSim,
    discrete: *const usize,
    discrete_len: usize,
    continuous: *const f64,
    continuous_len: usize,
    rewards_out: *mut f64,
    rewards_len: usize,
    done_out: *mut bool,
) -> MahsacStatus {
    guarded(|| {
        let sim = match sim_mut(sim) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if discrete.is_null() {
            return fail(MahsacStatus::NullPointer, "discrete is null");
        }
        if continuous.is_null() {
            return fail(MahsacStatus::NullPointer, "continuous is null");
        }
        if let Err(s) = require(rewards_out, "rewards_out") {
            return s;
        }
        if let Err(s) = require(done_out, "done_out") {
            return s;
        }
        if !sim.started {
            return fail(
                MahsacStatus::InvalidArgument,
                "mahsac_sim_reset must be called before stepping",
            );
        }
        let n = sim.world.num_agents();
        if discrete_len != n {
            return fail(
                MahsacStatus::BadLength,
                format!("discrete has {discrete_len} entries, need {n}"),
            );
        }
        if continuous_len != n * CONTINUOUS_DIM {
            return fail(
                MahsacStatus::BadLength,
                format!(
                    "continuous has {continuous_len} values, need {}",
                    n * CONTINUOUS_DIM
                ),
            );
        }
        if rewards_len != n {
            return fail(
                MahsacStatus::BadLength,
                format!("rewards buffer holds {rewards_len} values, need {n}"),
            );
        }
        let discrete = std::slice::from_raw_parts(discrete, discrete_len);
        let continuous = std::slice::from_raw_parts(continuous, continuous_len);
        let actions: Vec<HybridAction> = (0..n)
            .map(|i| HybridAction {
                discrete: discrete[i],
                continuous: continuous[i * CONTINUOUS_DIM..(i + 1) * CONTINUOUS_DIM].to_vec(),
            })
            .collect();
        let outcome = match sim.world.step(&actions) {
            Ok(o) => o,
            Err(e) => return fail(MahsacStatus::InvalidArgument, e.to_string()),
        };
        std::ptr::copy_nonoverlapping(outcome.rewards.as_ptr(), rewards_out, n);
        *done_out = outcome.done;
        MahsacStatus::Ok
    })
}

/// Reads the finished episode's aggregate metrics: agent-pair collision
/// events, the per-step landmark-coverage distance (0 when the scenario has
/// no landmarks), and predator-prey touch events.
///
/// Fails with `MAHSAC_STATUS_INVALID_ARGUMENT` while an episode is still in
/// progress.
///
/// # Safety
/// `sim` must be a valid handle; the three out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_metrics(
    sim: *const MahsacSim,
    collisions_out: *mut f64,
    dist_out: *mut f64,
    touches_out: *mut f64,
) -> MahsacStatus {
    guarded(|| {
        let sim = match sim_ref(sim) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(s) = require(collisions_out, "collisions_out") {
            return s;
        }
        if let Err(s) = require(dist_out, "dist_out") {
            return s;
        }
        if let Err(s) = require(touches_out, "touches_out") {
            return s;
        }
        let metrics = match sim.world.episode_metrics() {
            Ok(m) => m,
            Err(e) => return fail(MahsacStatus::InvalidArgument, e.to_string()),
        };
        *collisions_out = metrics.collisions as f64;
        *dist_out = metrics.dist;
        *touches_out = metrics.touches as f64;
        MahsacStatus::Ok
    })
}

/// Runs the standard deterministic evaluation protocol in a scratch copy of
/// the world: `episodes` full episodes seeded from `seed`'s evaluation
/// stream, policies in deterministic mode.  Writes the mean undiscounted
/// team return and the mean per-episode metrics.  The handle's own rollout
/// state is left untouched.
///
/// # Safety
/// `sim` must be a valid handle; the four out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mahsac_sim_evaluate(
    sim: *const MahsacSim,
    seed: u64,
    episodes: u64,
    mean_team_return_out: *mut f64,
    mean_collisions_out: *mut f64,
    mean_dist_out: *mut f64,
    mean_touches_out: *mut f64,
) -> MahsacStatus {
    guarded(|| {
        let sim = match sim_ref(sim) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(s) = require(mean_team_return_out, "mean_team_return_out") {
            return s;
        }
        if let Err(s) = require(mean_collisions_out, "mean_collisions_out") {
            return s;
        }
        if let Err(s) = require(mean_dist_out, "mean_dist_out") {
            return s;
        }
        if let Err(s) = require(mean_touches_out, "mean_touches_out") {
            return s;
        }
        if episodes == 0 {
            return fail(MahsacStatus::InvalidArgument, "episodes must be positive");
        }
        let mut world = match World::new(sim.world.config().clone()) {
            Ok(w) => w,
            Err(e) => return fail(MahsacStatus::InvalidArgument, e.to_string()),
        };
        let summary = match evaluate(&mut world, &sim.learners, seed, episodes, sim.gamma) {
            Ok(s) => s,
            Err(e) => return fail(MahsacStatus::InvalidArgument, e.to_string()),
        };
        *mean_team_return_out = summary.mean_team_return;
        *mean_collisions_out = summary.mean_collisions;
        *mean_dist_out = summary.mean_dist;
        *mean_touches_out = summary.mean_touches;
        MahsacStatus::Ok
    })
}

/// Copies the calling thread's most recent error message into `buf` as a
/// NUL-terminated string, truncating if necessary, and returns the full
/// message length in bytes (excluding the NUL).  With a null `buf` or zero
/// `cap`, only the length is returned.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mahsac_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Returns a static name for a status code (e.g. `"ok"`, `"bad_length"`).
#[no_mangle]
pub extern "C" fn mahsac_status_name(status: MahsacStatus) -> *const c_char {
    let name: &[u8] = match status {
        MahsacStatus::Ok => b"ok\0",
        MahsacStatus::NullPointer => b"null_pointer\0",
        MahsacStatus::InvalidArgument => b"invalid_argument\0",
        MahsacStatus::BadLength => b"bad_length\0",
        MahsacStatus::IoError => b"io_error\0",
        MahsacStatus::ParseError => b"parse_error\0",
        MahsacStatus::OutOfRange => b"out_of_range\0",
        MahsacStatus::Panic => b"panic\0",
    };
    name.as_ptr() as *const c_char
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn new_sim(scenario: &str, algorithm: &str, seed: u64) -> *mut MahsacSim {
        let mut sim: *mut MahsacSim = ptr::null_mut();
        let status = unsafe {
            mahsac_sim_new(
                cstr(scenario).as_ptr(),
                cstr(algorithm).as_ptr(),
                seed,
                &mut sim,
            )
        };
        assert_eq!(status, MahsacStatus::Ok);
        assert!(!sim.is_null());
        sim
    }

    /// Test-only view of a handle's internals.
    unsafe fn inner<'a>(sim: *mut MahsacSim) -> &'a MahsacSim {
        &*sim
    }

    fn last_error_string() -> String {
        let needed = unsafe { mahsac_last_error(ptr::null_mut(), 0) };
        let mut buf = vec![0i8; needed + 1];
        unsafe { mahsac_last_error(buf.as_mut_ptr() as *mut c_char, buf.len()) };
        let bytes: Vec<u8> = buf[..needed].iter().map(|&b| b as u8).collect();
        String::from_utf8(bytes).unwrap()
    }

    #[test]
    fn full_episode_through_the_c_surface() {
        let sim = new_sim("coop_nav", "mahsac", 7);
        unsafe {
            let mut n = 0usize;
            assert_eq!(mahsac_sim_num_agents(sim, &mut n), MahsacStatus::Ok);
            assert_eq!(n, 3);

            let (mut moves, mut cdim) = (0usize, 0usize);
            assert_eq!(
                mahsac_sim_action_dims(sim, &mut moves, &mut cdim),
                MahsacStatus::Ok
            );
            assert_eq!(moves, 5);
            assert_eq!(cdim, 1);

            let mut steps = 0usize;
            assert_eq!(mahsac_sim_episode_length(sim, &mut steps), MahsacStatus::Ok);
            assert_eq!(steps, 25);

            assert_eq!(mahsac_sim_reset(sim, 0), MahsacStatus::Ok);

            let mut obs_dim = 0usize;
            assert_eq!(mahsac_sim_obs_dim(sim, 0, &mut obs_dim), MahsacStatus::Ok);

            let mut done = false;
            for _ in 0..steps {
                let mut discrete = vec![0usize; n];
                let mut continuous = vec![0.0f64; n * cdim];
                for agent in 0..n {
                    let mut dim = 0usize;
                    mahsac_sim_obs_dim(sim, agent, &mut dim);
                    let mut obs = vec![0.0f64; dim];
                    assert_eq!(
                        mahsac_sim_observe(sim, agent, obs.as_mut_ptr(), dim),
                        MahsacStatus::Ok
                    );
                    assert_eq!(
                        mahsac_sim_act(
                            sim,
                            agent,
                            obs.as_ptr(),
                            dim,
                            false,
                            &mut discrete[agent],
                            continuous[agent * cdim..].as_mut_ptr(),
                            cdim,
                        ),
                        MahsacStatus::Ok
                    );
                    assert!(discrete[agent] < moves);
                    assert!(continuous[agent * cdim].abs() <= 1.0);
                }
                let mut rewards = vec![0.0f64; n];
                assert_eq!(
                    mahsac_sim_step(
                        sim,
                        discrete.as_ptr(),
                        n,
                        continuous.as_ptr(),
                        n * cdim,
                        rewards.as_mut_ptr(),
                        n,
                        &mut done,
                    ),
                    MahsacStatus::Ok
                );
                assert!(rewards.iter().all(|r| r.is_finite()));
            }
            assert!(done);

            let (mut col, mut dist, mut touch) = (0.0, 0.0, 0.0);
            assert_eq!(
                mahsac_sim_metrics(sim, &mut col, &mut dist, &mut touch),
                MahsacStatus::Ok
            );
            assert!(col >= 0.0 && dist > 0.0 && touch == 0.0);

            mahsac_sim_free(sim);
        }
    }

    #[test]
    fn deterministic_act_matches_core_policy() {
        let sim = new_sim("predator_prey", "ihsac", 11);
        unsafe {
            assert_eq!(mahsac_sim_reset(sim, 3), MahsacStatus::Ok);
            let mut dim = 0usize;
            assert_eq!(mahsac_sim_obs_dim(sim, 1, &mut dim), MahsacStatus::Ok);
            let mut obs = vec![0.0f64; dim];
            assert_eq!(
                mahsac_sim_observe(sim, 1, obs.as_mut_ptr(), dim),
                MahsacStatus::Ok
            );

            let mut d = 0usize;
            let mut c = vec![0.0f64; CONTINUOUS_DIM];
            assert_eq!(
                mahsac_sim_act(sim, 1, obs.as_ptr(), dim, true, &mut d, c.as_mut_ptr(), c.len()),
                MahsacStatus::Ok
            );

            // The same policy invoked directly must agree bit for bit.
            let reference = &inner(sim).learners[1];
            let mut rng = stream_rng(11, StreamKind::Action, 3);
            let expected = reference.act(&obs, &mut rng, true).unwrap();
            assert_eq!(d, expected.discrete);
            assert_eq!(c, expected.continuous);

            mahsac_sim_free(sim);
        }
    }

    #[test]
    fn stochastic_rollouts_replay_exactly_per_episode_index() {
        let sim = new_sim("coop_nav", "mahsac", 5);
        unsafe {
            let run_episode = |sim: *mut MahsacSim| -> Vec<(usize, f64)> {
                assert_eq!(mahsac_sim_reset(sim, 42), MahsacStatus::Ok);
                let mut trace = Vec::new();
                for _ in 0..25 {
                    let mut discrete = vec![0usize; 3];
                    let mut continuous = vec![0.0f64; 3];
                    for agent in 0..3 {
                        let mut dim = 0usize;
                        mahsac_sim_obs_dim(sim, agent, &mut dim);
                        let mut obs = vec![0.0f64; dim];
                        mahsac_sim_observe(sim, agent, obs.as_mut_ptr(), dim);
                        mahsac_sim_act(
                            sim,
                            agent,
                            obs.as_ptr(),
                            dim,
                            false,
                            &mut discrete[agent],
                            continuous[agent..].as_mut_ptr(),
                            1,
                        );
                    }
                    let mut rewards = vec![0.0f64; 3];
                    let mut done = false;
                    mahsac_sim_step(
                        sim,
                        discrete.as_ptr(),
                        3,
                        continuous.as_ptr(),
                        3,
                        rewards.as_mut_ptr(),
                        3,
                        &mut done,
                    );
                    trace.push((discrete[0], rewards[0]));
                }
                trace
            };
            let first = run_episode(sim);
            let second = run_episode(sim);
            assert_eq!(first, second);
            mahsac_sim_free(sim);
        }
    }

    #[test]
    fn load_round_trips_a_saved_checkpoint() {
        use mahsac::harness::{save_checkpoint, ExperimentConfig};

        let dir = std::env::temp_dir().join(format!("mahsac_ffi_ckpt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("checkpoint.txt");

        let cfg = ExperimentConfig::parse_str(
            "[experiment]\nscenario = coop_nav\nalgorithm = mahsac\nseed = 9\n",
        )
        .unwrap();
        let (_world, learners) = build_team(&cfg).unwrap();
        save_checkpoint(&path, 17, &cfg, &learners).unwrap();

        let c_path = cstr(path.to_str().unwrap());
        let mut sim: *mut MahsacSim = ptr::null_mut();
        unsafe {
            assert_eq!(mahsac_sim_load(c_path.as_ptr(), &mut sim), MahsacStatus::Ok);
            assert_eq!(mahsac_sim_reset(sim, 0), MahsacStatus::Ok);

            let mut dim = 0usize;
            mahsac_sim_obs_dim(sim, 0, &mut dim);
            let mut obs = vec![0.0f64; dim];
            mahsac_sim_observe(sim, 0, obs.as_mut_ptr(), dim);

            let mut d = 0usize;
            let mut c = [0.0f64; 1];
            assert_eq!(
                mahsac_sim_act(sim, 0, obs.as_ptr(), dim, true, &mut d, c.as_mut_ptr(), 1),
                MahsacStatus::Ok
            );
            let mut rng = stream_rng(9, StreamKind::Action, 0);
            let expected = learners[0].act(&obs, &mut rng, true).unwrap();
            assert_eq!(d, expected.discrete);
            assert_eq!(c[0], expected.continuous[0]);
            mahsac_sim_free(sim);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn evaluate_matches_the_library_protocol() {
        let sim = new_sim("coop_nav", "ihsac", 2);
        unsafe {
            let (mut ret, mut col, mut dist, mut touch) = (0.0, 0.0, 0.0, 0.0);
            assert_eq!(
                mahsac_sim_evaluate(sim, 2, 5, &mut ret, &mut col, &mut dist, &mut touch),
                MahsacStatus::Ok
            );
            let cfg = inner(sim).world.config().clone();
            let mut world = World::new(cfg).unwrap();
            let expected = evaluate(&mut world, &inner(sim).learners, 2, 5, inner(sim).gamma).unwrap();
            assert_eq!(ret, expected.mean_team_return);
            assert_eq!(col, expected.mean_collisions);
            assert_eq!(dist, expected.mean_dist);
            assert_eq!(touch, expected.mean_touches);
            mahsac_sim_free(sim);
        }
    }

    #[test]
    fn error_paths_report_status_and_message() {
        unsafe {
            // Null out-pointer.
            assert_eq!(
                mahsac_sim_new(cstr("coop_nav").as_ptr(), cstr("mahsac").as_ptr(), 0, ptr::null_mut()),
                MahsacStatus::NullPointer
            );

            // Unknown scenario.
            let mut sim: *mut MahsacSim = ptr::null_mut();
            assert_eq!(
                mahsac_sim_new(cstr("soccer").as_ptr(), cstr("mahsac").as_ptr(), 0, &mut sim),
                MahsacStatus::InvalidArgument
            );
            assert!(last_error_string().contains("soccer"));

            // Unknown algorithm.
            assert_eq!(
                mahsac_sim_new(cstr("coop_nav").as_ptr(), cstr("dqn").as_ptr(), 0, &mut sim),
                MahsacStatus::InvalidArgument
            );

            // Missing checkpoint file.
            assert_eq!(
                mahsac_sim_load(cstr("/no/such/file").as_ptr(), &mut sim),
                MahsacStatus::IoError
            );

            // Real handle, bad lengths and indices.
            let sim = new_sim("coop_nav", "mahsac", 0);
            let mut dim = 0usize;
            assert_eq!(mahsac_sim_obs_dim(sim, 99, &mut dim), MahsacStatus::OutOfRange);

            assert_eq!(mahsac_sim_reset(sim, 0), MahsacStatus::Ok);
            let mut buf = [0.0f64; 3];
            assert_eq!(
                mahsac_sim_observe(sim, 0, buf.as_mut_ptr(), 3),
                MahsacStatus::BadLength
            );
            assert!(last_error_string().contains("3"));

            // Metrics mid-episode are rejected.
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            assert_eq!(
                mahsac_sim_metrics(sim, &mut a, &mut b, &mut c),
                MahsacStatus::InvalidArgument
            );

            // Observe before any reset is rejected on a fresh handle.
            let fresh = new_sim("coop_nav", "mahsac", 1);
            let mut dim0 = 0usize;
            mahsac_sim_obs_dim(fresh, 0, &mut dim0);
            let mut obs = vec![0.0f64; dim0];
            assert_eq!(
                mahsac_sim_observe(fresh, 0, obs.as_mut_ptr(), dim0),
                MahsacStatus::InvalidArgument
            );

            // Status names are stable strings.
            let name = CStr::from_ptr(mahsac_status_name(MahsacStatus::BadLength));
            assert_eq!(name.to_str().unwrap(), "bad_length");

            mahsac_sim_free(sim);
            mahsac_sim_free(fresh);
            // Freeing null is a no-op.
            mahsac_sim_free(ptr::null_mut());
        }
    }
}

/* C interface for the hybrid-action multi-agent learner and its particle world. */

#ifndef MAHSAC_H
#define MAHSAC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes returned by every fallible function in this library.
typedef enum MahsacStatus {
  // Success; out-parameters are valid.
  MAHSAC_STATUS_OK = 0,
  // A required pointer argument was null.
  MAHSAC_STATUS_NULL_POINTER = 1,
  // An argument value was rejected (unknown name, wrong state, bad value).
  MAHSAC_STATUS_INVALID_ARGUMENT = 2,
  // A buffer length did not match the handle's dimensions.
  MAHSAC_STATUS_BAD_LENGTH = 3,
  // A file could not be read.
  MAHSAC_STATUS_IO_ERROR = 4,
  // A file was read but its contents did not parse.
  MAHSAC_STATUS_PARSE_ERROR = 5,
  // An agent index was out of range.
  MAHSAC_STATUS_OUT_OF_RANGE = 6,
  // An internal panic was caught at the boundary.
  MAHSAC_STATUS_PANIC = 7,
} MahsacStatus;

// An initialized world plus one policy per agent.
//
// The struct is opaque to C; all access goes through the `mahsac_sim_*`
// functions.
typedef struct MahsacSim MahsacSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a simulation with freshly initialized policies.
//
// `scenario` is `"coop_nav"` or `"predator_prey"`; `algorithm` is
// `"mahsac"` (joint-observation critics) or `"ihsac"` (local critics) and
// applies to every agent.  `seed` is the master seed for initialization and
// all rollout randomness.
//
// # Safety
// `scenario` and `algorithm` must be valid NUL-terminated strings and `out`
// must be a valid pointer.  On success `*out` owns the handle and must be
// released with [`mahsac_sim_free`].
enum MahsacStatus mahsac_sim_new(const char *scenario,
                                 const char *algorithm,
                                 uint64_t seed,
                                 struct MahsacSim **out);

// Loads policies from a training checkpoint file and builds the matching
// world.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
// On success `*out` owns the handle and must be released with
// [`mahsac_sim_free`].
enum MahsacStatus mahsac_sim_load(const char *path, struct MahsacSim **out);

// Releases a handle.  Passing null is a no-op.
//
// # Safety
// `sim` must be null or an unfreed handle from this library; it must not be
// used afterwards.
void mahsac_sim_free(struct MahsacSim *sim);

// Writes the number of agents to `out`.
//
// # Safety
// `sim` must be a valid handle and `out` a valid pointer.
enum MahsacStatus mahsac_sim_num_agents(const struct MahsacSim *sim, size_t *out);

// Writes agent `agent`'s observation length to `out`.
//
// # Safety
// `sim` must be a valid handle and `out` a valid pointer.
enum MahsacStatus mahsac_sim_obs_dim(const struct MahsacSim *sim, size_t agent, size_t *out);

// Writes the number of discrete moves and the continuous dimension of every
// agent's action.
//
// # Safety
// `sim` must be a valid handle; `discrete_out` and `continuous_out` must be
// valid pointers.
enum MahsacStatus mahsac_sim_action_dims(const struct MahsacSim *sim,
                                         size_t *discrete_out,
                                         size_t *continuous_out);

// Writes the configured episode length (steps per episode) to `out`.
//
// # Safety
// `sim` must be a valid handle and `out` a valid pointer.
enum MahsacStatus mahsac_sim_episode_length(const struct MahsacSim *sim, size_t *out);

// Starts episode `episode`: redraws entity placements from the per-episode
// environment stream and reseeds the per-episode action stream, so a replay
// of the same episode index reproduces the same rollout bit for bit.
//
// # Safety
// `sim` must be a valid handle.
enum MahsacStatus mahsac_sim_reset(struct MahsacSim *sim, uint64_t episode);

// Copies agent `agent`'s current observation into `buf`.
//
// `len` must equal the value reported by [`mahsac_sim_obs_dim`].
//
// # Safety
// `sim` must be a valid handle and `buf` must point to `len` writable
// doubles.
enum MahsacStatus mahsac_sim_observe(const struct MahsacSim *sim,
                                     size_t agent,
                                     double *buf,
                                     size_t len);

// Runs agent `agent`'s policy on a caller-provided observation.
//
// This is the decentralized-execution entry point: the policy sees only the
// observation passed in, never the rest of the world.  With
// `deterministic = true` the modal action is returned (argmax discrete
// choice, tanh of the Gaussian mean); otherwise both heads are sampled from
// the handle's action stream.  `continuous_len` must equal the continuous
// dimension from [`mahsac_sim_action_dims`].
//
// # Safety
// `sim` must be a valid handle, `obs` must point to `obs_len` readable
// doubles, and `discrete_out` / `continuous_out` must be writable
// (`continuous_out` for `continuous_len` doubles).
enum MahsacStatus mahsac_sim_act(struct MahsacSim *sim,
                                 size_t agent,
                                 const double *obs,
                                 size_t obs_len,
                                 bool deterministic,
                                 size_t *discrete_out,
                                 double *continuous_out,
                                 size_t continuous_len);

// Advances the world one tick with the given joint action.
//
// `discrete` holds one move index per agent, `continuous` one block of
// continuous values per agent in agent order (`num_agents *
// continuous_dim` doubles), `rewards_out` receives one reward per agent,
// and `done_out` is set to true when the episode has reached its configured
// length.
//
// # Safety
// `sim` must be a valid handle; the three arrays must match the lengths
// described above; `done_out` must be a valid pointer.
enum MahsacStatus mahsac_sim_step(struct MahsacSim *sim,
                                  const size_t *discrete,
                                  size_t discrete_len,
                                  const double *continuous,
                                  size_t continuous_len,
                                  double *rewards_out,
                                  size_t rewards_len,
                                  bool *done_out);

// Reads the finished episode's aggregate metrics: agent-pair collision
// events, the per-step landmark-coverage distance (0 when the scenario has
// no landmarks), and predator-prey touch events.
//
// Fails with `MAHSAC_STATUS_INVALID_ARGUMENT` while an episode is still in
// progress.
//
// # Safety
// `sim` must be a valid handle; the three out-pointers must be valid.
enum MahsacStatus mahsac_sim_metrics(const struct MahsacSim *sim,
                                     double *collisions_out,
                                     double *dist_out,
                                     double *touches_out);

// Runs the standard deterministic evaluation protocol in a scratch copy of
// the world: `episodes` full episodes seeded from `seed`'s evaluation
// stream, policies in deterministic mode.  Writes the mean undiscounted
// team return and the mean per-episode metrics.  The handle's own rollout
// state is left untouched.
//
// # Safety
// `sim` must be a valid handle; the four out-pointers must be valid.
enum MahsacStatus mahsac_sim_evaluate(const struct MahsacSim *sim,
                                      uint64_t seed,
                                      uint64_t episodes,
                                      double *mean_team_return_out,
                                      double *mean_collisions_out,
                                      double *mean_dist_out,
                                      double *mean_touches_out);

// Copies the calling thread's most recent error message into `buf` as a
// NUL-terminated string, truncating if necessary, and returns the full
// message length in bytes (excluding the NUL).  With a null `buf` or zero
// `cap`, only the length is returned.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t mahsac_last_error(char *buf, size_t cap);

// Returns a static name for a status code (e.g. `"ok"`, `"bad_length"`).
const char *mahsac_status_name(enum MahsacStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAHSAC_H */

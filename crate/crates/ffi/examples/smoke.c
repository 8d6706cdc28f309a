/* Minimal C consumer: build a fresh team, roll one episode, evaluate.
 *
 *   cargo build --release -p mahsac-ffi
 *   cc crates/ffi/examples/smoke.c -Icrates/ffi/include \
 *      target/release/libmahsac_ffi.a -lpthread -ldl -lm -o smoke
 *   ./smoke
 */
#include <stdio.h>
#include <stdlib.h>

#include "mahsac.h"

static void check(MahsacStatus status, const char *what) {
  if (status != MAHSAC_STATUS_OK) {
    char msg[256];
    mahsac_last_error(msg, sizeof msg);
    fprintf(stderr, "%s failed: %s (%s)\n", what, mahsac_status_name(status), msg);
    exit(1);
  }
}

int main(void) {
  MahsacSim *sim = NULL;
  check(mahsac_sim_new("coop_nav", "mahsac", 0, &sim), "new");

  size_t n, moves, cdim, steps;
  check(mahsac_sim_num_agents(sim, &n), "num_agents");
  check(mahsac_sim_action_dims(sim, &moves, &cdim), "action_dims");
  check(mahsac_sim_episode_length(sim, &steps), "episode_length");
  printf("agents=%zu moves=%zu cdim=%zu steps=%zu\n", n, moves, cdim, steps);

  check(mahsac_sim_reset(sim, 0), "reset");
  bool done = false;
  double team = 0.0;
  for (size_t t = 0; t < steps; t++) {
    size_t discrete[8];
    double continuous[8];
    for (size_t a = 0; a < n; a++) {
      size_t dim;
      check(mahsac_sim_obs_dim(sim, a, &dim), "obs_dim");
      double obs[32];
      check(mahsac_sim_observe(sim, a, obs, dim), "observe");
      check(mahsac_sim_act(sim, a, obs, dim, false, &discrete[a],
                           &continuous[a * cdim], cdim),
            "act");
    }
    double rewards[8];
    check(mahsac_sim_step(sim, discrete, n, continuous, n * cdim, rewards, n,
                          &done),
          "step");
    team += rewards[0];
  }
  if (!done) {
    fprintf(stderr, "episode did not finish\n");
    return 1;
  }

  double collisions, dist, touches;
  check(mahsac_sim_metrics(sim, &collisions, &dist, &touches), "metrics");
  printf("episode: reward[0] sum=%.3f collisions=%.0f dist=%.3f\n", team,
         collisions, dist);

  double eval_return, eval_col, eval_dist, eval_touch;
  check(mahsac_sim_evaluate(sim, 1, 3, &eval_return, &eval_col, &eval_dist,
                            &eval_touch),
        "evaluate");
  printf("eval over 3 episodes: team return=%.3f dist=%.3f\n", eval_return,
         eval_dist);

  mahsac_sim_free(sim);
  printf("ok\n");
  return 0;
}

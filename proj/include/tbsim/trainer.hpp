#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tbsim/model.hpp"
#include "tbsim/params.hpp"
#include "tbsim/rng.hpp"

namespace tbsim {

struct TrainConfig {
  int batch_size = 8;
  double free_nats = 1.0;
  double tf_start = 0.30;            // teacher-forced agent fraction at progress 0
  double prior_rollout_frac = 0.10;  // episodes rolled out with the prior personality
  double w_pos = 1.0;
  double w_yaw = 1.0;
  double w_vel = 0.5;
  double w_kl = 1.0;
  double w_dest = 0.5;
  double sl1_delta = 1.0;
  int total_steps = 3000;
  int eval_every = 50;
  int checkpoint_every = 500;
  double stop_at_ade = 0.0;  // early stop threshold for the eval ADE; 0 disables
  AdamConfig adam;
};

// Linear teacher-forcing schedule: tf_start at progress 0, zero at progress 1.
double tf_fraction(double tf_start, double progress);

// Uniform subset of round(fraction * n_active) active agents.
std::vector<uint8_t> draw_teacher_forced(const std::vector<uint8_t>& active, double fraction,
                                         Rng& rng);

enum class PersonalityMode { posterior_sample, posterior_mean, prior_draw };

struct EpisodeOptions {
  PersonalityMode personality = PersonalityMode::posterior_sample;
  std::vector<uint8_t> teacher_forced;  // per selected agent; empty = none
  uint64_t noise_seed = 0;              // reparameterization / prior draws
};

// One auto-regressive training episode on a tape: full BPTT through the
// encoders and the unicycle dynamics, mean actions, GT destination.
struct EpisodeBuild {
  Value total;
  Value loss_pos, loss_yaw, loss_vel, loss_kl, loss_dest;
  std::vector<int> agents;          // selected scenario agent indices
  std::vector<uint8_t> sim_active;  // simulated at warmup end
  std::vector<AgentStateV> predicted;  // states for steps warmup..episode_len-1
  double recon_ade = 0.0;           // displacement of predictions vs GT
};

EpisodeBuild build_episode(Tape& t, const TrafficModel& model, const Scenario& scenario,
                           const TrainConfig& cfg, const EpisodeOptions& opt);

// Closed-loop reconstruction ADE with the posterior mean personality and GT
// destinations; no teacher forcing, no gradients.
double eval_reconstruction_ade(const TrafficModel& model, const Scenario& scenario,
                               const TrainConfig& cfg);

struct TrainResult {
  int64_t steps_run = 0;
  double final_loss = 0.0;
  double final_eval_ade = 0.0;
};

// Full training loop: batches over scenarios, Adam with norm clipping,
// append-only metrics CSV, periodic checkpoints. Throws NumericError when the
// loss stops being finite.
TrainResult train(TrafficModel& model, const std::vector<Scenario>& dataset,
                  const TrainConfig& cfg, uint64_t seed, const std::string& metrics_csv,
                  const std::string& checkpoint_path, Adam* optimizer = nullptr);

}  // namespace tbsim

#pragma once

#include <memory>
#include <vector>

#include "tbsim/dist.hpp"
#include "tbsim/dynamics.hpp"
#include "tbsim/knarpe.hpp"
#include "tbsim/params.hpp"
#include "tbsim/scenario.hpp"
#include "tbsim/tokenize.hpp"

namespace tbsim {

struct ModelConfig {
  int hidden = 128;
  int heads = 4;
  int ff = 512;
  int n_layers = 2;   // transformer blocks per encoder stage
  int pe_dim = 40;    // rpe width = 3 * pe_dim
  double omega = 1000.0;
  int dim_z = 16;
  int history = 11;   // stacked past observations, current step included
  int tl_embed = 16;
  TokenBudget budget;

  // per-set nearest-neighbor counts
  int knn_map_map = 32;
  int knn_tl_map = 24;
  int knn_tl_tl = 24;
  int knn_agent_map = 64;
  int knn_agent_tl = 25;
  int knn_agent_agent = 25;

  RpeConfig rpe() const { return {pe_dim, omega}; }
  int rpe_width() const { return 3 * pe_dim; }
};

struct PointNetParams {
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* ln_g = nullptr;
  Parameter* ln_b = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;
};

// Per-agent kinematic state on the tape, one entry per agent slot.
struct AgentStateV {
  Value x, y, theta, v;  // each [A]
};

// Per-agent action clamp bounds assembled from the agent kinds.
struct ActionBounds {
  Tensor accel_lo, accel_hi, yaw_lo, yaw_hi, speed_lo, speed_hi;  // each [A]
};

ActionBounds action_bounds(const Scenario& s, const std::vector<int>& agents);

struct PolicyOut {
  Value mean;     // [A, 2] (accel, yaw_rate)
  Value log_std;  // [A, 2]
};

// The full network: hierarchical context encoder (map -> traffic lights ->
// agents), personality posterior, destination head, conditioning fusion and
// the action policy. Parameters live in an owned store; every builder is
// const and can run on any tape.
class TrafficModel {
 public:
  TrafficModel(ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }

  // --- token embeddings ----------------------------------------------------
  Value pointnet(Tape& t, const PointNetParams& p, const Value& node_feats,
                 const std::vector<uint8_t>& node_valid, int n_nodes) const;
  // Tokens whose nodes are all masked come back invalid.
  PosedTokensV embed_map(Tape& t, const MapTokens& tokens) const;
  PosedTokensV embed_agents(Tape& t, const TokenPart& tokens) const;
  PosedTokensV embed_agents_posterior(Tape& t, const TokenPart& tokens) const;
  // Needs the map PointNet embeddings to add the associated polyline feature.
  PosedTokensV embed_traffic_lights(Tape& t, const TokenPart& tokens,
                                    const PosedTokensV& map_embed,
                                    const std::vector<int>& assoc_token) const;
  std::vector<int> tl_assoc_tokens(const Scenario& s, const MapTokens& map_tokens) const;

  // --- encoder stages --------------------------------------------------------
  PosedTokensV encode_map(Tape& t, const PosedTokensV& map_embed) const;
  PosedTokensV encode_traffic_lights(Tape& t, const PosedTokensV& tl_embed,
                                     const PosedTokensV& map_encoded) const;
  PosedTokensV encode_agents(Tape& t, const PosedTokensV& agent_embed,
                             const PosedTokensV& map_encoded, const PosedTokensV& tl_feats) const;
  PosedTokensV encode_posterior(Tape& t, const PosedTokensV& agent_embed,
                                const PosedTokensV& map_encoded,
                                const PosedTokensV& tl_feats) const;

  // --- heads -----------------------------------------------------------------
  // (mean, log_std) of the per-agent personality posterior, dim_z each.
  struct GaussianHeads {
    Value mean;
    Value log_std;
  };
  GaussianHeads posterior_head(Tape& t, const PosedTokensV& posterior_feats) const;
  // Bilinear scoring of every agent against every map token -> [A, M] logits.
  Value destination_logits(Tape& t, const PosedTokensV& agent_feats,
                           const PosedTokensV& map_encoded) const;
  // Fuses personality and the destination token (feature + relative pose).
  Value condition(Tape& t, const PosedTokensV& agent_feats, const Value& z,
                  const std::vector<int>& dest_token, const PosedTokensV& map_encoded) const;
  PolicyOut policy(Tape& t, const Value& conditioned) const;

  // --- graph-side rollout pieces ----------------------------------------------
  // History is ordered oldest -> current (current = frame). hist_valid masks
  // per (step, agent); token_valid marks simulated agents.
  PosedTokensV build_agent_tokens(Tape& t, const std::vector<AgentStateV>& history,
                                  const std::vector<std::vector<uint8_t>>& hist_valid,
                                  const Scenario& s, const std::vector<int>& agents,
                                  const std::vector<uint8_t>& token_valid) const;
  // Semi-implicit unicycle step with per-agent clamps; mirrors dynamics::step.
  AgentStateV step_dynamics(Tape& t, const AgentStateV& state, const Value& action_mean,
                            const ActionBounds& bounds, double dt) const;

 private:
  PosedTokensV run_stage(Tape& t, const std::vector<KnarpeBlockParams>& blocks,
                         const PosedTokensV& queries,
                         const std::vector<const PosedTokensV*>& source_sets,
                         const std::vector<int>& per_set_k) const;

  ModelConfig cfg_;
  std::unique_ptr<ParamStore> store_;

  PointNetParams map_pn_, agent_pn_, post_pn_, tl_pn_;
  Parameter* tl_state_embed_ = nullptr;
  std::vector<KnarpeBlockParams> map_blocks_, tl_blocks_, agent_blocks_, post_blocks_;
  Parameter* post_head_w_ = nullptr;
  Parameter* post_head_b_ = nullptr;
  Parameter* dest_w_ = nullptr;
  Parameter* z_mlp_w1_ = nullptr;
  Parameter* z_mlp_b1_ = nullptr;
  Parameter* z_mlp_w2_ = nullptr;
  Parameter* z_mlp_b2_ = nullptr;
  Parameter* dest_rpe_w_ = nullptr;
  Parameter* dest_rpe_b_ = nullptr;
  Parameter* cond_ln_g_ = nullptr;
  Parameter* cond_ln_b_ = nullptr;
  Parameter* policy_w1_ = nullptr;
  Parameter* policy_b1_ = nullptr;
  Parameter* policy_w2_ = nullptr;
  Parameter* policy_b2_ = nullptr;
};

// Concatenates token sets (rows) into one combined source set.
PosedTokensV concat_tokens(Tape& t, const std::vector<const PosedTokensV*>& parts);

// Elementwise select: a where take_a, else b.
Value mix(Tape& t, const std::vector<uint8_t>& take_a, const Value& a, const Value& b);

}  // namespace tbsim

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tbsim/geometry.hpp"
#include "tbsim/scenario.hpp"
#include "tbsim/tensor.hpp"

namespace tbsim {

// Raw node feature layouts (shared with the graph-side token builders).
inline constexpr int kMapNodeRaw = 7;    // dx, dy, rel heading, lane one-hot(4)
inline constexpr int kAgentNodeRaw = 12; // px, py, cos/sin dh, vx, vy, len, wid, kind(3), valid
inline constexpr int kTlStateDim = 4;    // unknown, red, yellow, green

struct TokenBudget {
  int map_tokens = 1024;
  int tl_tokens = 128;
  int agent_tokens = 64;
};

// One token family: poses, validity, and stacked per-node raw features
// ([n_tokens * n_nodes, raw_dim], invalid nodes zeroed and masked).
struct TokenPart {
  std::vector<Pose2D> poses;
  std::vector<uint8_t> valid;
  Tensor node_feats;
  std::vector<uint8_t> node_valid;
  int n_nodes = 0;

  int count() const { return static_cast<int>(poses.size()); }
};

struct MapTokens : TokenPart {
  std::vector<int> token_polyline;        // token -> scenario.map index
  std::vector<int> polyline_first_token;  // scenario.map index -> token or -1
  std::vector<std::vector<std::array<double, 2>>> token_points;  // resampled world points
  bool truncated = false;
};

// Resamples polylines at 1 m arc length, chunks them into tokens of at most
// `max_segments` segments, and keeps the `max_tokens` tokens nearest the
// scenario centroid when over budget.
MapTokens tokenize_map(const Scenario& s, int max_tokens = 1024, int max_segments = 20);

// Agents kept for simulation: the `max_agents` tracks with the most valid GT
// steps, ties by lower index; order follows the scenario file.
std::vector<int> select_agents(const Scenario& s, int max_agents = 64);

// GT-state agent tokens over the window [t_end-window+1, t_end]; token pose
// is the agent pose at t_end. Tokens of agents with invalid GT at t_end are
// masked.
TokenPart tokenize_agents(const Scenario& s, const std::vector<int>& agents, int t_end,
                          int window);

// General form: the token frame and validity come from frame_step while the
// node window covers [first_step, first_step + n_steps). The personality
// encoder uses this with the whole episode as the window.
TokenPart tokenize_agents_window(const Scenario& s, const std::vector<int>& agents, int frame_step,
                                 int first_step, int n_steps);

// Traffic-light tokens at step t_end: per-window-step state one-hot nodes;
// token pose comes from the first map token of the associated polyline.
TokenPart tokenize_traffic_lights(const Scenario& s, const MapTokens& map_tokens, int t_end,
                                  int window);

// GT destination: the valid map token nearest (point-to-segment distance) to
// each agent's last valid GT position; -1 for agents with no valid step.
std::vector<int> destination_labels(const Scenario& s, const std::vector<int>& agents,
                                    const MapTokens& map_tokens);

double point_to_token_distance(const MapTokens& map_tokens, int token, double x, double y);

}  // namespace tbsim

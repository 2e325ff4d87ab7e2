#include "tbsim/tokenize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "tbsim/common.hpp"

namespace tbsim {

namespace {

// Arc-length resampling at 1 m spacing; the endpoint is always kept so the
// total length is preserved.
std::vector<std::array<double, 2>> resample_polyline(const std::vector<std::array<double, 2>>& pts,
                                                     double spacing) {
  std::vector<std::array<double, 2>> out;
  out.push_back(pts[0]);
  double carry = 0.0;
  for (size_t i = 1; i < pts.size(); ++i) {
    double ax = pts[i - 1][0], ay = pts[i - 1][1];
    const double bx = pts[i][0], by = pts[i][1];
    double seg = std::hypot(bx - ax, by - ay);
    while (carry + seg >= spacing - 1e-12) {
      const double need = spacing - carry;
      const double f = need / seg;
      ax += (bx - ax) * f;
      ay += (by - ay) * f;
      out.push_back({ax, ay});
      seg = std::hypot(bx - ax, by - ay);
      carry = 0.0;
    }
    carry += seg;
  }
  const auto& last = pts.back();
  if (carry > 1e-9) out.push_back(last);
  return out;
}

}  // namespace

MapTokens tokenize_map(const Scenario& s, int max_tokens, int max_segments) {
  MapTokens out;
  out.n_nodes = max_segments;
  out.polyline_first_token.assign(s.map.size(), -1);

  struct RawToken {
    Pose2D pose;
    std::vector<std::array<double, 2>> points;  // n_seg + 1 world points
    int polyline = 0;
    LaneType lane_type = LaneType::lane;
  };
  std::vector<RawToken> raw;

  for (size_t pi = 0; pi < s.map.size(); ++pi) {
    const MapPolyline& poly = s.map[pi];
    TBSIM_CHECK(poly.points.size() >= 2, "tokenize_map: polyline with fewer than 2 points");
    const auto pts = resample_polyline(poly.points, 1.0);
    const int n_seg = static_cast<int>(pts.size()) - 1;
    for (int start = 0; start < n_seg; start += max_segments) {
      const int take = std::min(max_segments, n_seg - start);
      RawToken tok;
      tok.polyline = static_cast<int>(pi);
      tok.lane_type = poly.lane_type;
      tok.points.assign(pts.begin() + start, pts.begin() + start + take + 1);
      const double hx = tok.points[1][0] - tok.points[0][0];
      const double hy = tok.points[1][1] - tok.points[0][1];
      tok.pose = {tok.points[0][0], tok.points[0][1], std::atan2(hy, hx)};
      raw.push_back(std::move(tok));
    }
  }

  if (static_cast<int>(raw.size()) > max_tokens) {
    double cx = 0.0, cy = 0.0;
    int64_t n = 0;
    for (const auto& poly : s.map)
      for (const auto& p : poly.points) {
        cx += p[0];
        cy += p[1];
        ++n;
      }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    std::vector<std::pair<double, int>> dist;
    dist.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
      const double dx = raw[i].pose.x - cx, dy = raw[i].pose.y - cy;
      dist.emplace_back(dx * dx + dy * dy, static_cast<int>(i));
    }
    std::sort(dist.begin(), dist.end());
    std::vector<int> keep;
    for (int i = 0; i < max_tokens; ++i) keep.push_back(dist[static_cast<size_t>(i)].second);
    std::sort(keep.begin(), keep.end());
    std::vector<RawToken> trimmed;
    trimmed.reserve(keep.size());
    for (int i : keep) trimmed.push_back(std::move(raw[static_cast<size_t>(i)]));
    raw = std::move(trimmed);
    out.truncated = true;
    std::fprintf(stderr, "tokenize_map: truncated map to %d tokens nearest the centroid\n",
                 max_tokens);
  }

  const int n_tok = static_cast<int>(raw.size());
  out.node_feats = Tensor::zeros({n_tok * max_segments, kMapNodeRaw});
  out.node_valid.assign(static_cast<size_t>(n_tok) * max_segments, 0);
  for (int ti = 0; ti < n_tok; ++ti) {
    const RawToken& tok = raw[static_cast<size_t>(ti)];
    out.poses.push_back(tok.pose);
    out.valid.push_back(1);
    out.token_polyline.push_back(tok.polyline);
    if (out.polyline_first_token[static_cast<size_t>(tok.polyline)] < 0)
      out.polyline_first_token[static_cast<size_t>(tok.polyline)] = ti;
    const int n_seg = static_cast<int>(tok.points.size()) - 1;
    for (int si = 0; si < n_seg; ++si) {
      double lx, ly;
      world_to_local(tok.pose, tok.points[static_cast<size_t>(si)][0],
                     tok.points[static_cast<size_t>(si)][1], &lx, &ly);
      const double hx = tok.points[static_cast<size_t>(si) + 1][0] - tok.points[static_cast<size_t>(si)][0];
      const double hy = tok.points[static_cast<size_t>(si) + 1][1] - tok.points[static_cast<size_t>(si)][1];
      const int row = ti * max_segments + si;
      out.node_feats.at(row, 0) = lx;
      out.node_feats.at(row, 1) = ly;
      out.node_feats.at(row, 2) = wrap_angle(std::atan2(hy, hx) - tok.pose.theta);
      out.node_feats.at(row, 3 + static_cast<int>(tok.lane_type)) = 1.0;
      out.node_valid[static_cast<size_t>(row)] = 1;
    }
    out.token_points.push_back(tok.points);
  }
  return out;
}

std::vector<int> select_agents(const Scenario& s, int max_agents) {
  std::vector<int> idx(s.agents.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (static_cast<int>(idx.size()) <= max_agents) return idx;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const int va = s.agents[static_cast<size_t>(a)].valid_count();
    const int vb = s.agents[static_cast<size_t>(b)].valid_count();
    if (va != vb) return va > vb;
    return a < b;
  });
  idx.resize(static_cast<size_t>(max_agents));
  std::sort(idx.begin(), idx.end());
  return idx;
}

TokenPart tokenize_agents(const Scenario& s, const std::vector<int>& agents, int t_end,
                          int window) {
  return tokenize_agents_window(s, agents, t_end, t_end - window + 1, window);
}

TokenPart tokenize_agents_window(const Scenario& s, const std::vector<int>& agents, int frame_step,
                                 int first_step, int n_steps) {
  TokenPart out;
  const int window = n_steps;
  out.n_nodes = window;
  const int n = static_cast<int>(agents.size());
  out.node_feats = Tensor::zeros({n * window, kAgentNodeRaw});
  out.node_valid.assign(static_cast<size_t>(n) * window, 0);
  for (int ai = 0; ai < n; ++ai) {
    const AgentTrack& track = s.agents[static_cast<size_t>(agents[static_cast<size_t>(ai)])];
    const AgentStep& cur = track.states[static_cast<size_t>(frame_step)];
    out.poses.push_back({cur.x, cur.y, cur.theta});
    out.valid.push_back(cur.valid ? 1 : 0);
    if (!cur.valid) continue;
    const Pose2D frame{cur.x, cur.y, cur.theta};
    for (int w = 0; w < window; ++w) {
      const int t = first_step + w;
      if (t < 0 || t >= s.episode_len) continue;
      const AgentStep& st = track.states[static_cast<size_t>(t)];
      if (!st.valid) continue;
      const int row = ai * window + w;
      double px, py;
      world_to_local(frame, st.x, st.y, &px, &py);
      const double dh = st.theta - cur.theta;
      const double c = std::cos(frame.theta), si = std::sin(frame.theta);
      out.node_feats.at(row, 0) = px;
      out.node_feats.at(row, 1) = py;
      out.node_feats.at(row, 2) = std::cos(dh);
      out.node_feats.at(row, 3) = std::sin(dh);
      out.node_feats.at(row, 4) = c * st.vx + si * st.vy;
      out.node_feats.at(row, 5) = -si * st.vx + c * st.vy;
      out.node_feats.at(row, 6) = track.length;
      out.node_feats.at(row, 7) = track.width;
      out.node_feats.at(row, 8 + static_cast<int>(track.kind)) = 1.0;
      out.node_feats.at(row, 11) = 1.0;
      out.node_valid[static_cast<size_t>(row)] = 1;
    }
  }
  return out;
}

TokenPart tokenize_traffic_lights(const Scenario& s, const MapTokens& map_tokens, int t_end,
                                  int window) {
  TokenPart out;
  out.n_nodes = window;
  const int n = static_cast<int>(s.traffic_lights.size());
  out.node_feats = Tensor::zeros({n * window, kTlStateDim});
  out.node_valid.assign(static_cast<size_t>(n) * window, 0);
  for (int ti = 0; ti < n; ++ti) {
    const TrafficLight& tl = s.traffic_lights[static_cast<size_t>(ti)];
    int poly_index = -1;
    for (size_t pi = 0; pi < s.map.size(); ++pi)
      if (s.map[pi].id == tl.polyline_id) poly_index = static_cast<int>(pi);
    const int tok = poly_index >= 0 ? map_tokens.polyline_first_token[static_cast<size_t>(poly_index)] : -1;
    if (tok < 0) {
      out.poses.push_back({0, 0, 0});
      out.valid.push_back(0);
      continue;
    }
    out.poses.push_back(map_tokens.poses[static_cast<size_t>(tok)]);
    out.valid.push_back(1);
    for (int w = 0; w < window; ++w) {
      const int t = t_end - window + 1 + w;
      if (t < 0) continue;
      const int row = ti * window + w;
      out.node_feats.at(row, static_cast<int>(tl.states[static_cast<size_t>(t)])) = 1.0;
      out.node_valid[static_cast<size_t>(row)] = 1;
    }
  }
  return out;
}

double point_to_token_distance(const MapTokens& map_tokens, int token, double x, double y) {
  const auto& pts = map_tokens.token_points[static_cast<size_t>(token)];
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < pts.size(); ++i) {
    const double ax = pts[i][0], ay = pts[i][1];
    const double bx = pts[i + 1][0], by = pts[i + 1][1];
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((x - ax) * vx + (y - ay) * vy) / len2 : 0.0;
    t = std::min(1.0, std::max(0.0, t));
    const double px = ax + t * vx, py = ay + t * vy;
    best = std::min(best, std::hypot(x - px, y - py));
  }
  return best;
}

std::vector<int> destination_labels(const Scenario& s, const std::vector<int>& agents,
                                    const MapTokens& map_tokens) {
  std::vector<int> labels(agents.size(), -1);
  for (size_t ai = 0; ai < agents.size(); ++ai) {
    const AgentTrack& track = s.agents[static_cast<size_t>(agents[ai])];
    int last = -1;
    for (int t = static_cast<int>(track.states.size()) - 1; t >= 0; --t) {
      if (track.states[static_cast<size_t>(t)].valid) {
        last = t;
        break;
      }
    }
    if (last < 0) continue;
    const double x = track.states[static_cast<size_t>(last)].x;
    const double y = track.states[static_cast<size_t>(last)].y;
    double best = std::numeric_limits<double>::infinity();
    int best_tok = -1;
    for (int tok = 0; tok < map_tokens.count(); ++tok) {
      if (!map_tokens.valid[static_cast<size_t>(tok)]) continue;
      const double d = point_to_token_distance(map_tokens, tok, x, y);
      if (d < best) {
        best = d;
        best_tok = tok;
      }
    }
    labels[ai] = best_tok;
  }
  return labels;
}

}  // namespace tbsim

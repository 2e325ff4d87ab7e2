#include "tbsim/model.hpp"

#include <cmath>

#include "tbsim/common.hpp"
#include "tbsim/knn.hpp"

namespace tbsim {

ActionBounds action_bounds(const Scenario& s, const std::vector<int>& agents) {
  const int n = static_cast<int>(agents.size());
  ActionBounds b;
  b.accel_lo = Tensor::zeros({n});
  b.accel_hi = Tensor::zeros({n});
  b.yaw_lo = Tensor::zeros({n});
  b.yaw_hi = Tensor::zeros({n});
  b.speed_lo = Tensor::zeros({n});
  b.speed_hi = Tensor::zeros({n});
  for (int i = 0; i < n; ++i) {
    const KindParams kp = default_kind_params(s.agents[static_cast<size_t>(agents[static_cast<size_t>(i)])].kind);
    b.accel_lo[i] = -kp.max_decel;
    b.accel_hi[i] = kp.max_accel;
    b.yaw_lo[i] = -kp.max_yaw_rate;
    b.yaw_hi[i] = kp.max_yaw_rate;
    b.speed_lo[i] = -kp.max_speed;
    b.speed_hi[i] = kp.max_speed;
  }
  return b;
}

namespace {

PointNetParams make_pointnet(ParamStore& store, const std::string& prefix, int in_dim, int hidden,
                             Rng& rng) {
  PointNetParams p;
  p.w1 = store.create(prefix + "/w1", {in_dim, hidden});
  init_xavier(*p.w1, rng);
  p.b1 = store.create(prefix + "/b1", {hidden});
  p.ln_g = store.create(prefix + "/ln_g", {hidden});
  init_constant(*p.ln_g, 1.0);
  p.ln_b = store.create(prefix + "/ln_b", {hidden});
  p.w2 = store.create(prefix + "/w2", {hidden, hidden});
  init_xavier(*p.w2, rng);
  p.b2 = store.create(prefix + "/b2", {hidden});
  return p;
}

std::vector<KnarpeBlockParams> make_blocks(ParamStore& store, const std::string& prefix,
                                           const ModelConfig& cfg, Rng& rng) {
  std::vector<KnarpeBlockParams> out;
  for (int i = 0; i < cfg.n_layers; ++i)
    out.push_back(make_knarpe_block(store, prefix + "/block" + std::to_string(i), cfg.hidden,
                                    cfg.heads, cfg.ff, cfg.rpe_width(), rng));
  return out;
}

Value as_col(Tape& t, const Value& v) { return t.reshape(v, {v.dim(0), 1}); }

}  // namespace

TrafficModel::TrafficModel(ModelConfig cfg, uint64_t init_seed)
    : cfg_(cfg), store_(std::make_unique<ParamStore>()) {
  Rng rng(init_seed);
  ParamStore& s = *store_;
  map_pn_ = make_pointnet(s, "map_pn", kMapNodeRaw, cfg_.hidden, rng);
  agent_pn_ = make_pointnet(s, "agent_pn", kAgentNodeRaw, cfg_.hidden, rng);
  post_pn_ = make_pointnet(s, "post_pn", kAgentNodeRaw, cfg_.hidden, rng);
  tl_state_embed_ = s.create("tl_embed/w", {kTlStateDim, cfg_.tl_embed});
  init_xavier(*tl_state_embed_, rng);
  tl_pn_ = make_pointnet(s, "tl_pn", cfg_.tl_embed, cfg_.hidden, rng);

  map_blocks_ = make_blocks(s, "map_enc", cfg_, rng);
  tl_blocks_ = make_blocks(s, "tl_enc", cfg_, rng);
  agent_blocks_ = make_blocks(s, "agent_enc", cfg_, rng);
  post_blocks_ = make_blocks(s, "post_enc", cfg_, rng);

  post_head_w_ = s.create("post_head/w", {cfg_.hidden, 2 * cfg_.dim_z});  // zero: start at the prior
  post_head_b_ = s.create("post_head/b", {2 * cfg_.dim_z});
  dest_w_ = s.create("dest_head/w", {cfg_.hidden, cfg_.hidden});
  init_xavier(*dest_w_, rng);

  z_mlp_w1_ = s.create("cond/z_w1", {cfg_.dim_z, cfg_.hidden});
  init_xavier(*z_mlp_w1_, rng);
  z_mlp_b1_ = s.create("cond/z_b1", {cfg_.hidden});
  z_mlp_w2_ = s.create("cond/z_w2", {cfg_.hidden, cfg_.hidden});
  init_xavier(*z_mlp_w2_, rng);
  z_mlp_b2_ = s.create("cond/z_b2", {cfg_.hidden});
  dest_rpe_w_ = s.create("cond/dest_rpe_w", {cfg_.rpe_width(), cfg_.hidden});
  init_xavier(*dest_rpe_w_, rng);
  dest_rpe_b_ = s.create("cond/dest_rpe_b", {cfg_.hidden});
  cond_ln_g_ = s.create("cond/ln_g", {cfg_.hidden});
  init_constant(*cond_ln_g_, 1.0);
  cond_ln_b_ = s.create("cond/ln_b", {cfg_.hidden});

  policy_w1_ = s.create("policy/w1", {cfg_.hidden, cfg_.hidden});
  init_xavier(*policy_w1_, rng);
  policy_b1_ = s.create("policy/b1", {cfg_.hidden});
  policy_w2_ = s.create("policy/w2", {cfg_.hidden, 4});  // zero: start coasting
  policy_b2_ = s.create("policy/b2", {4});
}

Value TrafficModel::pointnet(Tape& t, const PointNetParams& p, const Value& node_feats,
                             const std::vector<uint8_t>& node_valid, int n_nodes) const {
  Value h = t.add_rowwise(t.matmul(node_feats, t.param(*p.w1)), t.param(*p.b1));
  h = t.relu(h);
  h = t.layer_norm(h, t.param(*p.ln_g), t.param(*p.ln_b));
  h = t.add_rowwise(t.matmul(h, t.param(*p.w2)), t.param(*p.b2));
  return t.masked_max_rows(h, node_valid, n_nodes);
}

namespace {

std::vector<uint8_t> tokens_with_valid_nodes(const std::vector<uint8_t>& token_valid,
                                             const std::vector<uint8_t>& node_valid, int n_nodes) {
  std::vector<uint8_t> out = token_valid;
  for (size_t tok = 0; tok < out.size(); ++tok) {
    bool any = false;
    for (int j = 0; j < n_nodes; ++j)
      any = any || node_valid[tok * static_cast<size_t>(n_nodes) + static_cast<size_t>(j)];
    if (!any) out[tok] = 0;
  }
  return out;
}

PosedTokensV tokens_from_part(Tape& t, const TokenPart& part) {
  PosedTokensV out;
  const int n = part.count();
  Tensor xy({n, 2});
  Tensor theta({n});
  for (int i = 0; i < n; ++i) {
    xy.at(i, 0) = part.poses[static_cast<size_t>(i)].x;
    xy.at(i, 1) = part.poses[static_cast<size_t>(i)].y;
    theta[i] = part.poses[static_cast<size_t>(i)].theta;
  }
  out.xy = t.constant(std::move(xy));
  out.theta = t.constant(std::move(theta));
  out.valid = part.valid;
  return out;
}

}  // namespace

PosedTokensV TrafficModel::embed_map(Tape& t, const MapTokens& tokens) const {
  PosedTokensV out = tokens_from_part(t, tokens);
  out.feats = pointnet(t, map_pn_, t.constant(tokens.node_feats), tokens.node_valid, tokens.n_nodes);
  out.valid = tokens_with_valid_nodes(out.valid, tokens.node_valid, tokens.n_nodes);
  return out;
}

PosedTokensV TrafficModel::embed_agents(Tape& t, const TokenPart& tokens) const {
  PosedTokensV out = tokens_from_part(t, tokens);
  out.feats = pointnet(t, agent_pn_, t.constant(tokens.node_feats), tokens.node_valid, tokens.n_nodes);
  out.valid = tokens_with_valid_nodes(out.valid, tokens.node_valid, tokens.n_nodes);
  return out;
}

PosedTokensV TrafficModel::embed_agents_posterior(Tape& t, const TokenPart& tokens) const {
  PosedTokensV out = tokens_from_part(t, tokens);
  out.feats = pointnet(t, post_pn_, t.constant(tokens.node_feats), tokens.node_valid, tokens.n_nodes);
  out.valid = tokens_with_valid_nodes(out.valid, tokens.node_valid, tokens.n_nodes);
  return out;
}

std::vector<int> TrafficModel::tl_assoc_tokens(const Scenario& s, const MapTokens& map_tokens) const {
  std::vector<int> out;
  for (const auto& tl : s.traffic_lights) {
    int poly_index = -1;
    for (size_t pi = 0; pi < s.map.size(); ++pi)
      if (s.map[pi].id == tl.polyline_id) poly_index = static_cast<int>(pi);
    out.push_back(poly_index >= 0 ? map_tokens.polyline_first_token[static_cast<size_t>(poly_index)] : -1);
  }
  return out;
}

PosedTokensV TrafficModel::embed_traffic_lights(Tape& t, const TokenPart& tokens,
                                                const PosedTokensV& map_embed,
                                                const std::vector<int>& assoc_token) const {
  PosedTokensV out = tokens_from_part(t, tokens);
  if (tokens.count() == 0) {
    out.feats = t.constant(Tensor::zeros({0, cfg_.hidden}));
    return out;
  }
  Value embedded = t.matmul(t.constant(tokens.node_feats), t.param(*tl_state_embed_));
  Value pooled = pointnet(t, tl_pn_, embedded, tokens.node_valid, tokens.n_nodes);

  std::vector<int> gather_idx;
  std::vector<uint8_t> assoc_ok;
  for (int a : assoc_token) {
    gather_idx.push_back(a >= 0 ? a : 0);
    for (int c = 0; c < cfg_.hidden; ++c) assoc_ok.push_back(a >= 0 ? 1 : 0);
  }
  Value polyline_feat = t.mask_fill(t.gather_rows(map_embed.feats, gather_idx), assoc_ok, 0.0);
  out.feats = t.add(pooled, polyline_feat);
  out.valid = tokens_with_valid_nodes(out.valid, tokens.node_valid, tokens.n_nodes);
  return out;
}

PosedTokensV TrafficModel::run_stage(Tape& t, const std::vector<KnarpeBlockParams>& blocks,
                                     const PosedTokensV& queries,
                                     const std::vector<const PosedTokensV*>& source_sets,
                                     const std::vector<int>& per_set_k) const {
  if (queries.count() == 0) return queries;
  const auto qposes = queries.poses();
  std::vector<KnnIndex> per_set;
  std::vector<int> offsets;
  int offset = 0;
  for (size_t i = 0; i < source_sets.size(); ++i) {
    per_set.push_back(knn_select(qposes, source_sets[i]->poses(), source_sets[i]->valid,
                                 per_set_k[i]));
    offsets.push_back(offset);
    offset += source_sets[i]->count();
  }
  std::vector<const KnnIndex*> parts;
  for (const auto& p : per_set) parts.push_back(&p);
  const KnnIndex merged = concat_knn(parts, offsets);

  PosedTokensV x = queries;
  for (const KnarpeBlockParams& block : blocks) {
    std::vector<const PosedTokensV*> cur;
    for (const PosedTokensV* sset : source_sets) cur.push_back(sset == &queries ? &x : sset);
    const PosedTokensV combined = concat_tokens(t, cur);
    x = knarpe_block(t, x, combined, merged, block, cfg_.rpe());
  }
  return x;
}

PosedTokensV TrafficModel::encode_map(Tape& t, const PosedTokensV& map_embed) const {
  return run_stage(t, map_blocks_, map_embed, {&map_embed}, {cfg_.knn_map_map});
}

PosedTokensV TrafficModel::encode_traffic_lights(Tape& t, const PosedTokensV& tl_embed,
                                                 const PosedTokensV& map_encoded) const {
  return run_stage(t, tl_blocks_, tl_embed, {&map_encoded, &tl_embed},
                   {cfg_.knn_tl_map, cfg_.knn_tl_tl});
}

PosedTokensV TrafficModel::encode_agents(Tape& t, const PosedTokensV& agent_embed,
                                         const PosedTokensV& map_encoded,
                                         const PosedTokensV& tl_feats) const {
  return run_stage(t, agent_blocks_, agent_embed, {&map_encoded, &tl_feats, &agent_embed},
                   {cfg_.knn_agent_map, cfg_.knn_agent_tl, cfg_.knn_agent_agent});
}

PosedTokensV TrafficModel::encode_posterior(Tape& t, const PosedTokensV& agent_embed,
                                            const PosedTokensV& map_encoded,
                                            const PosedTokensV& tl_feats) const {
  return run_stage(t, post_blocks_, agent_embed, {&map_encoded, &tl_feats, &agent_embed},
                   {cfg_.knn_agent_map, cfg_.knn_agent_tl, cfg_.knn_agent_agent});
}

TrafficModel::GaussianHeads TrafficModel::posterior_head(Tape& t,
                                                         const PosedTokensV& posterior_feats) const {
  Value out = t.add_rowwise(t.matmul(posterior_feats.feats, t.param(*post_head_w_)),
                            t.param(*post_head_b_));
  GaussianHeads g;
  g.mean = t.slice_cols(out, 0, cfg_.dim_z);
  g.log_std = t.slice_cols(out, cfg_.dim_z, cfg_.dim_z);
  return g;
}

Value TrafficModel::destination_logits(Tape& t, const PosedTokensV& agent_feats,
                                       const PosedTokensV& map_encoded) const {
  Value projected = t.matmul(agent_feats.feats, t.param(*dest_w_));
  return t.matmul_nt(projected, map_encoded.feats);
}

Value TrafficModel::condition(Tape& t, const PosedTokensV& agent_feats, const Value& z,
                              const std::vector<int>& dest_token,
                              const PosedTokensV& map_encoded) const {
  Value zh = t.add_rowwise(t.matmul(z, t.param(*z_mlp_w1_)), t.param(*z_mlp_b1_));
  zh = t.relu(zh);
  zh = t.add_rowwise(t.matmul(zh, t.param(*z_mlp_w2_)), t.param(*z_mlp_b2_));

  std::vector<int> idx;
  idx.reserve(dest_token.size());
  for (int d : dest_token) idx.push_back(d >= 0 ? d : 0);
  Value dest_feat = t.gather_rows(map_encoded.feats, idx);
  Value dest_xy = t.gather_rows(map_encoded.xy, idx);
  Value dest_theta = t.reshape(
      t.gather_rows(t.reshape(map_encoded.theta, {map_encoded.count(), 1}), idx),
      {static_cast<int>(idx.size())});
  Value rel = t.rpe_encode_pairs(agent_feats.xy, agent_feats.theta, dest_xy, dest_theta, 1,
                                 cfg_.rpe());
  Value dest_rel = t.add_rowwise(t.matmul(rel, t.param(*dest_rpe_w_)), t.param(*dest_rpe_b_));

  Value fused = t.add(t.add(agent_feats.feats, zh), t.add(dest_feat, dest_rel));
  return t.layer_norm(fused, t.param(*cond_ln_g_), t.param(*cond_ln_b_));
}

PolicyOut TrafficModel::policy(Tape& t, const Value& conditioned) const {
  Value h = t.add_rowwise(t.matmul(conditioned, t.param(*policy_w1_)), t.param(*policy_b1_));
  h = t.relu(h);
  Value out = t.add_rowwise(t.matmul(h, t.param(*policy_w2_)), t.param(*policy_b2_));
  PolicyOut p;
  p.mean = t.slice_cols(out, 0, 2);
  p.log_std = t.slice_cols(out, 2, 2);
  return p;
}

PosedTokensV TrafficModel::build_agent_tokens(Tape& t, const std::vector<AgentStateV>& history,
                                              const std::vector<std::vector<uint8_t>>& hist_valid,
                                              const Scenario& s, const std::vector<int>& agents,
                                              const std::vector<uint8_t>& token_valid) const {
  const int n = static_cast<int>(agents.size());
  const int window = static_cast<int>(history.size());
  TBSIM_CHECK(window >= 1 && hist_valid.size() == history.size(),
              "build_agent_tokens: history/mask size mismatch");
  const AgentStateV& cur = history.back();

  Tensor len_col({n, 1}), wid_col({n, 1});
  Tensor kind_cols[3] = {Tensor::zeros({n, 1}), Tensor::zeros({n, 1}), Tensor::zeros({n, 1})};
  for (int i = 0; i < n; ++i) {
    const AgentTrack& track = s.agents[static_cast<size_t>(agents[static_cast<size_t>(i)])];
    len_col.at(i, 0) = track.length;
    wid_col.at(i, 0) = track.width;
    kind_cols[static_cast<int>(track.kind)].at(i, 0) = 1.0;
  }
  Value len_v = t.constant(len_col);
  Value wid_v = t.constant(wid_col);
  Value kind_v[3] = {t.constant(kind_cols[0]), t.constant(kind_cols[1]), t.constant(kind_cols[2])};

  Value cth = t.cos(cur.theta);
  Value sth = t.sin(cur.theta);

  std::vector<Value> step_rows;
  std::vector<uint8_t> node_valid(static_cast<size_t>(n) * window, 0);
  for (int w = 0; w < window; ++w) {
    const AgentStateV& hs = history[static_cast<size_t>(w)];
    Value dx = t.sub(hs.x, cur.x);
    Value dy = t.sub(hs.y, cur.y);
    Value px = t.add(t.mul(cth, dx), t.mul(sth, dy));
    Value py = t.sub(t.mul(cth, dy), t.mul(sth, dx));
    Value dth = t.sub(hs.theta, cur.theta);
    Value cos_dh = t.cos(dth);
    Value sin_dh = t.sin(dth);
    Value vx_t = t.mul(hs.v, cos_dh);
    Value vy_t = t.mul(hs.v, sin_dh);
    Tensor flag({n, 1});
    for (int i = 0; i < n; ++i) {
      flag.at(i, 0) = hist_valid[static_cast<size_t>(w)][static_cast<size_t>(i)] ? 1.0 : 0.0;
      node_valid[static_cast<size_t>(i) * window + w] =
          hist_valid[static_cast<size_t>(w)][static_cast<size_t>(i)];
    }
    Value row = t.concat_cols({as_col(t, px), as_col(t, py), as_col(t, cos_dh), as_col(t, sin_dh),
                               as_col(t, vx_t), as_col(t, vy_t), len_v, wid_v, kind_v[0],
                               kind_v[1], kind_v[2], t.constant(flag)});
    step_rows.push_back(row);
  }
  Value node_feats = t.interleave_rows(step_rows);  // [n*window, 12], row a*window + w

  PosedTokensV out;
  out.feats = pointnet(t, agent_pn_, node_feats, node_valid, window);
  out.xy = t.concat_cols({as_col(t, cur.x), as_col(t, cur.y)});
  out.theta = cur.theta;
  out.valid = tokens_with_valid_nodes(token_valid, node_valid, window);
  return out;
}

AgentStateV TrafficModel::step_dynamics(Tape& t, const AgentStateV& state,
                                        const Value& action_mean, const ActionBounds& bounds,
                                        double dt) const {
  const int n = state.x.dim(0);
  Value accel = t.reshape(t.slice_cols(action_mean, 0, 1), {n});
  Value yaw = t.reshape(t.slice_cols(action_mean, 1, 1), {n});
  accel = t.clamp(accel, bounds.accel_lo, bounds.accel_hi);
  yaw = t.clamp(yaw, bounds.yaw_lo, bounds.yaw_hi);

  AgentStateV out;
  out.v = t.clamp(t.add(state.v, t.scale(accel, dt)), bounds.speed_lo, bounds.speed_hi);
  out.theta = t.wrap_angle(t.add(state.theta, t.scale(yaw, dt)));
  out.x = t.add(state.x, t.scale(t.mul(out.v, t.cos(out.theta)), dt));
  out.y = t.add(state.y, t.scale(t.mul(out.v, t.sin(out.theta)), dt));
  return out;
}

PosedTokensV concat_tokens(Tape& t, const std::vector<const PosedTokensV*>& parts) {
  std::vector<Value> feats, xy, theta;
  PosedTokensV out;
  for (const PosedTokensV* p : parts) {
    if (p->count() == 0) continue;
    feats.push_back(p->feats);
    xy.push_back(p->xy);
    theta.push_back(t.reshape(p->theta, {p->count(), 1}));
    out.valid.insert(out.valid.end(), p->valid.begin(), p->valid.end());
  }
  TBSIM_CHECK(!feats.empty(), "concat_tokens: all parts empty");
  out.feats = t.concat_rows(feats);
  out.xy = t.concat_rows(xy);
  out.theta = t.reshape(t.concat_rows(theta), {out.feats.dim(0)});
  return out;
}

Value mix(Tape& t, const std::vector<uint8_t>& take_a, const Value& a, const Value& b) {
  std::vector<uint8_t> inv(take_a.size());
  for (size_t i = 0; i < take_a.size(); ++i) inv[i] = take_a[i] ? 0 : 1;
  return t.add(t.mask_fill(a, take_a, 0.0), t.mask_fill(b, inv, 0.0));
}

}  // namespace tbsim

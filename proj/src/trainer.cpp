#include "tbsim/trainer.hpp"

#include <cmath>
#include <fstream>

#include "tbsim/common.hpp"

namespace tbsim {

double tf_fraction(double tf_start, double progress) {
  TBSIM_CHECK(progress >= 0.0 && progress <= 1.0, "tf_fraction: progress outside [0, 1]");
  return tf_start * (1.0 - progress);
}

std::vector<uint8_t> draw_teacher_forced(const std::vector<uint8_t>& active, double fraction,
                                         Rng& rng) {
  std::vector<int> active_idx;
  for (size_t i = 0; i < active.size(); ++i)
    if (active[i]) active_idx.push_back(static_cast<int>(i));
  const int n = static_cast<int>(active_idx.size());
  const int k = static_cast<int>(std::lround(fraction * n));
  std::vector<uint8_t> forced(active.size(), 0);
  if (k <= 0 || n == 0) return forced;
  for (int pick : rng.sample_indices(n, k)) forced[static_cast<size_t>(active_idx[static_cast<size_t>(pick)])] = 1;
  return forced;
}

namespace {

// Per-step GT state values with invalid steps holding the last valid state,
// so masked nodes still carry finite numbers.
struct GtStates {
  std::vector<Tensor> x, y, theta, v;        // per step, each [A]
  std::vector<std::vector<uint8_t>> valid;   // per step, per agent
  std::vector<Tensor> vx, vy;                // raw GT velocities (targets)
};

GtStates collect_gt(const Scenario& s, const std::vector<int>& agents) {
  const int n = static_cast<int>(agents.size());
  GtStates out;
  std::vector<AgentStep> last(static_cast<size_t>(n));
  // backfill leading invalid steps from the first valid one
  for (int i = 0; i < n; ++i) {
    const AgentTrack& tr = s.agents[static_cast<size_t>(agents[static_cast<size_t>(i)])];
    for (const AgentStep& st : tr.states)
      if (st.valid) {
        last[static_cast<size_t>(i)] = st;
        break;
      }
  }
  for (int t = 0; t < s.episode_len; ++t) {
    Tensor x({n}), y({n}), th({n}), v({n}), vx({n}), vy({n});
    std::vector<uint8_t> valid(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      const AgentTrack& tr = s.agents[static_cast<size_t>(agents[static_cast<size_t>(i)])];
      const AgentStep& st = tr.states[static_cast<size_t>(t)];
      if (st.valid) last[static_cast<size_t>(i)] = st;
      const AgentStep& use = last[static_cast<size_t>(i)];
      x[i] = use.x;
      y[i] = use.y;
      th[i] = use.theta;
      v[i] = use.vx * std::cos(use.theta) + use.vy * std::sin(use.theta);
      vx[i] = use.vx;
      vy[i] = use.vy;
      valid[static_cast<size_t>(i)] = st.valid ? 1 : 0;
    }
    out.x.push_back(std::move(x));
    out.y.push_back(std::move(y));
    out.theta.push_back(std::move(th));
    out.v.push_back(std::move(v));
    out.vx.push_back(std::move(vx));
    out.vy.push_back(std::move(vy));
    out.valid.push_back(std::move(valid));
  }
  return out;
}

Value as_col(Tape& t, const Value& v) { return t.reshape(v, {v.dim(0), 1}); }

}  // namespace

EpisodeBuild build_episode(Tape& t, const TrafficModel& model, const Scenario& scenario,
                           const TrainConfig& cfg, const EpisodeOptions& opt) {
  const ModelConfig& mc = model.config();
  const int warmup = mc.history - 1;  // first simulated step = mc.history
  TBSIM_CHECK(scenario.episode_len > mc.history,
              "build_episode: episode shorter than the history window");

  EpisodeBuild out;
  out.agents = select_agents(scenario, mc.budget.agent_tokens);
  const int n = static_cast<int>(out.agents.size());
  TBSIM_CHECK(n > 0, "build_episode: no agents to simulate");

  const GtStates gt = collect_gt(scenario, out.agents);
  out.sim_active = gt.valid[static_cast<size_t>(warmup)];

  // --- static context -------------------------------------------------------
  const MapTokens map_tokens = tokenize_map(scenario, mc.budget.map_tokens);
  const PosedTokensV map_embed = model.embed_map(t, map_tokens);
  const PosedTokensV map_encoded = model.encode_map(t, map_embed);
  const std::vector<int> tl_assoc = model.tl_assoc_tokens(scenario, map_tokens);

  auto tl_features = [&](int step) {
    const TokenPart part = tokenize_traffic_lights(scenario, map_tokens, step, mc.history);
    const PosedTokensV embed = model.embed_traffic_lights(t, part, map_embed, tl_assoc);
    return model.encode_traffic_lights(t, embed, map_encoded);
  };
  const PosedTokensV tl_warmup = tl_features(warmup);

  // --- personality ----------------------------------------------------------
  // whole-episode window, framed at the warmup pose to stay aligned with the
  // policy tokens
  const TokenPart post_part =
      tokenize_agents_window(scenario, out.agents, warmup, 0, scenario.episode_len);
  const PosedTokensV post_embed = model.embed_agents_posterior(t, post_part);
  const PosedTokensV post_feats = model.encode_posterior(t, post_embed, map_encoded, tl_warmup);
  const TrafficModel::GaussianHeads posterior = model.posterior_head(t, post_feats);

  Rng noise(opt.noise_seed);
  Value z;
  switch (opt.personality) {
    case PersonalityMode::posterior_sample:
      z = reparameterize(t, posterior.mean, posterior.log_std,
                         draw_standard_normal({n, mc.dim_z}, noise));
      break;
    case PersonalityMode::posterior_mean:
      z = posterior.mean;
      break;
    case PersonalityMode::prior_draw:
      z = t.constant(draw_standard_normal({n, mc.dim_z}, noise));
      break;
  }

  // --- destinations -----------------------------------------------------------
  const std::vector<int> dest = destination_labels(scenario, out.agents, map_tokens);
  std::vector<uint8_t> dest_rows(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    dest_rows[static_cast<size_t>(i)] = out.sim_active[static_cast<size_t>(i)] && dest[static_cast<size_t>(i)] >= 0;

  // --- rollout -----------------------------------------------------------------
  const ActionBounds bounds = action_bounds(scenario, out.agents);
  std::vector<uint8_t> tf = opt.teacher_forced;
  if (tf.empty()) tf.assign(static_cast<size_t>(n), 0);

  // history rings: teacher input states and per-step validity
  std::vector<AgentStateV> input_states;   // index = step
  std::vector<std::vector<uint8_t>> input_valid;
  for (int step = 0; step <= warmup; ++step) {
    AgentStateV gt_v{t.constant(gt.x[static_cast<size_t>(step)]), t.constant(gt.y[static_cast<size_t>(step)]),
                     t.constant(gt.theta[static_cast<size_t>(step)]), t.constant(gt.v[static_cast<size_t>(step)])};
    input_states.push_back(gt_v);
    input_valid.push_back(gt.valid[static_cast<size_t>(step)]);
  }

  Value dest_logits;
  std::vector<Value> pos_terms, vel_terms, yaw_terms;
  std::vector<uint8_t> pos_mask, vel_mask, yaw_mask;
  std::vector<double> pos_target_rows, vel_target_rows;

  for (int step = warmup; step + 1 < scenario.episode_len; ++step) {
    // window of the last `history` input states
    std::vector<AgentStateV> window(input_states.end() - mc.history, input_states.end());
    std::vector<std::vector<uint8_t>> window_valid(input_valid.end() - mc.history,
                                                   input_valid.end());
    PosedTokensV agent_tokens =
        model.build_agent_tokens(t, window, window_valid, scenario, out.agents, out.sim_active);
    const PosedTokensV tl_feats = step == warmup ? tl_warmup : tl_features(step);
    const PosedTokensV agent_feats = model.encode_agents(t, agent_tokens, map_encoded, tl_feats);
    if (step == warmup) dest_logits = model.destination_logits(t, agent_feats, map_encoded);

    Value conditioned = model.condition(t, agent_feats, z, dest, map_encoded);
    const PolicyOut pol = model.policy(t, conditioned);
    const AgentStateV next = model.step_dynamics(t, input_states.back(), pol.mean, bounds,
                                                 scenario.dt);
    out.predicted.push_back(next);

    // losses target step+1
    const int tgt = step + 1;
    Value pred_xy = t.concat_cols({as_col(t, next.x), as_col(t, next.y)});
    pos_terms.push_back(pred_xy);
    Value vel_xy = t.concat_cols({as_col(t, t.mul(next.v, t.cos(next.theta))),
                                  as_col(t, t.mul(next.v, t.sin(next.theta)))});
    vel_terms.push_back(vel_xy);
    Value yaw_diff = t.sub(next.theta, t.constant(gt.theta[static_cast<size_t>(tgt)]));
    yaw_terms.push_back(as_col(t, t.add_scalar(t.scale(t.cos(yaw_diff), -1.0), 1.0)));
    for (int i = 0; i < n; ++i) {
      const uint8_t m = out.sim_active[static_cast<size_t>(i)] &&
                        gt.valid[static_cast<size_t>(tgt)][static_cast<size_t>(i)];
      pos_mask.push_back(m);
      pos_mask.push_back(m);
      vel_mask.push_back(m);
      vel_mask.push_back(m);
      yaw_mask.push_back(m);
      pos_target_rows.push_back(gt.x[static_cast<size_t>(tgt)][i]);
      pos_target_rows.push_back(gt.y[static_cast<size_t>(tgt)][i]);
      vel_target_rows.push_back(gt.vx[static_cast<size_t>(tgt)][i]);
      vel_target_rows.push_back(gt.vy[static_cast<size_t>(tgt)][i]);
    }

    // next input: GT for teacher-forced agents, own prediction otherwise
    AgentStateV gt_next{t.constant(gt.x[static_cast<size_t>(tgt)]), t.constant(gt.y[static_cast<size_t>(tgt)]),
                        t.constant(gt.theta[static_cast<size_t>(tgt)]), t.constant(gt.v[static_cast<size_t>(tgt)])};
    AgentStateV mixed;
    mixed.x = mix(t, tf, gt_next.x, next.x);
    mixed.y = mix(t, tf, gt_next.y, next.y);
    mixed.theta = mix(t, tf, gt_next.theta, next.theta);
    mixed.v = mix(t, tf, gt_next.v, next.v);
    input_states.push_back(mixed);
    // teacher-forced agents keep GT validity; free agents are always present
    std::vector<uint8_t> vnext(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i)
      vnext[static_cast<size_t>(i)] =
          tf[static_cast<size_t>(i)] ? gt.valid[static_cast<size_t>(tgt)][static_cast<size_t>(i)]
                                     : out.sim_active[static_cast<size_t>(i)];
    input_valid.push_back(vnext);
  }

  // --- losses ---------------------------------------------------------------
  const int rows = static_cast<int>(pos_target_rows.size()) / 2;
  Tensor pos_tgt({rows, 2}, std::move(pos_target_rows));
  Tensor vel_tgt({rows, 2}, std::move(vel_target_rows));
  out.loss_pos = t.smoothed_l1(t.concat_rows(pos_terms), pos_tgt, pos_mask, cfg.sl1_delta);
  out.loss_vel = t.smoothed_l1(t.concat_rows(vel_terms), vel_tgt, vel_mask, cfg.sl1_delta);
  out.loss_yaw = t.masked_mean(t.concat_rows(yaw_terms), yaw_mask);

  Value kl = kl_diag_gaussian(t, posterior.mean, posterior.log_std,
                              t.constant(Tensor::zeros({n, mc.dim_z})),
                              t.constant(Tensor::zeros({n, mc.dim_z})));
  Value kl_clipped = t.relu(t.add_scalar(kl, -cfg.free_nats));
  out.loss_kl = t.sum_all(t.mask_fill(kl_clipped, out.sim_active, 0.0));

  out.loss_dest = t.cross_entropy(dest_logits, dest, map_encoded.valid, dest_rows);

  out.total = t.add(
      t.add(t.add(t.scale(out.loss_pos, cfg.w_pos), t.scale(out.loss_yaw, cfg.w_yaw)),
            t.add(t.scale(out.loss_vel, cfg.w_vel), t.scale(out.loss_kl, cfg.w_kl))),
      t.scale(out.loss_dest, cfg.w_dest));

  // --- reconstruction ADE (metric only) --------------------------------------
  double acc = 0.0;
  int64_t cnt = 0;
  for (size_t k = 0; k < out.predicted.size(); ++k) {
    const int tgt = mc.history + static_cast<int>(k);
    const Tensor& px = out.predicted[k].x.val();
    const Tensor& py = out.predicted[k].y.val();
    for (int i = 0; i < n; ++i) {
      if (!out.sim_active[static_cast<size_t>(i)] ||
          !gt.valid[static_cast<size_t>(tgt)][static_cast<size_t>(i)])
        continue;
      acc += std::hypot(px[i] - gt.x[static_cast<size_t>(tgt)][i],
                        py[i] - gt.y[static_cast<size_t>(tgt)][i]);
      ++cnt;
    }
  }
  out.recon_ade = cnt > 0 ? acc / static_cast<double>(cnt) : 0.0;
  return out;
}

double eval_reconstruction_ade(const TrafficModel& model, const Scenario& scenario,
                               const TrainConfig& cfg) {
  Tape t(false);
  EpisodeOptions opt;
  opt.personality = PersonalityMode::posterior_mean;
  const EpisodeBuild build = build_episode(t, model, scenario, cfg, opt);
  return build.recon_ade;
}

TrainResult train(TrafficModel& model, const std::vector<Scenario>& dataset,
                  const TrainConfig& cfg, uint64_t seed, const std::string& metrics_csv,
                  const std::string& checkpoint_path, Adam* optimizer) {
  TBSIM_CHECK(!dataset.empty(), "train: empty dataset");
  Adam local_opt(model.params(), cfg.adam);
  Adam& opt = optimizer ? *optimizer : local_opt;

  std::ofstream csv;
  if (!metrics_csv.empty()) {
    const bool fresh = opt.step_count() == 0;
    csv.open(metrics_csv, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw DataError("cannot open metrics csv: " + metrics_csv);
    if (fresh)
      csv << "step,loss,loss_pos,loss_yaw,loss_vel,loss_kl,loss_dest,recon_ade,tf_fraction,"
             "grad_norm\n";
  }

  TrainResult result;
  result.final_eval_ade = -1.0;
  Rng sched(mix64(seed ^ 0x5eedULL));
  size_t data_cursor = 0;
  const int64_t start_step = opt.step_count();

  for (int64_t step = start_step; step < cfg.total_steps; ++step) {
    const double progress =
        cfg.total_steps > 1 ? static_cast<double>(step) / (cfg.total_steps - 1) : 1.0;
    const double frac = tf_fraction(cfg.tf_start, progress);

    double batch_loss = 0.0, batch_pos = 0.0, batch_yaw = 0.0, batch_vel = 0.0, batch_kl = 0.0,
           batch_dest = 0.0, batch_ade = 0.0, measured_tf = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Scenario& scenario = dataset[data_cursor];
      data_cursor = (data_cursor + 1) % dataset.size();

      EpisodeOptions eopt;
      eopt.personality = sched.uniform01() < cfg.prior_rollout_frac
                             ? PersonalityMode::prior_draw
                             : PersonalityMode::posterior_sample;
      eopt.noise_seed = sched.next_u64();

      // subset drawn against the scenario's active agents
      const auto agents = select_agents(scenario, model.config().budget.agent_tokens);
      std::vector<uint8_t> active(agents.size(), 0);
      const int warmup = model.config().history - 1;
      for (size_t i = 0; i < agents.size(); ++i)
        active[i] = scenario.agents[static_cast<size_t>(agents[i])]
                        .states[static_cast<size_t>(warmup)]
                        .valid;
      eopt.teacher_forced = draw_teacher_forced(active, frac, sched);
      int n_active = 0, n_forced = 0;
      for (size_t i = 0; i < active.size(); ++i) {
        n_active += active[i] ? 1 : 0;
        n_forced += eopt.teacher_forced[i] ? 1 : 0;
      }
      measured_tf += n_active > 0 ? static_cast<double>(n_forced) / n_active : 0.0;

      Tape tape;
      const EpisodeBuild build = build_episode(tape, model, scenario, cfg, eopt);
      const double ep_loss = build.total.scalar();
      if (!std::isfinite(ep_loss))
        throw NumericError("training loss is not finite at step " + std::to_string(step));
      batch_loss += ep_loss;
      batch_pos += build.loss_pos.scalar();
      batch_yaw += build.loss_yaw.scalar();
      batch_vel += build.loss_vel.scalar();
      batch_kl += build.loss_kl.scalar();
      batch_dest += build.loss_dest.scalar();
      batch_ade += build.recon_ade;
      tape.backward(tape.scale(build.total, 1.0 / cfg.batch_size));
    }
    const double inv_b = 1.0 / cfg.batch_size;
    const double grad_norm = opt.step();

    result.steps_run = step + 1;
    result.final_loss = batch_loss * inv_b;
    if (csv.is_open()) {
      csv << step << ',' << batch_loss * inv_b << ',' << batch_pos * inv_b << ','
          << batch_yaw * inv_b << ',' << batch_vel * inv_b << ',' << batch_kl * inv_b << ','
          << batch_dest * inv_b << ',' << batch_ade * inv_b << ',' << measured_tf * inv_b << ','
          << grad_norm << '\n';
      csv.flush();
    }

    const bool last = step + 1 >= cfg.total_steps;
    if (cfg.eval_every > 0 && ((step + 1) % cfg.eval_every == 0 || last)) {
      result.final_eval_ade = eval_reconstruction_ade(model, dataset[0], cfg);
      if (cfg.stop_at_ade > 0.0 && result.final_eval_ade < cfg.stop_at_ade) {
        if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, model.params(), &opt);
        return result;
      }
    }
    if (!checkpoint_path.empty() &&
        (last || (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)))
      save_checkpoint(checkpoint_path, model.params(), &opt);
  }
  if (result.final_eval_ade < 0.0)
    result.final_eval_ade = eval_reconstruction_ade(model, dataset[0], cfg);
  return result;
}

}  // namespace tbsim

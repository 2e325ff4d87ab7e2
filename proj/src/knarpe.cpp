#include "tbsim/knarpe.hpp"

#include <cmath>

#include "tbsim/common.hpp"

namespace tbsim {

std::vector<Pose2D> PosedTokensV::poses() const {
  const int n = count();
  std::vector<Pose2D> out(static_cast<size_t>(n));
  const Tensor& p = xy.val();
  const Tensor& th = theta.val();
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = {p.at(i, 0), p.at(i, 1), th[i]};
  return out;
}

KnarpeAttnParams make_knarpe_attn(ParamStore& store, const std::string& prefix, int hidden,
                                  int heads, int rpe_width, Rng& rng) {
  TBSIM_CHECK(hidden % heads == 0, "head count must divide hidden width");
  KnarpeAttnParams p;
  p.heads = heads;
  auto mat = [&](const char* name, int in, int out) {
    Parameter* w = store.create(prefix + name, {in, out});
    init_xavier(*w, rng);
    return w;
  };
  auto vec = [&](const char* name, int n) { return store.create(prefix + name, {n}); };
  p.wq = mat("/wq", hidden, hidden);
  p.bq = vec("/bq", hidden);
  p.wk = mat("/wk", hidden, hidden);
  p.bk = vec("/bk", hidden);
  p.wv = mat("/wv", hidden, hidden);
  p.bv = vec("/bv", hidden);
  p.wr_k = mat("/wr_k", rpe_width, hidden);
  p.br_k = vec("/br_k", hidden);
  p.wr_v = mat("/wr_v", rpe_width, hidden);
  p.br_v = vec("/br_v", hidden);
  p.wo = mat("/wo", hidden, hidden);
  p.bo = vec("/bo", hidden);
  return p;
}

KnarpeBlockParams make_knarpe_block(ParamStore& store, const std::string& prefix, int hidden,
                                    int heads, int ff, int rpe_width, Rng& rng) {
  KnarpeBlockParams p;
  p.attn = make_knarpe_attn(store, prefix + "/attn", hidden, heads, rpe_width, rng);
  p.ln1_g = store.create(prefix + "/ln1_g", {hidden});
  init_constant(*p.ln1_g, 1.0);
  p.ln1_b = store.create(prefix + "/ln1_b", {hidden});
  p.ln2_g = store.create(prefix + "/ln2_g", {hidden});
  init_constant(*p.ln2_g, 1.0);
  p.ln2_b = store.create(prefix + "/ln2_b", {hidden});
  p.ff1_w = store.create(prefix + "/ff1_w", {hidden, ff});
  init_xavier(*p.ff1_w, rng);
  p.ff1_b = store.create(prefix + "/ff1_b", {ff});
  p.ff2_w = store.create(prefix + "/ff2_w", {ff, hidden});
  init_xavier(*p.ff2_w, rng);
  p.ff2_b = store.create(prefix + "/ff2_b", {hidden});
  return p;
}

Value knarpe_attention(Tape& t, const PosedTokensV& queries, const PosedTokensV& sources,
                       const KnnIndex& index, const KnarpeAttnParams& params,
                       const RpeConfig& rpe_cfg, KnarpeAttnDebug* debug) {
  const int n = queries.count();
  const int hidden = queries.feats.dim(1);
  const int heads = params.heads;
  const int dh = hidden / heads;
  const int k = index.k;
  TBSIM_CHECK(index.n_query() == n, "knarpe_attention: index/query count mismatch");
  TBSIM_CHECK(sources.count() > 0 || n == 0, "knarpe_attention: empty source set");
  if (n == 0) return t.constant(Tensor::zeros({0, hidden}));

  Value q = t.add_rowwise(t.matmul(queries.feats, t.param(*params.wq)), t.param(*params.bq));
  Value k_src = t.add_rowwise(t.matmul(sources.feats, t.param(*params.wk)), t.param(*params.bk));
  Value v_src = t.add_rowwise(t.matmul(sources.feats, t.param(*params.wv)), t.param(*params.bv));

  // Per-pair gathers; invalid slots point at row 0 and are masked out below.
  std::vector<int> flat(index.neighbors.begin(), index.neighbors.end());
  Value k_nbr = t.gather_rows(k_src, flat);
  Value v_nbr = t.gather_rows(v_src, flat);
  Value nbr_xy = t.gather_rows(sources.xy, flat);
  Value nbr_theta = t.reshape(
      t.gather_rows(t.reshape(sources.theta, {sources.count(), 1}), flat), {n * k});

  Value rpe = t.rpe_encode_pairs(queries.xy, queries.theta, nbr_xy, nbr_theta, k, rpe_cfg);
  k_nbr = t.add(k_nbr, t.add_rowwise(t.matmul(rpe, t.param(*params.wr_k)), t.param(*params.br_k)));
  v_nbr = t.add(v_nbr, t.add_rowwise(t.matmul(rpe, t.param(*params.wr_v)), t.param(*params.br_v)));

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Value> head_out;
  head_out.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Value qh = t.slice_cols(q, h * dh, dh);
    Value kh = t.slice_cols(k_nbr, h * dh, dh);
    Value vh = t.slice_cols(v_nbr, h * dh, dh);
    Value logits = t.scale(t.grouped_dot(qh, kh, k), inv_sqrt_dh);
    Value alpha = t.masked_softmax(logits, index.valid);
    if (debug) debug->head_alphas.push_back(alpha);
    head_out.push_back(t.grouped_weighted_sum(alpha, vh));
  }
  Value z = heads == 1 ? head_out[0] : t.concat_cols(head_out);
  return t.add_rowwise(t.matmul(z, t.param(*params.wo)), t.param(*params.bo));
}

PosedTokensV knarpe_block(Tape& t, const PosedTokensV& queries, const PosedTokensV& sources,
                          const KnnIndex& index, const KnarpeBlockParams& params,
                          const RpeConfig& rpe_cfg) {
  Value ln1_g = t.param(*params.ln1_g);
  Value ln1_b = t.param(*params.ln1_b);
  PosedTokensV qn = queries;
  qn.feats = t.layer_norm(queries.feats, ln1_g, ln1_b);
  PosedTokensV sn = sources;
  sn.feats = t.layer_norm(sources.feats, ln1_g, ln1_b);

  Value attn = knarpe_attention(t, qn, sn, index, params.attn, rpe_cfg);
  Value x1 = t.add(queries.feats, attn);

  Value h = t.layer_norm(x1, t.param(*params.ln2_g), t.param(*params.ln2_b));
  h = t.add_rowwise(t.matmul(h, t.param(*params.ff1_w)), t.param(*params.ff1_b));
  h = t.relu(h);
  h = t.add_rowwise(t.matmul(h, t.param(*params.ff2_w)), t.param(*params.ff2_b));
  Value x2 = t.add(x1, h);

  PosedTokensV out = queries;
  out.feats = x2;
  return out;
}

}  // namespace tbsim

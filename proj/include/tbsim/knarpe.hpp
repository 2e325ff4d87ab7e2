#pragma once

#include <string>
#include <vector>

#include "tbsim/knn.hpp"
#include "tbsim/params.hpp"
#include "tbsim/tape.hpp"

namespace tbsim {

// Token set on a tape: local attribute rows plus SE(2) poses. Features live
// in each token's own frame; geometry between tokens only ever enters through
// relative poses.
struct PosedTokensV {
  Value feats;                  // [N, D]
  Value xy;                     // [N, 2]
  Value theta;                  // [N]
  std::vector<uint8_t> valid;   // [N]

  int count() const { return feats.defined() ? feats.dim(0) : 0; }
  // Numeric poses for KNN selection (reads current tape data).
  std::vector<Pose2D> poses() const;
};

// Attention projections. Queries/keys/values are projected from the hidden
// width; the relative pose encoding has its own key/value projections added
// on top (per-pair), then heads split the hidden width.
struct KnarpeAttnParams {
  Parameter* wq = nullptr;
  Parameter* bq = nullptr;
  Parameter* wk = nullptr;
  Parameter* bk = nullptr;
  Parameter* wv = nullptr;
  Parameter* bv = nullptr;
  Parameter* wr_k = nullptr;  // rpe width -> hidden
  Parameter* br_k = nullptr;
  Parameter* wr_v = nullptr;
  Parameter* br_v = nullptr;
  Parameter* wo = nullptr;
  Parameter* bo = nullptr;
  int heads = 4;
};

// Pre-LN transformer block: x + Attn(LN(x)) then x + FF(LN(x)).
struct KnarpeBlockParams {
  KnarpeAttnParams attn;
  Parameter* ln1_g = nullptr;
  Parameter* ln1_b = nullptr;
  Parameter* ln2_g = nullptr;
  Parameter* ln2_b = nullptr;
  Parameter* ff1_w = nullptr;
  Parameter* ff1_b = nullptr;
  Parameter* ff2_w = nullptr;
  Parameter* ff2_b = nullptr;
};

KnarpeAttnParams make_knarpe_attn(ParamStore& store, const std::string& prefix, int hidden,
                                  int heads, int rpe_width, Rng& rng);
KnarpeBlockParams make_knarpe_block(ParamStore& store, const std::string& prefix, int hidden,
                                    int heads, int ff, int rpe_width, Rng& rng);

// Per-head attention weights, exposed for tests and diagnostics.
struct KnarpeAttnDebug {
  std::vector<Value> head_alphas;  // each [N, K]
};

// Multi-head dot-product attention over each query's K nearest neighbors,
// with the relative pose encoding projected and added to keys and values.
// Queries with no valid neighbor yield a zero row (plus output bias).
Value knarpe_attention(Tape& t, const PosedTokensV& queries, const PosedTokensV& sources,
                       const KnnIndex& index, const KnarpeAttnParams& params,
                       const RpeConfig& rpe_cfg, KnarpeAttnDebug* debug = nullptr);

// Full pre-LN block; poses and validity pass through unchanged.
PosedTokensV knarpe_block(Tape& t, const PosedTokensV& queries, const PosedTokensV& sources,
                          const KnnIndex& index, const KnarpeBlockParams& params,
                          const RpeConfig& rpe_cfg);

}  // namespace tbsim

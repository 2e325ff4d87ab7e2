#include "tbsim/knn.hpp"

#include <algorithm>

#include "tbsim/common.hpp"

namespace tbsim {

KnnIndex knn_select(const std::vector<Pose2D>& query_poses,
                    const std::vector<Pose2D>& source_poses,
                    const std::vector<uint8_t>& source_valid, int k) {
  TBSIM_CHECK(k >= 1, "knn_select: k must be >= 1");
  TBSIM_CHECK(source_valid.size() == source_poses.size(), "knn_select: valid mask size mismatch");
  const int nq = static_cast<int>(query_poses.size());
  const int ns = static_cast<int>(source_poses.size());

  KnnIndex out;
  out.k = k;
  out.neighbors.assign(static_cast<size_t>(nq) * k, 0);
  out.valid.assign(static_cast<size_t>(nq) * k, 0);

  std::vector<std::pair<double, int>> cand;
  cand.reserve(static_cast<size_t>(ns));
  for (int q = 0; q < nq; ++q) {
    cand.clear();
    for (int s = 0; s < ns; ++s) {
      if (!source_valid[static_cast<size_t>(s)]) continue;
      const double dx = source_poses[static_cast<size_t>(s)].x - query_poses[static_cast<size_t>(q)].x;
      const double dy = source_poses[static_cast<size_t>(s)].y - query_poses[static_cast<size_t>(q)].y;
      cand.emplace_back(dx * dx + dy * dy, s);
    }
    const int take = std::min<int>(k, static_cast<int>(cand.size()));
    std::partial_sort(cand.begin(), cand.begin() + take, cand.end());
    for (int j = 0; j < take; ++j) {
      out.neighbors[static_cast<size_t>(q) * k + j] = cand[static_cast<size_t>(j)].second;
      out.valid[static_cast<size_t>(q) * k + j] = 1;
    }
  }
  return out;
}

KnnIndex concat_knn(const std::vector<const KnnIndex*>& parts, const std::vector<int>& offsets) {
  TBSIM_CHECK(!parts.empty() && parts.size() == offsets.size(), "concat_knn: size mismatch");
  const int nq = parts[0]->n_query();
  int total_k = 0;
  for (const KnnIndex* p : parts) {
    TBSIM_CHECK(p->n_query() == nq, "concat_knn: query count mismatch");
    total_k += p->k;
  }
  KnnIndex out;
  out.k = total_k;
  out.neighbors.assign(static_cast<size_t>(nq) * total_k, 0);
  out.valid.assign(static_cast<size_t>(nq) * total_k, 0);
  for (int q = 0; q < nq; ++q) {
    int slot = 0;
    for (size_t i = 0; i < parts.size(); ++i) {
      const KnnIndex& p = *parts[i];
      for (int j = 0; j < p.k; ++j, ++slot) {
        out.neighbors[static_cast<size_t>(q) * total_k + slot] = p.at(q, j) + offsets[i];
        out.valid[static_cast<size_t>(q) * total_k + slot] = p.ok(q, j) ? 1 : 0;
      }
    }
  }
  return out;
}

}  // namespace tbsim

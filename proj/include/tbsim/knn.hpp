#pragma once

#include <cstdint>
#include <vector>

#include "tbsim/geometry.hpp"

namespace tbsim {

// K-nearest-neighbor selection result. Per query, `neighbors` holds k source
// indices sorted by non-decreasing distance (ties by lower source index);
// slots past the number of valid sources are flagged invalid.
struct KnnIndex {
  int k = 0;
  std::vector<int> neighbors;    // [n_query * k]
  std::vector<uint8_t> valid;    // [n_query * k]

  int n_query() const { return k == 0 ? 0 : static_cast<int>(neighbors.size()) / k; }
  int at(int q, int j) const { return neighbors[static_cast<size_t>(q) * k + j]; }
  bool ok(int q, int j) const { return valid[static_cast<size_t>(q) * k + j] != 0; }
};

// Brute-force Euclidean KNN over (x, y). When the query set is the source
// set, a token selects itself at distance zero.
KnnIndex knn_select(const std::vector<Pose2D>& query_poses,
                    const std::vector<Pose2D>& source_poses,
                    const std::vector<uint8_t>& source_valid, int k);

// Merges per-source-set KNN results into one index over the concatenation of
// the source sets; `offsets[i]` is the row of set i inside the combined set.
KnnIndex concat_knn(const std::vector<const KnnIndex*>& parts, const std::vector<int>& offsets);

}  // namespace tbsim

#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "json.hpp"
#include "printmlp/common.hpp"
#include "printmlp/model.hpp"
#include "printmlp/quant.hpp"

namespace printmlp {

using PruneMask = WeightMask;

/// Global low-magnitude pruning: the floor(s * n) smallest |w| over all
/// layers are masked. Ties keep (layer, row, col) order, so a higher
/// sparsity always masks a superset.
inline PruneMask prune_low_magnitude(const MLPModel& m, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity <= 0.5 + 1e-12)) throw InputError("sparsity must lie in [0, 0.5]");
  PruneMask mask = full_mask(m);
  struct Pos {
    double mag;
    std::size_t l, r, c;
  };
  std::vector<Pos> all;
  all.reserve(m.weight_count());
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& W = m.layers[l].weights;
    for (std::size_t r = 0; r < W.rows(); ++r)
      for (std::size_t c = 0; c < W.cols(); ++c) all.push_back({std::abs(W(r, c)), l, r, c});
  }
  std::stable_sort(all.begin(), all.end(), [](const Pos& a, const Pos& b) { return a.mag < b.mag; });
  const auto n_pruned = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(all.size()) + 1e-9));
  for (std::size_t k = 0; k < n_pruned; ++k) mask[all[k].l](all[k].r, all[k].c) = 0;
  return mask;
}

inline std::size_t count_pruned(const PruneMask& mask) {
  std::size_t n = 0;
  for (const auto& m : mask)
    for (auto v : m.data()) n += v ? 0 : 1;
  return n;
}

// ---------------------------------------------------------------------------
// 1-D k-means
// ---------------------------------------------------------------------------

struct KMeansResult {
  std::vector<int> assignment;      // index into centroids, per input value
  std::vector<double> centroids;    // ascending
  std::vector<double> inertia;      // within-cluster SSE after each Lloyd iteration
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding on scalar data. When the data
/// holds at most k distinct values each value becomes its own centroid.
inline KMeansResult kmeans_1d(std::span<const double> x, int k, std::uint64_t seed, int max_iter = 100) {
  if (k < 1) throw InputError("k-means: K must be at least 1");
  KMeansResult res;
  const std::size_t n = x.size();
  res.assignment.assign(n, 0);
  if (n == 0) return res;

  std::vector<double> distinct(x.begin(), x.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> centers;
  if (distinct.size() <= static_cast<std::size_t>(k)) {
    centers = distinct;
  } else {
    Rng rng(seed);
    centers.push_back(x[rng.index(n)]);
    std::vector<double> d2(n);
    while (centers.size() < static_cast<std::size_t>(k)) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (double c : centers) best = std::min(best, (x[i] - c) * (x[i] - c));
        d2[i] = best;
        total += best;
      }
      double u = rng.uniform() * total;
      std::size_t pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] > 0.0 && u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
      while (d2[pick] == 0.0) pick = (pick + 1) % n;
      centers.push_back(x[pick]);
    }
  }

  auto assign = [&] {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      for (std::size_t c = 1; c < centers.size(); ++c)
        if (std::abs(x[i] - centers[c]) < std::abs(x[i] - centers[best])) best = static_cast<int>(c);
      if (best != res.assignment[i]) changed = true;
      res.assignment[i] = best;
    }
    return changed;
  };
  auto sse = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (x[i] - centers[res.assignment[i]]) * (x[i] - centers[res.assignment[i]]);
    return s;
  };

  assign();
  for (res.iterations = 0; res.iterations < max_iter;) {
    std::vector<double> sum(centers.size(), 0.0);
    std::vector<std::size_t> count(centers.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[res.assignment[i]] += x[i];
      ++count[res.assignment[i]];
    }
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (count[c]) centers[c] = sum[c] / static_cast<double>(count[c]);  // empty clusters keep their centre
    res.inertia.push_back(sse());
    ++res.iterations;
    if (!assign()) break;
  }

  // Drop empty clusters and order centroids ascending.
  std::vector<std::size_t> used;
  for (std::size_t c = 0; c < centers.size(); ++c)
    if (std::find(res.assignment.begin(), res.assignment.end(), static_cast<int>(c)) != res.assignment.end())
      used.push_back(c);
  std::sort(used.begin(), used.end(), [&](std::size_t a, std::size_t b) { return centers[a] < centers[b]; });
  std::vector<int> relabel(centers.size(), -1);
  for (std::size_t k2 = 0; k2 < used.size(); ++k2) {
    relabel[used[k2]] = static_cast<int>(k2);
    res.centroids.push_back(centers[used[k2]]);
  }
  for (auto& a : res.assignment) a = relabel[a];
  return res;
}

// ---------------------------------------------------------------------------
// Weight sharing
// ---------------------------------------------------------------------------

/// Per-layer, per-input clusters of the kept weights.
struct ClusterAssignment {
  std::array<int, 2> k{1, 1};
  /// Cluster id per weight; -1 = pruned or left unclustered (group <= K).
  std::array<Matrix<int>, 2> ids;
  /// centroids[l][col][id]
  std::array<std::vector<std::vector<double>>, 2> centroids;

  bool operator==(const ClusterAssignment&) const = default;
};

/// Cluster the kept weights of every column (same input) of each layer into
/// at most K[l] groups. Groups with at most K members stay unclustered.
inline ClusterAssignment cluster_weights(const std::array<Matrix<double>, 2>& weights, const PruneMask& mask,
                                         std::array<int, 2> k, std::uint64_t seed) {
  ClusterAssignment a;
  a.k = k;
  for (std::size_t l = 0; l < 2; ++l) {
    if (k[l] < 1) throw InputError("cluster_weights: K must be at least 1");
    const auto& W = weights[l];
    a.ids[l] = Matrix<int>(W.rows(), W.cols(), -1);
    a.centroids[l].assign(W.cols(), {});
    for (std::size_t c = 0; c < W.cols(); ++c) {
      std::vector<std::size_t> rows;
      std::vector<double> vals;
      for (std::size_t r = 0; r < W.rows(); ++r)
        if (mask[l](r, c)) {
          rows.push_back(r);
          vals.push_back(W(r, c));
        }
      if (vals.size() <= static_cast<std::size_t>(k[l])) continue;
      auto km = kmeans_1d(vals, k[l], derive_seed(seed, l * 1000003 + c));
      a.centroids[l][c] = km.centroids;
      for (std::size_t i = 0; i < rows.size(); ++i) a.ids[l](rows[i], c) = km.assignment[i];
    }
  }
  return a;
}

inline ClusterAssignment cluster_weights(const MLPModel& m, const PruneMask& mask, std::array<int, 2> k,
                                         std::uint64_t seed) {
  return cluster_weights({m.layers[0].weights, m.layers[1].weights}, mask, k, seed);
}

/// Largest number of kept weights sharing one input, per layer.
inline std::array<std::size_t, 2> max_group_size(const PruneMask& mask) {
  std::array<std::size_t, 2> out{0, 0};
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t c = 0; c < mask[l].cols(); ++c) {
      std::size_t n = 0;
      for (std::size_t r = 0; r < mask[l].rows(); ++r) n += mask[l](r, c) ? 1 : 0;
      out[l] = std::max(out[l], n);
    }
  return out;
}

inline FrozenWeights frozen_values(const ClusterAssignment& a) {
  FrozenWeights f;
  for (std::size_t l = 0; l < 2; ++l) {
    f[l] = Matrix<double>(a.ids[l].rows(), a.ids[l].cols(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < f[l].rows(); ++r)
      for (std::size_t c = 0; c < f[l].cols(); ++c)
        if (a.ids[l](r, c) >= 0) f[l](r, c) = a.centroids[l][c][a.ids[l](r, c)];
  }
  return f;
}

/// Copy of `m` with every clustered weight replaced by its centroid.
inline MLPModel apply_clusters(const MLPModel& m, const ClusterAssignment& a) {
  MLPModel out = m;
  const auto f = frozen_values(a);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t i = 0; i < f[l].size(); ++i)
      if (!std::isnan(f[l].data()[i])) out.layers[l].weights.data()[i] = f[l].data()[i];
  return out;
}

/// QAT retraining with clustered weights frozen at their centroids and
/// pruned weights at zero.
inline MLPModel retrain_frozen(const MLPModel& m, const Dataset& train_set, const ClusterAssignment& a,
                               const PruneMask& mask, const QuantGenes& genes, const TrainConfig& cfg) {
  const auto frozen = frozen_values(a);
  return qat_retrain(apply_clusters(m, a), train_set, genes, cfg, mask, &frozen);
}

/// Distinct nonzero |code| values per input, summed per layer: the number
/// of multipliers a shared-input circuit instantiates.
inline std::array<std::size_t, 2> sharing_census(const std::array<Matrix<std::int64_t>, 2>& codes) {
  std::array<std::size_t, 2> out{0, 0};
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t c = 0; c < codes[l].cols(); ++c) {
      std::set<std::int64_t> seen;
      for (std::size_t r = 0; r < codes[l].rows(); ++r)
        if (auto v = codes[l](r, c); v != 0) seen.insert(v < 0 ? -v : v);
      out[l] += seen.size();
    }
  return out;
}

inline std::array<std::size_t, 2> sharing_census(const QuantizedMLP& q) {
  return sharing_census({q.layers[0].weights, q.layers[1].weights});
}

inline void to_json(nlohmann::json& j, const ClusterAssignment& a) {
  j = {{"k", a.k}, {"ids", {matrix_to_json(a.ids[0]), matrix_to_json(a.ids[1])}}, {"centroids", a.centroids}};
}

}  // namespace printmlp

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "json.hpp"
#include "printmlp/common.hpp"
#include "printmlp/compress.hpp"
#include "printmlp/dataio.hpp"
#include "printmlp/hwcost.hpp"
#include "printmlp/model.hpp"
#include "printmlp/nsga2.hpp"
#include "printmlp/quant.hpp"

namespace printmlp {

// ---------------------------------------------------------------------------
// Chromosome encoding
//
// Nine integer genes: (P, I) for weights, biases, activations and inputs,
// then the sparsity level in tenths.
// ---------------------------------------------------------------------------

enum GeneIndex { kPc, kIc, kPb, kIb, kPr, kIr, kPi, kIi, kSparsity, kGeneCount };

inline std::vector<GeneBounds> gene_bounds(int sparsity_max_tenths = 5) {
  return {{2, 8}, {0, 7}, {2, 8}, {0, 7}, {1, 8}, {0, 8}, {1, 4}, {0, 4}, {0, std::clamp(sparsity_max_tenths, 0, 5)}};
}

/// Clamp integer bits so every format keeps at least zero fractional bits.
inline void repair_genome(Genome& g) {
  g[kIc] = std::min(g[kIc], g[kPc] - 1);
  g[kIb] = std::min(g[kIb], g[kPb] - 1);
  g[kIr] = std::min(g[kIr], g[kPr]);
  g[kIi] = std::min(g[kIi], g[kPi]);
}

inline QuantGenes decode_genome(const Genome& g) {
  if (g.size() != kGeneCount) throw InputError("chromosome must have 9 genes");
  QuantGenes q;
  q.weight = {g[kPc], g[kIc], true};
  q.bias = {g[kPb], g[kIb], true};
  q.activation = {g[kPr], g[kIr], false};
  q.input = {g[kPi], g[kIi], false};
  q.sparsity_tenths = g[kSparsity];
  return q;
}

inline Genome encode_genes(const QuantGenes& q) {
  return {q.weight.total_bits,     q.weight.integer_bits, q.bias.total_bits, q.bias.integer_bits,
          q.activation.total_bits, q.activation.integer_bits, q.input.total_bits, q.input.integer_bits,
          q.sparsity_tenths};
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvaluatedDesign {
  QuantGenes genes;
  double accuracy = 0.0;
  double accuracy_loss = 1.0;
  double area = std::numeric_limits<double>::infinity();
  std::optional<std::array<int, 2>> cluster_k;
  std::uint64_t seed = 0;
  bool failed = false;
  /// Absent for failed evaluations.
  std::shared_ptr<const QuantizedMLP> quantized;

  Point2 objectives() const { return {accuracy_loss, area}; }
};

struct SearchConfig {
  /// Quantization-aware retraining inside each evaluation.
  TrainConfig qat{Solver::adam, 0.005, 30, 16, 0.0, 0, 0.9};
  unsigned threads = 1;
  int sparsity_max_tenths = 5;
  int max_clusters = 9;
};

/// Fixed inputs of the search: the NAS model, the splits, the estimator and
/// the un-minimized reference implementation used as the baseline.
struct SearchContext {
  MLPModel model;
  Dataset train;
  Dataset test;
  AreaEstimator estimator;
  SearchConfig config;
  std::uint64_t seed = 0;
  QuantGenes reference;
  QuantizedMLP baseline;
  double baseline_accuracy = 0.0;
  double baseline_area = 0.0;
};

inline std::uint64_t quantization_seed(std::uint64_t seed) { return derive_seed(seed, 0x9a1); }

/// Baseline: the NAS model at reference precision (8-bit weights, biases
/// and activations, 4-bit inputs), no pruning, sharing or retraining.
inline SearchContext make_context(const MLPModel& model, const Dataset& train, const Dataset& test,
                                  const AreaEstimator& estimator, const SearchConfig& cfg, std::uint64_t seed) {
  SearchContext ctx{model, train, test, estimator, cfg, seed, {}, {}, 0.0, 0.0};
  ctx.config.qat.seed = seed;
  ctx.reference = reference_genes(model, train);
  ctx.baseline = quantize_model(model, ctx.reference, full_mask(model), train, quantization_seed(seed));
  ctx.baseline_accuracy = accuracy(ctx.baseline, test);
  ctx.baseline_area = estimate_area(ctx.baseline, estimator).total;
  return ctx;
}

/// Evaluates chromosomes (prune, retrain, quantize, score) with a
/// thread-safe memo keyed by the gene tuple.
class DesignEvaluator {
 public:
  explicit DesignEvaluator(const SearchContext& ctx) : ctx_(ctx) {}

  const SearchContext& context() const { return ctx_; }

  EvaluatedDesign evaluate(const QuantGenes& genes) { return entry(genes).design; }

  /// Retrained float model and pruning mask behind an evaluated design.
  std::pair<MLPModel, PruneMask> trained(const QuantGenes& genes) {
    const auto& e = entry(genes);
    return {e.model, e.mask};
  }

  std::size_t memo_size() const {
    std::lock_guard lock(mutex_);
    return memo_.size();
  }

  /// Score a quantized design against the baseline.
  EvaluatedDesign score(const QuantGenes& genes, QuantizedMLP q) const {
    EvaluatedDesign d;
    d.genes = genes;
    d.seed = ctx_.seed;
    d.accuracy = accuracy(q, ctx_.test);
    d.accuracy_loss = ctx_.baseline_accuracy - d.accuracy;
    d.area = estimate_area(q, ctx_.estimator).total;
    d.failed = false;
    d.quantized = std::make_shared<const QuantizedMLP>(std::move(q));
    return d;
  }

 private:
  struct Entry {
    EvaluatedDesign design;
    MLPModel model;
    PruneMask mask;
  };

  const Entry& entry(const QuantGenes& genes) {
    const Genome key = encode_genes(genes);
    {
      std::lock_guard lock(mutex_);
      if (auto it = memo_.find(key); it != memo_.end()) return *it->second;
    }
    auto e = std::make_shared<Entry>(compute(genes));
    std::lock_guard lock(mutex_);
    auto [it, inserted] = memo_.emplace(key, e);
    return *it->second;
  }

  Entry compute(const QuantGenes& genes) const {
    genes.validate();
    Entry e;
    e.mask = prune_low_magnitude(ctx_.model, genes.sparsity());
    try {
      e.model = qat_retrain(ctx_.model, ctx_.train, genes, ctx_.config.qat, e.mask);
      e.design = score(genes, quantize_model(e.model, genes, e.mask, ctx_.train, quantization_seed(ctx_.seed)));
    } catch (const TrainingError&) {
      e.model = ctx_.model;
      e.design = EvaluatedDesign{};
      e.design.genes = genes;
      e.design.seed = ctx_.seed;
      e.design.failed = true;
    }
    return e;
  }

  const SearchContext& ctx_;
  mutable std::mutex mutex_;
  std::map<Genome, std::shared_ptr<const Entry>> memo_;
};

// ---------------------------------------------------------------------------
// Fronts
// ---------------------------------------------------------------------------

using ParetoFront = std::vector<EvaluatedDesign>;

inline std::vector<Point2> front_points(const ParetoFront& f) {
  std::vector<Point2> p;
  for (const auto& d : f) p.push_back(d.objectives());
  return p;
}

/// Non-dominated members without duplicate objective vectors, ordered by
/// area then accuracy loss.
inline ParetoFront pareto_filter(const ParetoFront& designs) {
  ParetoFront ok;
  for (const auto& d : designs)
    if (!d.failed) ok.push_back(d);
  const auto pts = front_points(ok);
  ParetoFront out;
  for (std::size_t i : nondominated_indices(pts)) {
    const bool dup = std::any_of(out.begin(), out.end(), [&](const EvaluatedDesign& o) {
      return o.objectives() == ok[i].objectives();
    });
    if (!dup) out.push_back(ok[i]);
  }
  std::stable_sort(out.begin(), out.end(), [](const EvaluatedDesign& a, const EvaluatedDesign& b) {
    return a.area != b.area ? a.area < b.area : a.accuracy_loss < b.accuracy_loss;
  });
  return out;
}

/// Every point of `other` is matched or beaten by some point of `front`.
inline bool weakly_dominates(std::span<const Point2> front, std::span<const Point2> other, double eps = 1e-12) {
  for (const auto& p : other) {
    const bool covered = std::any_of(front.begin(), front.end(), [&](const Point2& f) {
      return f[0] <= p[0] + eps && f[1] <= p[1] + eps;
    });
    if (!covered) return false;
  }
  return true;
}

struct GaOptions {
  Nsga2Config nsga;
  /// Fix the sparsity gene at zero (quantization-only search).
  bool quantization_only = false;
};

/// NSGA-II over the chromosome; returns the final rank-0 designs.
inline ParetoFront search_front(DesignEvaluator& ev, const GaOptions& opt, std::uint64_t seed,
                                Nsga2Result* raw = nullptr) {
  auto bounds = gene_bounds(opt.quantization_only ? 0 : ev.context().config.sparsity_max_tenths);
  Nsga2Config cfg = opt.nsga;
  cfg.threads = ev.context().config.threads;
  auto res = nsga2(
      bounds,
      [&](const Genome& g) {
        auto d = ev.evaluate(decode_genome(g));
        return d.objectives();
      },
      repair_genome, cfg, seed);
  ParetoFront front;
  for (const auto& ind : res.front) front.push_back(ev.evaluate(decode_genome(ind.genes)));
  if (raw) *raw = std::move(res);
  return pareto_filter(front);
}

/// Weight-sharing sweep: every (K_hidden, K_out) pair up to the largest
/// same-input group (and `max_clusters`) for every member, clustered on the
/// member's quantized weights, retrained with frozen centroids, and merged
/// with the input front.
inline ParetoFront cluster_sweep(const ParetoFront& front, DesignEvaluator& ev) {
  if (front.empty()) throw InputError("cluster sweep: empty front");
  const auto& ctx = ev.context();
  struct Job {
    std::size_t member;
    std::array<int, 2> k;
  };
  std::vector<Job> jobs;
  std::vector<std::pair<MLPModel, PruneMask>> trained(front.size());
  for (std::size_t m = 0; m < front.size(); ++m) {
    if (front[m].failed || front[m].cluster_k) continue;
    trained[m] = ev.trained(front[m].genes);
    const auto groups = max_group_size(trained[m].second);
    const int k0max = std::min<int>(ctx.config.max_clusters, static_cast<int>(groups[0]));
    const int k1max = std::min<int>(ctx.config.max_clusters, static_cast<int>(groups[1]));
    for (int k0 = 1; k0 <= std::max(k0max, 1); ++k0)
      for (int k1 = 1; k1 <= std::max(k1max, 1); ++k1) {
        if (k0 >= static_cast<int>(groups[0]) && k1 >= static_cast<int>(groups[1])) continue;  // nothing clustered
        jobs.push_back({m, {k0, k1}});
      }
  }
  std::vector<std::optional<EvaluatedDesign>> out(jobs.size());
  parallel_for(jobs.size(), ctx.config.threads, [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto& member = front[job.member];
    const auto& [model, mask] = trained[job.member];
    const auto& q = *member.quantized;
    std::array<Matrix<double>, 2> real;
    for (std::size_t l = 0; l < 2; ++l) {
      real[l] = Matrix<double>(q.layers[l].weights.rows(), q.layers[l].weights.cols());
      for (std::size_t i = 0; i < real[l].size(); ++i)
        real[l].data()[i] = q.genes.weight.value(q.layers[l].weights.data()[i]);
    }
    const auto assignment = cluster_weights(real, mask, job.k, derive_seed(ctx.seed, 0xC1));
    try {
      auto retrained = retrain_frozen(model, ctx.train, assignment, mask, member.genes, ctx.config.qat);
      auto qc = quantize_model(retrained, member.genes, mask, ctx.train, quantization_seed(ctx.seed), &assignment.ids);
      if (qc.layers == q.layers) return;  // identical circuit
      auto d = ev.score(member.genes, std::move(qc));
      d.cluster_k = job.k;
      out[j] = std::move(d);
    } catch (const TrainingError&) {
    }
  });
  ParetoFront merged = front;
  for (auto& d : out)
    if (d) merged.push_back(std::move(*d));
  return pareto_filter(merged);
}

/// Designs of the pruning-only technique: reference formats, every sparsity level.
inline ParetoFront prune_only_front(DesignEvaluator& ev) {
  ParetoFront all;
  for (int s = 0; s <= ev.context().config.sparsity_max_tenths; ++s) {
    QuantGenes g = ev.context().reference;
    g.sparsity_tenths = s;
    all.push_back(ev.evaluate(g));
  }
  return pareto_filter(all);
}

/// Weight sharing alone on the reference design.
inline ParetoFront cluster_only_front(DesignEvaluator& ev) {
  return cluster_sweep({ev.evaluate(ev.context().reference)}, ev);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json design_to_json(const EvaluatedDesign& d) {
  nlohmann::json j = {{"genes", d.genes},
                      {"accuracy", d.accuracy},
                      {"accuracy_loss", d.accuracy_loss},
                      {"area", detail::objective_json(d.area)},
                      {"seed", d.seed},
                      {"failed", d.failed}};
  j["cluster_k"] = d.cluster_k ? nlohmann::json(*d.cluster_k) : nlohmann::json(nullptr);
  if (d.quantized) j["quantized"] = *d.quantized;
  return j;
}

inline EvaluatedDesign design_from_json(const nlohmann::json& j) {
  EvaluatedDesign d;
  d.genes = j.at("genes").get<QuantGenes>();
  d.accuracy = j.at("accuracy").get<double>();
  d.accuracy_loss = j.at("accuracy_loss").get<double>();
  d.area = detail::objective_from_json(j.at("area"));
  d.seed = j.at("seed").get<std::uint64_t>();
  d.failed = j.value("failed", false);
  if (!j.at("cluster_k").is_null()) d.cluster_k = j.at("cluster_k").get<std::array<int, 2>>();
  if (j.contains("quantized")) d.quantized = std::make_shared<const QuantizedMLP>(j.at("quantized").get<QuantizedMLP>());
  return d;
}

}  // namespace printmlp

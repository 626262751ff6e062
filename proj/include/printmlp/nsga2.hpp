#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "printmlp/common.hpp"

namespace printmlp {

/// Two minimized objectives.
using Point2 = std::array<double, 2>;

inline bool dominates(const Point2& a, const Point2& b) {
  return a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1]);
}

/// Front index per point: 0 = non-dominated, k = non-dominated once fronts
/// below k are removed.
inline std::vector<int> nondominated_sort(std::span<const Point2> pts) {
  const std::size_t n = pts.size();
  std::vector<int> rank(n, -1);
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<std::size_t> count(n, 0);
  std::vector<std::size_t> current;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (dominates(pts[i], pts[j]))
        dominated[i].push_back(j);
      else if (dominates(pts[j], pts[i]))
        ++count[i];
    }
    if (count[i] == 0) {
      rank[i] = 0;
      current.push_back(i);
    }
  }
  for (int r = 0; !current.empty(); ++r) {
    std::vector<std::size_t> next;
    for (std::size_t i : current)
      for (std::size_t j : dominated[i])
        if (--count[j] == 0) {
          rank[j] = r + 1;
          next.push_back(j);
        }
    current = std::move(next);
  }
  return rank;
}

/// Crowding distance within one front: boundary points are infinite,
/// interior points sum their normalized neighbour gaps per objective.
inline std::vector<double> crowding_distance(std::span<const Point2> pts) {
  const std::size_t n = pts.size();
  std::vector<double> d(n, 0.0);
  if (n <= 2) {
    std::fill(d.begin(), d.end(), std::numeric_limits<double>::infinity());
    return d;
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t m = 0; m < 2; ++m) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return pts[a][m] < pts[b][m] || (pts[a][m] == pts[b][m] && pts[a][1 - m] < pts[b][1 - m]);
    });
    d[idx.front()] = d[idx.back()] = std::numeric_limits<double>::infinity();
    const double range = pts[idx.back()][m] - pts[idx.front()][m];
    if (!(range > 0.0) || !std::isfinite(range)) continue;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      const double gap = pts[idx[k + 1]][m] - pts[idx[k - 1]][m];
      if (std::isfinite(gap)) d[idx[k]] += gap / range;
    }
  }
  return d;
}

/// Area dominated by the points and bounded by `ref` (both objectives minimized).
inline double hypervolume_2d(std::span<const Point2> pts, const Point2& ref) {
  std::vector<Point2> p;
  for (const auto& x : pts)
    if (x[0] < ref[0] && x[1] < ref[1]) p.push_back(x);
  std::sort(p.begin(), p.end());
  double hv = 0.0, prev = ref[1];
  for (const auto& x : p)
    if (x[1] < prev) {
      hv += (ref[0] - x[0]) * (prev - x[1]);
      prev = x[1];
    }
  return hv;
}

inline std::vector<std::size_t> nondominated_indices(std::span<const Point2> pts) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dom = false;
    for (std::size_t j = 0; j < pts.size() && !dom; ++j) dom = dominates(pts[j], pts[i]);
    if (!dom) out.push_back(i);
  }
  return out;
}

/// O(n^2) audit: no member dominates another.
inline bool mutually_nondominated(std::span<const Point2> pts) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (i != j && dominates(pts[i], pts[j])) return false;
  return true;
}

// ---------------------------------------------------------------------------
// NSGA-II over bounded integer genes
// ---------------------------------------------------------------------------

struct GeneBounds {
  int lo = 0;
  int hi = 0;
};

using Genome = std::vector<int>;

struct Individual {
  Genome genes;
  Point2 objectives{0.0, 0.0};
  int rank = 0;
  double crowding = 0.0;
};

struct Nsga2Config {
  std::size_t pop_size = 40;
  std::size_t generations = 50;
  double crossover_rate = 0.9;
  double swap_probability = 0.5;
  /// Per-gene reset probability; <= 0 means 1 / number of genes.
  double mutation_rate = 0.0;
  unsigned threads = 1;
  /// JSON-lines file with one record per generation; empty disables.
  std::string checkpoint_path;
  /// Continue from the last record of `checkpoint_path` when it exists.
  bool resume = false;
  /// Genomes placed in the initial population before random ones.
  std::vector<Genome> initial;
};

struct Nsga2Result {
  std::vector<Individual> front;  // rank 0 of the final population, distinct genomes
  std::vector<Individual> population;
  std::vector<Point2> initial_front;
  std::size_t evaluations = 0;
};

namespace detail {

inline nlohmann::json objective_json(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

inline double objective_from_json(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>() == "-inf" ? -std::numeric_limits<double>::infinity()
                                                           : std::numeric_limits<double>::infinity();
  return j.get<double>();
}

inline void assign_rank_and_crowding(std::vector<Individual>& pop) {
  std::vector<Point2> pts;
  for (const auto& ind : pop) pts.push_back(ind.objectives);
  const auto rank = nondominated_sort(pts);
  const int max_rank = pop.empty() ? 0 : *std::max_element(rank.begin(), rank.end());
  for (int r = 0; r <= max_rank; ++r) {
    std::vector<std::size_t> members;
    std::vector<Point2> fp;
    for (std::size_t i = 0; i < pop.size(); ++i)
      if (rank[i] == r) {
        members.push_back(i);
        fp.push_back(pts[i]);
      }
    const auto cd = crowding_distance(fp);
    for (std::size_t k = 0; k < members.size(); ++k) {
      pop[members[k]].rank = r;
      pop[members[k]].crowding = cd[k];
    }
  }
}

inline bool crowded_less(const Individual& a, const Individual& b) {
  return a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding);
}

inline std::vector<Individual> rank0_distinct(const std::vector<Individual>& pop) {
  std::vector<Individual> out;
  for (const auto& ind : pop) {
    if (ind.rank != 0) continue;
    if (std::none_of(out.begin(), out.end(), [&](const Individual& o) { return o.genes == ind.genes; }))
      out.push_back(ind);
  }
  std::sort(out.begin(), out.end(), [](const Individual& a, const Individual& b) {
    return a.objectives != b.objectives ? a.objectives < b.objectives : a.genes < b.genes;
  });
  return out;
}

}  // namespace detail

/// Elitist NSGA-II. `evaluate(genome) -> Point2` must be deterministic;
/// results are memoized per genome and uncached genomes of one generation
/// are evaluated concurrently. `repair(genome&)` enforces coupled bounds.
template <class Evaluate, class Repair>
Nsga2Result nsga2(const std::vector<GeneBounds>& bounds, Evaluate&& evaluate, Repair&& repair, const Nsga2Config& cfg,
                  std::uint64_t seed) {
  if (cfg.pop_size < 4 || cfg.pop_size % 2) throw InputError("nsga2: population size must be even and at least 4");
  const std::size_t n_genes = bounds.size();
  const double mutation = cfg.mutation_rate > 0.0 ? cfg.mutation_rate : 1.0 / static_cast<double>(n_genes);
  Rng rng(seed);
  std::map<Genome, Point2> memo;
  Nsga2Result res;

  auto random_genome = [&] {
    Genome g(n_genes);
    for (std::size_t k = 0; k < n_genes; ++k) g[k] = static_cast<int>(rng.uniform_int(bounds[k].lo, bounds[k].hi));
    repair(g);
    return g;
  };
  auto evaluate_all = [&](std::vector<Individual>& inds) {
    std::vector<Genome> todo;
    for (const auto& ind : inds)
      if (!memo.count(ind.genes) && std::find(todo.begin(), todo.end(), ind.genes) == todo.end())
        todo.push_back(ind.genes);
    std::vector<Point2> out(todo.size());
    parallel_for(todo.size(), cfg.threads, [&](std::size_t i) { out[i] = evaluate(todo[i]); });
    for (std::size_t i = 0; i < todo.size(); ++i) memo.emplace(todo[i], out[i]);
    res.evaluations += todo.size();
    for (auto& ind : inds) ind.objectives = memo.at(ind.genes);
  };
  auto write_checkpoint = [&](std::size_t gen, const std::vector<Individual>& pop) {
    if (cfg.checkpoint_path.empty()) return;
    nlohmann::json rec;
    rec["generation"] = gen;
    rec["rng"] = rng.state();
    rec["population"] = nlohmann::json::array();
    for (const auto& ind : pop)
      rec["population"].push_back({{"genes", ind.genes},
                                   {"objectives",
                                    {detail::objective_json(ind.objectives[0]),
                                     detail::objective_json(ind.objectives[1])}}});
    std::ofstream out(cfg.checkpoint_path, gen == 0 ? std::ios::trunc : std::ios::app);
    out << rec.dump() << "\n";
  };

  std::vector<Individual> pop;
  std::size_t start_gen = 0;
  bool resumed = false;
  if (cfg.resume && !cfg.checkpoint_path.empty()) {
    std::ifstream in(cfg.checkpoint_path);
    std::string line, last;
    while (std::getline(in, line))
      if (!line.empty()) last = line;
    if (!last.empty()) {
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(last);
      } catch (const nlohmann::json::exception& e) {
        throw InputError("corrupt checkpoint '" + cfg.checkpoint_path + "': " + e.what());
      }
      for (const auto& p : rec.at("population")) {
        Individual ind;
        ind.genes = p.at("genes").get<Genome>();
        ind.objectives = {detail::objective_from_json(p.at("objectives")[0]),
                          detail::objective_from_json(p.at("objectives")[1])};
        memo.emplace(ind.genes, ind.objectives);
        pop.push_back(ind);
      }
      if (pop.size() != cfg.pop_size) throw InputError("checkpoint population size differs from the configuration");
      rng.restore(rec.at("rng").get<std::string>());
      start_gen = rec.at("generation").get<std::size_t>();
      resumed = true;
    }
  }
  if (!resumed) {
    for (const auto& g0 : cfg.initial) {
      if (pop.size() == cfg.pop_size) break;
      Genome g = g0;
      repair(g);
      pop.push_back({g});
    }
    while (pop.size() < cfg.pop_size) pop.push_back({random_genome()});
    evaluate_all(pop);
    detail::assign_rank_and_crowding(pop);
    write_checkpoint(0, pop);
  } else {
    detail::assign_rank_and_crowding(pop);
  }
  for (const auto& ind : pop)
    if (ind.rank == 0) res.initial_front.push_back(ind.objectives);

  auto tournament = [&]() -> const Individual& {
    const Individual& a = pop[rng.index(pop.size())];
    const Individual& b = pop[rng.index(pop.size())];
    return detail::crowded_less(b, a) ? b : a;
  };

  for (std::size_t gen = start_gen + 1; gen <= cfg.generations; ++gen) {
    std::vector<Individual> offspring;
    while (offspring.size() < cfg.pop_size) {
      Genome c1 = tournament().genes;
      Genome c2 = tournament().genes;
      if (rng.uniform() < cfg.crossover_rate)
        for (std::size_t k = 0; k < n_genes; ++k)
          if (rng.uniform() < cfg.swap_probability) std::swap(c1[k], c2[k]);
      for (Genome* c : {&c1, &c2}) {
        for (std::size_t k = 0; k < n_genes; ++k)
          if (rng.uniform() < mutation) (*c)[k] = static_cast<int>(rng.uniform_int(bounds[k].lo, bounds[k].hi));
        repair(*c);
        offspring.push_back({*c});
      }
    }
    evaluate_all(offspring);
    // Survivors are chosen among distinct genomes; copies only backfill, so
    // clones cannot crowd out the sparse ends of the front.
    std::vector<Individual> merged, copies;
    std::set<Genome> seen;
    for (const auto* part : {&pop, &offspring})
      for (const auto& ind : *part) (seen.insert(ind.genes).second ? merged : copies).push_back(ind);
    detail::assign_rank_and_crowding(merged);
    std::vector<std::size_t> order(merged.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return detail::crowded_less(merged[a], merged[b]); });
    std::vector<Individual> next;
    for (std::size_t k = 0; k < std::min(cfg.pop_size, merged.size()); ++k) next.push_back(merged[order[k]]);
    for (std::size_t k = 0; next.size() < cfg.pop_size; ++k) next.push_back(copies[k]);
    pop = std::move(next);
    detail::assign_rank_and_crowding(pop);
    write_checkpoint(gen, pop);
  }

  res.population = pop;
  res.front = detail::rank0_distinct(pop);
  return res;
}

}  // namespace printmlp

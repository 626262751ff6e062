#pragma once

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "printmlp/common.hpp"
#include "printmlp/dataio.hpp"

namespace printmlp {

inline constexpr std::size_t kMaxHiddenNeurons = 10;

struct Topology {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
};

struct LayerParams {
  Matrix<double> weights;  // rows = neurons, cols = inputs
  std::vector<double> biases;

  bool operator==(const LayerParams&) const = default;
};

enum class Solver { sgd, adam };

inline std::string to_string(Solver s) { return s == Solver::sgd ? "sgd" : "adam"; }

inline Solver solver_from_string(const std::string& s) {
  if (s == "sgd") return Solver::sgd;
  if (s == "adam") return Solver::adam;
  throw InputError("unknown solver '" + s + "'");
}

struct TrainConfig {
  Solver solver = Solver::adam;
  double learning_rate = 0.01;
  int epochs = 100;
  int batch_size = 16;
  double l1_lambda = 0.0;
  std::uint64_t seed = 0;
  /// SGD only.
  double momentum = 0.9;

  bool operator==(const TrainConfig&) const = default;
};

/// One-hidden-layer perceptron: ReLU hidden layer, linear output layer.
struct MLPModel {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  std::array<LayerParams, 2> layers;
  TrainConfig trained_with;

  Topology topology() const { return {input_dim, hidden_dim, output_dim}; }

  std::size_t weight_count() const { return layers[0].weights.size() + layers[1].weights.size(); }

  void validate() const {
    if (hidden_dim < 1 || hidden_dim > kMaxHiddenNeurons)
      throw InputError("model: hidden_dim must lie in [1, 10]");
    const auto& l0 = layers[0];
    const auto& l1 = layers[1];
    if (l0.weights.rows() != hidden_dim || l0.weights.cols() != input_dim || l0.biases.size() != hidden_dim ||
        l1.weights.rows() != output_dim || l1.weights.cols() != hidden_dim || l1.biases.size() != output_dim)
      throw InputError("model: layer shapes do not chain");
  }

  bool operator==(const MLPModel&) const = default;
};

/// Glorot-uniform weights, zero biases.
inline MLPModel init_model(const Topology& t, std::uint64_t seed) {
  MLPModel m;
  m.input_dim = t.input_dim;
  m.hidden_dim = t.hidden_dim;
  m.output_dim = t.output_dim;
  Rng rng(seed);
  const std::array<std::pair<std::size_t, std::size_t>, 2> shapes{{{t.hidden_dim, t.input_dim}, {t.output_dim, t.hidden_dim}}};
  for (std::size_t l = 0; l < 2; ++l) {
    const auto [rows, cols] = shapes[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    m.layers[l].weights = Matrix<double>(rows, cols);
    for (auto& w : m.layers[l].weights.data()) w = rng.uniform(-limit, limit);
    m.layers[l].biases.assign(rows, 0.0);
  }
  m.validate();
  return m;
}

/// Index of the largest value; ties go to the lowest index.
template <class T>
std::size_t argmax(std::span<const T> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::vector<double> forward_logits(const MLPModel& m, std::span<const double> x,
                                          std::vector<double>* hidden_pre = nullptr) {
  std::vector<double> h(m.hidden_dim);
  for (std::size_t j = 0; j < m.hidden_dim; ++j) {
    double z = m.layers[0].biases[j];
    auto w = m.layers[0].weights.row(j);
    for (std::size_t k = 0; k < m.input_dim; ++k) z += w[k] * x[k];
    if (hidden_pre) hidden_pre->push_back(z);
    h[j] = z > 0.0 ? z : 0.0;
  }
  std::vector<double> out(m.output_dim);
  for (std::size_t o = 0; o < m.output_dim; ++o) {
    double z = m.layers[1].biases[o];
    auto w = m.layers[1].weights.row(o);
    for (std::size_t j = 0; j < m.hidden_dim; ++j) z += w[j] * h[j];
    out[o] = z;
  }
  return out;
}

inline int predict(const MLPModel& m, std::span<const double> x) {
  auto z = forward_logits(m, x);
  return static_cast<int>(argmax<double>(z));
}

/// Fraction of rows whose argmax prediction equals the label.
inline double accuracy(const MLPModel& m, const Dataset& d) {
  if (d.rows() == 0) throw InputError("empty evaluation set");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < d.rows(); ++r)
    if (predict(m, d.features.row(r)) == d.labels[r]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(d.rows());
}

/// Per-node activation maxima over a dataset.
struct ActivationProfile {
  /// max |pre-activation| per node, per layer
  std::array<std::vector<double>, 2> pre_max_abs;
  /// max post-activation per node (ReLU for hidden, identity for output)
  std::array<std::vector<double>, 2> post_max;

  bool operator==(const ActivationProfile&) const = default;
};

inline ActivationProfile profile_activations(const MLPModel& m, const Dataset& d) {
  ActivationProfile p;
  p.pre_max_abs[0].assign(m.hidden_dim, 0.0);
  p.pre_max_abs[1].assign(m.output_dim, 0.0);
  p.post_max[0].assign(m.hidden_dim, 0.0);
  p.post_max[1].assign(m.output_dim, d.rows() ? -std::numeric_limits<double>::infinity() : 0.0);
  std::vector<double> pre;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    pre.clear();
    auto out = forward_logits(m, d.features.row(r), &pre);
    for (std::size_t j = 0; j < m.hidden_dim; ++j) {
      p.pre_max_abs[0][j] = std::max(p.pre_max_abs[0][j], std::abs(pre[j]));
      p.post_max[0][j] = std::max(p.post_max[0][j], std::max(pre[j], 0.0));
    }
    for (std::size_t o = 0; o < m.output_dim; ++o) {
      p.pre_max_abs[1][o] = std::max(p.pre_max_abs[1][o], std::abs(out[o]));
      p.post_max[1][o] = std::max(p.post_max[1][o], out[o]);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Gradient of the training loss, same shape as the model parameters.
struct Gradients {
  std::array<LayerParams, 2> layers;
};

/// Forward-pass parameters actually used in one step, with the
/// straight-through gates that route their gradients back to the stored
/// parameters (1 = pass, 0 = block).
struct EffectiveParams {
  std::array<Matrix<double>, 2> weights;
  std::array<std::vector<double>, 2> biases;
  std::array<Matrix<double>, 2> weight_gate;
  std::array<std::vector<double>, 2> bias_gate;
};

/// Plain floating-point training: parameters used as stored, ReLU hidden layer.
struct FloatPolicy {
  Matrix<double> prepare_inputs(const Matrix<double>& x) const { return x; }

  void effective(const MLPModel& m, Rng&, EffectiveParams& eff) const {
    for (std::size_t l = 0; l < 2; ++l) {
      eff.weights[l] = m.layers[l].weights;
      eff.biases[l] = m.layers[l].biases;
      eff.weight_gate[l] = Matrix<double>(m.layers[l].weights.rows(), m.layers[l].weights.cols(), 1.0);
      eff.bias_gate[l].assign(m.layers[l].biases.size(), 1.0);
    }
  }

  double activation(double z, double& grad) const {
    grad = z > 0.0 ? 1.0 : 0.0;
    return z > 0.0 ? z : 0.0;
  }

  /// Gradient gate for L1 and updates: 0 for parameters held fixed.
  bool trainable(std::size_t, std::size_t, std::size_t) const { return true; }

  void constrain(MLPModel&) const {}
};

namespace detail {

/// Mean softmax cross-entropy over `rows` plus l1 * sum|W| over trainable
/// weights. Writes gradients with respect to the stored parameters.
template <class Policy>
double batch_loss_gradient(const MLPModel& m, const EffectiveParams& eff, const Matrix<double>& x,
                           std::span<const int> labels, std::span<const std::size_t> rows, double l1,
                           const Policy& policy, Gradients* grad) {
  const std::size_t H = m.hidden_dim, O = m.output_dim, I = m.input_dim;
  Gradients g;
  if (grad) {
    for (std::size_t l = 0; l < 2; ++l) {
      g.layers[l].weights = Matrix<double>(eff.weights[l].rows(), eff.weights[l].cols());
      g.layers[l].biases.assign(eff.biases[l].size(), 0.0);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  std::vector<double> z1(H), h(H), gate(H), z2(O), p(O), dz2(O), dh(H);
  for (std::size_t r : rows) {
    auto xr = x.row(r);
    for (std::size_t j = 0; j < H; ++j) {
      double z = eff.biases[0][j];
      auto w = eff.weights[0].row(j);
      for (std::size_t k = 0; k < I; ++k) z += w[k] * xr[k];
      z1[j] = z;
      h[j] = policy.activation(z, gate[j]);
    }
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < O; ++o) {
      double z = eff.biases[1][o];
      auto w = eff.weights[1].row(o);
      for (std::size_t j = 0; j < H; ++j) z += w[j] * h[j];
      z2[o] = z;
      zmax = std::max(zmax, z);
    }
    double sum = 0.0;
    for (std::size_t o = 0; o < O; ++o) sum += (p[o] = std::exp(z2[o] - zmax));
    const int y = labels[r];
    loss += (std::log(sum) + zmax - z2[y]) * inv_n;
    if (!grad) continue;
    for (std::size_t o = 0; o < O; ++o) dz2[o] = (p[o] / sum - (static_cast<int>(o) == y ? 1.0 : 0.0)) * inv_n;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t o = 0; o < O; ++o) {
      auto gw = g.layers[1].weights.row(o);
      auto w = eff.weights[1].row(o);
      for (std::size_t j = 0; j < H; ++j) {
        gw[j] += dz2[o] * h[j];
        dh[j] += dz2[o] * w[j];
      }
      g.layers[1].biases[o] += dz2[o];
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double dz1 = dh[j] * gate[j];
      if (dz1 == 0.0) continue;
      auto gw = g.layers[0].weights.row(j);
      for (std::size_t k = 0; k < I; ++k) gw[k] += dz1 * xr[k];
      g.layers[0].biases[j] += dz1;
    }
  }
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& W = m.layers[l].weights;
    for (std::size_t r = 0; r < W.rows(); ++r)
      for (std::size_t c = 0; c < W.cols(); ++c) {
        if (!policy.trainable(l, r, c)) {
          if (grad) g.layers[l].weights(r, c) = 0.0;
          continue;
        }
        const double w = W(r, c);
        loss += l1 * std::abs(w);
        if (grad) {
          g.layers[l].weights(r, c) *= eff.weight_gate[l](r, c);
          g.layers[l].weights(r, c) += l1 * (w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0));
        }
      }
    if (grad)
      for (std::size_t b = 0; b < g.layers[l].biases.size(); ++b) g.layers[l].biases[b] *= eff.bias_gate[l][b];
  }
  if (grad) *grad = std::move(g);
  return loss;
}

}  // namespace detail

/// Loss and analytic gradient of the float model on a whole dataset.
inline double loss_and_gradient(const MLPModel& m, const Dataset& d, double l1, Gradients* grad) {
  FloatPolicy policy;
  EffectiveParams eff;
  Rng unused(0);
  policy.effective(m, unused, eff);
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return detail::batch_loss_gradient(m, eff, d.features, d.labels, rows, l1, policy, grad);
}

/// Mini-batch SGD (with momentum) or Adam on `m`, in place. The policy
/// decides what the forward pass sees and which parameters may move.
template <class Policy>
void fit(MLPModel& m, const Dataset& train, const TrainConfig& cfg, const Policy& policy, Rng& rng) {
  if (cfg.epochs <= 0) return;
  if (train.rows() == 0) throw InputError("train: empty training set");
  if (train.cols() != m.input_dim) throw InputError("train: dataset width does not match the model");
  const Matrix<double> x = policy.prepare_inputs(train.features);

  struct Slot {
    std::vector<double> m1, m2;
  };
  std::array<Slot, 2> wstate, bstate;
  for (std::size_t l = 0; l < 2; ++l) {
    wstate[l].m1.assign(m.layers[l].weights.size(), 0.0);
    wstate[l].m2.assign(m.layers[l].weights.size(), 0.0);
    bstate[l].m1.assign(m.layers[l].biases.size(), 0.0);
    bstate[l].m2.assign(m.layers[l].biases.size(), 0.0);
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long step = 0;
  auto update = [&](std::vector<double>& params, const std::vector<double>& g, Slot& s) {
    if (cfg.solver == Solver::adam) {
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        s.m1[i] = beta1 * s.m1[i] + (1.0 - beta1) * g[i];
        s.m2[i] = beta2 * s.m2[i] + (1.0 - beta2) * g[i] * g[i];
        params[i] -= cfg.learning_rate * (s.m1[i] / c1) / (std::sqrt(s.m2[i] / c2) + eps);
      }
    } else {
      for (std::size_t i = 0; i < params.size(); ++i) {
        s.m1[i] = cfg.momentum * s.m1[i] - cfg.learning_rate * g[i];
        params[i] += s.m1[i];
      }
    }
  };

  std::vector<std::size_t> order(train.rows());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  EffectiveParams eff;
  Gradients g;
  policy.constrain(m);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      policy.effective(m, rng, eff);
      const double loss = detail::batch_loss_gradient(m, eff, x, train.labels, batch, cfg.l1_lambda, policy, &g);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                            "; the learning rate is probably too high");
      ++step;
      for (std::size_t l = 0; l < 2; ++l) {
        update(m.layers[l].weights.data(), g.layers[l].weights.data(), wstate[l]);
        update(m.layers[l].biases, g.layers[l].biases, bstate[l]);
      }
      policy.constrain(m);
    }
  }
  for (std::size_t l = 0; l < 2; ++l) {
    for (double w : m.layers[l].weights.data())
      if (!std::isfinite(w)) throw TrainingError("non-finite weight after training");
  }
}

/// Train a fresh model of the given topology. Deterministic for a fixed seed.
inline MLPModel train(const Dataset& train_set, const Topology& topology, const TrainConfig& cfg) {
  if (topology.input_dim != train_set.cols()) throw InputError("train: topology input_dim mismatch");
  if (static_cast<int>(topology.output_dim) < train_set.n_classes)
    throw InputError("train: topology output_dim smaller than the class count");
  MLPModel m = init_model(topology, cfg.seed);
  m.trained_with = cfg;
  Rng rng(derive_seed(cfg.seed, 1));
  fit(m, train_set, cfg, FloatPolicy{}, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Hardware-aware architecture search
// ---------------------------------------------------------------------------

struct NasConfig {
  std::size_t budget = 20;
  std::size_t folds = 5;
  /// Candidates whose CV accuracy is within this band of the best form the
  /// pool from which the minimum-area model is chosen.
  double tolerance = 0.005;
  int min_hidden = 1;
  int max_hidden = static_cast<int>(kMaxHiddenNeurons);
  std::vector<double> learning_rates{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  std::vector<int> epochs{50, 100, 200};
  std::vector<int> batch_sizes{16, 32};
  std::vector<Solver> solvers{Solver::sgd, Solver::adam};
  double l1_lambda = 0.0;
  unsigned threads = 1;
};

struct NasTrial {
  std::size_t hidden_dim = 0;
  TrainConfig config;
  double cv_accuracy = -1.0;
  bool failed = false;
  std::optional<double> area;
};

struct NasResult {
  MLPModel model;
  std::vector<NasTrial> trials;
  std::size_t winner = 0;
};

using AreaCallback = std::function<double(const MLPModel&)>;

/// Pool = successful trials within `tolerance` of the best CV accuracy.
inline std::vector<std::size_t> nas_pool(std::span<const NasTrial> trials, double tolerance) {
  double best = -1.0;
  for (const auto& t : trials)
    if (!t.failed) best = std::max(best, t.cv_accuracy);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < trials.size(); ++i)
    if (!trials[i].failed && trials[i].cv_accuracy >= best - tolerance - 1e-12) pool.push_back(i);
  return pool;
}

/// Minimum area wins; ties go to higher CV accuracy, then lower index.
inline std::size_t select_min_area(std::span<const NasTrial> trials, std::span<const std::size_t> pool) {
  std::size_t best = pool.front();
  for (std::size_t i : pool) {
    const auto& a = trials[i];
    const auto& b = trials[best];
    if (*a.area < *b.area || (*a.area == *b.area && a.cv_accuracy > b.cv_accuracy)) best = i;
  }
  return best;
}

inline NasTrial sample_nas_trial(const NasConfig& cfg, std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, index));
  NasTrial t;
  t.hidden_dim = static_cast<std::size_t>(rng.uniform_int(cfg.min_hidden, cfg.max_hidden));
  t.config.solver = cfg.solvers[rng.index(cfg.solvers.size())];
  t.config.learning_rate = cfg.learning_rates[rng.index(cfg.learning_rates.size())];
  t.config.epochs = cfg.epochs[rng.index(cfg.epochs.size())];
  t.config.batch_size = cfg.batch_sizes[rng.index(cfg.batch_sizes.size())];
  t.config.l1_lambda = cfg.l1_lambda;
  t.config.seed = derive_seed(seed, 1000 + index);
  return t;
}

/// Random search over hidden width and training hyper-parameters scored by
/// k-fold CV accuracy; the pool near the best accuracy is retrained on the
/// full split and the model with the smallest estimated area is returned.
inline NasResult nas_search(const Dataset& train_set, const NasConfig& cfg, const AreaCallback& estimate_area,
                            std::uint64_t seed) {
  if (cfg.budget < 1) throw InputError("nas: budget must be at least 1");
  NasResult res;
  res.trials.resize(cfg.budget);
  for (std::size_t i = 0; i < cfg.budget; ++i) res.trials[i] = sample_nas_trial(cfg, seed, i);

  const std::size_t k = std::min(cfg.folds, train_set.rows());
  const auto folds = kfold(train_set, k, derive_seed(seed, 0xF01D));
  const std::size_t outputs = static_cast<std::size_t>(train_set.n_classes);

  parallel_for(cfg.budget, cfg.threads, [&](std::size_t i) {
    auto& t = res.trials[i];
    double sum = 0.0;
    try {
      for (const auto& f : folds) {
        auto m = train(f.train, {train_set.cols(), t.hidden_dim, outputs}, t.config);
        sum += accuracy(m, f.validation);
      }
      t.cv_accuracy = sum / static_cast<double>(folds.size());
    } catch (const TrainingError&) {
      t.failed = true;
    }
  });

  auto pool = nas_pool(res.trials, cfg.tolerance);
  if (pool.empty()) throw TrainingError("nas: every candidate diverged");

  std::vector<std::optional<MLPModel>> models(res.trials.size());
  for (std::size_t i : pool) {
    auto& t = res.trials[i];
    try {
      models[i] = train(train_set, {train_set.cols(), t.hidden_dim, outputs}, t.config);
      t.area = estimate_area(*models[i]);
    } catch (const TrainingError&) {
      t.failed = true;
    }
  }
  std::erase_if(pool, [&](std::size_t i) { return res.trials[i].failed; });
  if (pool.empty()) throw TrainingError("nas: every pooled candidate diverged on the full split");
  res.winner = select_min_area(res.trials, pool);
  res.model = std::move(*models[res.winner]);
  return res;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

template <class T>
nlohmann::json matrix_to_json(const Matrix<T>& m) {
  auto j = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) j.push_back(std::vector<T>(m.row(r).begin(), m.row(r).end()));
  return j;
}

template <class T>
Matrix<T> matrix_from_json(const nlohmann::json& j, std::size_t cols_if_empty = 0) {
  Matrix<T> m(0, cols_if_empty);
  for (const auto& row : j) {
    auto v = row.get<std::vector<T>>();
    m.append_row(v);
  }
  return m;
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"solver", to_string(c.solver)}, {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
       {"batch_size", c.batch_size},    {"l1_lambda", c.l1_lambda},         {"seed", c.seed},
       {"momentum", c.momentum}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.solver = solver_from_string(j.at("solver").get<std::string>());
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.l1_lambda = j.at("l1_lambda").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.momentum = j.value("momentum", 0.9);
}

inline void to_json(nlohmann::json& j, const MLPModel& m) {
  j = {{"input_dim", m.input_dim}, {"hidden_dim", m.hidden_dim}, {"output_dim", m.output_dim}};
  j["layers"] = nlohmann::json::array();
  for (const auto& l : m.layers)
    j["layers"].push_back({{"weights", matrix_to_json(l.weights)}, {"biases", l.biases}});
  j["trained_with"] = m.trained_with;
}

inline void from_json(const nlohmann::json& j, MLPModel& m) {
  m.input_dim = j.at("input_dim").get<std::size_t>();
  m.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  m.output_dim = j.at("output_dim").get<std::size_t>();
  const auto& layers = j.at("layers");
  if (layers.size() != 2) throw InputError("model JSON: expected two layers");
  const std::array<std::size_t, 2> cols{m.input_dim, m.hidden_dim};
  for (std::size_t l = 0; l < 2; ++l) {
    m.layers[l].weights = matrix_from_json<double>(layers[l].at("weights"), cols[l]);
    m.layers[l].biases = layers[l].at("biases").get<std::vector<double>>();
  }
  if (j.contains("trained_with")) m.trained_with = j.at("trained_with").get<TrainConfig>();
  m.validate();
}

}  // namespace printmlp

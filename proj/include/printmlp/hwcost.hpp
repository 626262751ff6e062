#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "printmlp/common.hpp"
#include "printmlp/quant.hpp"

namespace printmlp {

// ---------------------------------------------------------------------------
// Gate library
// ---------------------------------------------------------------------------

enum class Gate { INV, AND2, OR2, XOR2, HA, FA };
inline constexpr std::array<const char*, 6> kGateNames{"INV", "AND2", "OR2", "XOR2", "HA", "FA"};

/// Area (abstract units) and nominal delay (seconds) per gate, plus the
/// supply-voltage delay scaling table. The defaults are a stand-in
/// configuration, not characterised silicon.
struct GateLibrary {
  std::array<double, 6> area{1.0, 2.0, 2.0, 3.0, 5.0, 9.0};
  std::array<double, 6> delay{0.04e-3, 0.08e-3, 0.08e-3, 0.12e-3, 0.15e-3, 0.25e-3};
  /// (volts, delay multiplier), ascending in voltage
  std::vector<std::pair<double, double>> voltage_delay{{0.6, 3.0}, {0.8, 1.6}, {1.0, 1.0}};

  double a(Gate g) const { return area[static_cast<int>(g)]; }
  double d(Gate g) const { return delay[static_cast<int>(g)]; }

  double min_voltage() const { return voltage_delay.front().first; }
  double max_voltage() const { return voltage_delay.back().first; }

  void validate() const {
    for (std::size_t g = 0; g < 6; ++g)
      if (!(area[g] > 0.0) || !(delay[g] > 0.0))
        throw InputError(std::string("gate library: area and delay of ") + kGateNames[g] + " must be positive");
    if (voltage_delay.size() < 2) throw InputError("gate library: voltage table needs at least two rows");
    for (std::size_t k = 1; k < voltage_delay.size(); ++k)
      if (!(voltage_delay[k].first > voltage_delay[k - 1].first) ||
          !(voltage_delay[k].second < voltage_delay[k - 1].second))
        throw InputError("gate library: voltage table must be ascending in voltage, descending in delay scale");
    for (const auto& [v, s] : voltage_delay)
      if (!(s > 0.0)) throw InputError("gate library: delay scale must be positive");
    auto has = [&](double v) {
      return std::any_of(voltage_delay.begin(), voltage_delay.end(),
                         [&](const auto& row) { return std::abs(row.first - v) < 1e-9; });
    };
    if (!has(0.6) || !has(1.0)) throw InputError("gate library: voltage table must contain 0.6 V and 1.0 V");
  }

  /// Linear interpolation of the delay multiplier.
  double delay_scale(double volts) const {
    if (volts < min_voltage() - 1e-9 || volts > max_voltage() + 1e-9)
      throw InputError("voltage " + std::to_string(volts) + " V is outside the library table");
    for (std::size_t k = 1; k < voltage_delay.size(); ++k) {
      const auto [v0, s0] = voltage_delay[k - 1];
      const auto [v1, s1] = voltage_delay[k];
      if (volts <= v1 + 1e-12) {
        const double t = std::clamp((volts - v0) / (v1 - v0), 0.0, 1.0);
        return s0 + t * (s1 - s0);
      }
    }
    return voltage_delay.back().second;
  }

  bool operator==(const GateLibrary&) const = default;
};

inline void to_json(nlohmann::json& j, const GateLibrary& lib) {
  nlohmann::json area, delay;
  for (std::size_t g = 0; g < 6; ++g) {
    area[kGateNames[g]] = lib.area[g];
    delay[kGateNames[g]] = lib.delay[g];
  }
  j = {{"area", area}, {"delay", delay}, {"voltage_delay", lib.voltage_delay}};
}

inline void from_json(const nlohmann::json& j, GateLibrary& lib) {
  GateLibrary def;
  lib = def;
  for (std::size_t g = 0; g < 6; ++g) {
    if (j.contains("area")) lib.area[g] = j["area"].value(kGateNames[g], def.area[g]);
    if (j.contains("delay")) lib.delay[g] = j["delay"].value(kGateNames[g], def.delay[g]);
  }
  if (j.contains("voltage_delay"))
    lib.voltage_delay = j.at("voltage_delay").get<std::vector<std::pair<double, double>>>();
}

inline GateLibrary load_gate_library(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open gate library '" + path + "'");
  GateLibrary lib;
  try {
    lib = nlohmann::json::parse(in).get<GateLibrary>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("gate library '" + path + "': " + e.what());
  }
  lib.validate();
  return lib;
}

inline std::uint64_t library_hash(const GateLibrary& lib) { return fnv1a(nlohmann::json(lib).dump()); }

// ---------------------------------------------------------------------------
// Constant multipliers
// ---------------------------------------------------------------------------

struct SignedDigit {
  int position = 0;
  int sign = 1;  // +1 or -1

  bool operator==(const SignedDigit&) const = default;
};

/// Canonical signed-digit (non-adjacent) form, ascending positions.
inline std::vector<SignedDigit> csd(std::uint64_t w) {
  std::vector<SignedDigit> out;
  for (int pos = 0; w != 0; ++pos, w >>= 1) {
    if (w & 1) {
      const int d = (w & 3) == 3 ? -1 : 1;
      out.push_back({pos, d});
      w = d > 0 ? w - 1 : w + 1;
    }
  }
  return out;
}

/// Plain binary digits, ascending positions.
inline std::vector<SignedDigit> binary_digits(std::uint64_t w) {
  std::vector<SignedDigit> out;
  for (int pos = 0; w != 0; ++pos, w >>= 1)
    if (w & 1) out.push_back({pos, 1});
  return out;
}

inline std::int64_t digits_value(std::span<const SignedDigit> digits) {
  std::int64_t v = 0;
  for (const auto& d : digits) v += d.sign * (std::int64_t{1} << d.position);
  return v;
}

/// One two-operand stage per digit after the first, chained in digit order.
/// Stage k adds (or subtracts, when the sign flips relative to the running
/// partial) x << pos_k on a (z + pos_k)-bit adder.
struct ShiftAddStage {
  int width = 0;
  bool subtract = false;
};

inline std::vector<ShiftAddStage> shift_add_stages(std::span<const SignedDigit> digits, int z) {
  std::vector<ShiftAddStage> stages;
  for (std::size_t k = 1; k < digits.size(); ++k)
    stages.push_back({z + digits[k].position, digits[k].sign != digits[k - 1].sign});
  return stages;
}

inline double shift_add_area(std::span<const SignedDigit> digits, int z, const GateLibrary& lib) {
  double a = 0.0;
  for (const auto& s : shift_add_stages(digits, z))
    a += s.width * (lib.a(Gate::FA) + (s.subtract ? lib.a(Gate::INV) : 0.0));
  return a;
}

inline double shift_add_delay(std::span<const SignedDigit> digits, int z, const GateLibrary& lib) {
  double d = 0.0;
  for (const auto& s : shift_add_stages(digits, z)) d += s.width * lib.d(Gate::FA) + (s.subtract ? lib.d(Gate::INV) : 0.0);
  return d;
}

/// The cheaper of the binary and CSD shift-add networks (binary on ties).
struct MultiplierPlan {
  std::vector<SignedDigit> digits;
  double area = 0.0;
  double delay = 0.0;  // nominal voltage
};

inline MultiplierPlan multiplier_plan(std::uint64_t w_abs, int z, const GateLibrary& lib) {
  if (z < 1) throw InputError("multiplier: input width must be at least 1");
  auto bin = binary_digits(w_abs);
  auto sd = csd(w_abs);
  const double a_bin = shift_add_area(bin, z, lib);
  const double a_sd = shift_add_area(sd, z, lib);
  if (a_sd < a_bin) return {sd, a_sd, shift_add_delay(sd, z, lib)};
  return {bin, a_bin, shift_add_delay(bin, z, lib)};
}

inline double multiplier_oracle(std::uint64_t w_abs, int z, const GateLibrary& lib) {
  return multiplier_plan(w_abs, z, lib).area;
}

inline int product_width(std::uint64_t w_abs, int z) {
  return bit_length(((std::uint64_t{1} << z) - 1) * w_abs);
}

inline constexpr std::uint64_t kMaxWeightMagnitude = 128;

struct MultiplierCostTable {
  std::vector<int> z_set;
  std::map<int, std::vector<double>> table;  // z -> area for w in [0, 128]

  double lookup(int z, std::uint64_t w_abs) const {
    auto it = table.find(z);
    if (it == table.end()) throw InputError("multiplier LUT has no entry for " + std::to_string(z) + "-bit inputs");
    if (w_abs > kMaxWeightMagnitude) throw InputError("multiplier LUT: |w| above 128");
    return it->second[w_abs];
  }

  std::size_t entries() const {
    std::size_t n = 0;
    for (const auto& [z, row] : table) n += row.size();
    return n;
  }

  bool operator==(const MultiplierCostTable&) const = default;
};

inline MultiplierCostTable build_multiplier_lut(const GateLibrary& lib, std::vector<int> z_set = {1, 2, 3, 4}) {
  MultiplierCostTable t;
  std::sort(z_set.begin(), z_set.end());
  z_set.erase(std::unique(z_set.begin(), z_set.end()), z_set.end());
  t.z_set = z_set;
  for (int z : z_set) {
    auto& row = t.table[z];
    row.resize(kMaxWeightMagnitude + 1);
    for (std::uint64_t w = 0; w <= kMaxWeightMagnitude; ++w) row[w] = multiplier_oracle(w, z, lib);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Accumulators
// ---------------------------------------------------------------------------

/// Adder tree over width-sorted summands, paired level by level. Each adder
/// of operand widths a, b costs min(a,b) FA + |a-b| HA and yields max(a,b)+1
/// bits. Zero-width summands are skipped.
inline double accumulator_oracle(std::span<const int> product_widths, int bias_width, const GateLibrary& lib) {
  std::vector<int> w;
  for (int x : product_widths)
    if (x > 0) w.push_back(x);
  if (bias_width > 0) w.push_back(bias_width);
  double area = 0.0;
  while (w.size() > 1) {
    std::sort(w.begin(), w.end());
    std::vector<int> next;
    for (std::size_t k = 0; k + 1 < w.size(); k += 2) {
      const int lo = w[k], hi = w[k + 1];
      area += lo * lib.a(Gate::FA) + (hi - lo) * lib.a(Gate::HA);
      next.push_back(hi + 1);
    }
    if (w.size() % 2) next.push_back(w.back());
    w = std::move(next);
  }
  return area;
}

/// Regression features of one neuron: (summand count, total summand bits,
/// widest summand). The bias counts as a summand.
using AccFeatures = std::array<double, 3>;

inline AccFeatures accumulator_features(std::span<const int> product_widths, int bias_width = 0) {
  AccFeatures f{0.0, 0.0, 0.0};
  auto add = [&](int w) {
    if (w <= 0) return;
    f[0] += 1.0;
    f[1] += w;
    f[2] = std::max(f[2], static_cast<double>(w));
  };
  for (int w : product_widths) add(w);
  add(bias_width);
  return f;
}

struct AccumulatorRegressor {
  int z = 0;
  /// intercept, count, total bits, max bits
  std::array<double, 4> coef{0.0, 0.0, 0.0, 0.0};
  std::size_t n_samples = 0;
  double r2 = 0.0;
  bool mean_fallback = false;

  double predict(const AccFeatures& f) const {
    return std::max(0.0, coef[0] + coef[1] * f[0] + coef[2] * f[1] + coef[3] * f[2]);
  }

  bool operator==(const AccumulatorRegressor&) const = default;
};

/// Ordinary least squares with an intercept; a rank-deficient design falls
/// back to the mean predictor.
inline AccumulatorRegressor fit_ols(std::span<const AccFeatures> x, std::span<const double> y, int z = 0) {
  AccumulatorRegressor r;
  r.z = z;
  r.n_samples = x.size();
  if (x.empty()) return r;
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = 1.0;
    for (int k = 0; k < 3; ++k) a(i, k + 1) = x[i][k];
    b(i) = y[i];
  }
  const double mean = b.mean();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 4) {
    r.mean_fallback = true;
    r.coef = {mean, 0.0, 0.0, 0.0};
  } else {
    Eigen::VectorXd c = qr.solve(b);
    for (int k = 0; k < 4; ++k) r.coef[k] = c(k);
  }
  double ss_res = 0.0, ss_tot = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double pred = r.coef[0];
    for (int k = 0; k < 3; ++k) pred += r.coef[k + 1] * x[i][k];
    ss_res += (b(i) - pred) * (b(i) - pred);
    ss_tot += (b(i) - mean) * (b(i) - mean);
  }
  r.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res < 1e-18 ? 1.0 : 0.0);
  return r;
}

/// One synthetic neuron for the accumulator regression.
struct AccSample {
  std::vector<int> product_widths;
  int bias_width = 0;
  double area = 0.0;
};

/// Random neuron: 1-16 weights whose codes have a uniformly drawn bit-width
/// in [0, 8] and a random sign; bias of a uniformly drawn width in [0, 8].
inline AccSample sample_accumulator(int z, Rng& rng, const GateLibrary& lib) {
  AccSample s;
  const auto len = rng.uniform_int(1, 16);
  for (std::int64_t k = 0; k < len; ++k) {
    const auto bits = rng.uniform_int(0, 8);
    std::uint64_t mag = 0;
    if (bits > 0) {
      const std::int64_t lo = std::int64_t{1} << (bits - 1);
      mag = static_cast<std::uint64_t>(std::min<std::int64_t>(rng.uniform_int(lo, 2 * lo - 1), kMaxWeightMagnitude));
    }
    rng.bernoulli(0.5);  // sign: irrelevant to widths, drawn to keep the stream layout fixed
    s.product_widths.push_back(mag ? product_width(mag, z) : 0);
  }
  s.bias_width = static_cast<int>(rng.uniform_int(0, 8));
  s.area = accumulator_oracle(s.product_widths, s.bias_width, lib);
  return s;
}

inline AccumulatorRegressor fit_accumulator_lr(int z, const GateLibrary& lib, std::size_t n_samples = 100,
                                               std::uint64_t seed = 0) {
  if (n_samples < 10) throw InputError("accumulator regression needs at least 10 samples");
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(z)));
  std::vector<AccFeatures> x;
  std::vector<double> y;
  for (std::size_t k = 0; k < n_samples; ++k) {
    auto s = sample_accumulator(z, rng, lib);
    x.push_back(accumulator_features(s.product_widths, s.bias_width));
    y.push_back(s.area);
  }
  return fit_ols(x, y, z);
}

// ---------------------------------------------------------------------------
// QRelu
// ---------------------------------------------------------------------------

/// Closed form: one sign inverter, one AND per output bit, and an OR tree
/// over the magnitude bits above the output range.
inline double qrelu_area(int I_i, int /*F_i*/, int I_r, int F_r, const GateLibrary& lib) {
  return lib.a(Gate::INV) + (I_r + F_r) * lib.a(Gate::AND2) + std::max(I_i - I_r - 1, 0) * lib.a(Gate::OR2);
}

struct GateCount {
  std::array<int, 6> count{};
  double area(const GateLibrary& lib) const {
    double a = 0.0;
    for (std::size_t g = 0; g < 6; ++g) a += count[g] * lib.area[g];
    return a;
  }
};

/// Gate-by-gate construction of the QRelu for a signed Q(I_i).(F_i) input
/// and UQ(I_r).(F_r) output: an inverter on the sign, an AND gating each
/// kept bit with it, and a balanced OR reduction of the overflow bits.
inline GateCount qrelu_gates(int I_i, int F_i, int I_r, int F_r) {
  GateCount g;
  ++g.count[static_cast<int>(Gate::INV)];  // ~sign
  // output bit p = input bit (p + F_i - F_r) & ~sign
  for (int p = 0; p < I_r + F_r; ++p) ++g.count[static_cast<int>(Gate::AND2)];
  std::vector<int> level;
  for (int bit = F_i + I_r; bit < F_i + I_i; ++bit) level.push_back(bit);
  while (level.size() > 1) {
    std::vector<int> next;
    for (std::size_t k = 0; k + 1 < level.size(); k += 2) {
      ++g.count[static_cast<int>(Gate::OR2)];
      next.push_back(level[k]);
    }
    if (level.size() % 2) next.push_back(level.back());
    level = std::move(next);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Network area
// ---------------------------------------------------------------------------

struct NeuronArea {
  std::size_t layer = 0;
  std::size_t index = 0;
  double multipliers = 0.0;
  double accumulator = 0.0;
  double qrelu = 0.0;
  double total() const { return multipliers + accumulator + qrelu; }
};

struct AreaReport {
  std::vector<NeuronArea> neurons;
  double multipliers = 0.0;
  double accumulators = 0.0;
  double qrelus = 0.0;
  double total = 0.0;
  std::array<std::size_t, 2> shared_multipliers{0, 0};
};

/// Bit-width of the product / bias summands feeding each neuron's adder tree.
inline int layer_input_bits(const QuantizedMLP& q, std::size_t l) { return q.layer_input_format(l).total_bits; }

/// Walk the network the way the circuit is built: per column, only the first
/// occurrence of each |code| instantiates a multiplier.
template <class MulCost, class AccCost>
AreaReport network_area(const QuantizedMLP& q, const GateLibrary& lib, MulCost&& mul_cost, AccCost&& acc_cost) {
  AreaReport rep;
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& W = q.layers[l].weights;
    const int z = layer_input_bits(q, l);
    std::vector<std::vector<std::int64_t>> seen(W.cols());
    for (std::size_t n = 0; n < W.rows(); ++n) {
      NeuronArea na;
      na.layer = l;
      na.index = n;
      std::vector<int> widths;
      for (std::size_t c = 0; c < W.cols(); ++c) {
        const std::int64_t v = W(n, c);
        if (v == 0) continue;
        const std::uint64_t a = static_cast<std::uint64_t>(v < 0 ? -v : v);
        widths.push_back(product_width(a, z));
        auto& s = seen[c];
        if (std::find(s.begin(), s.end(), static_cast<std::int64_t>(a)) == s.end()) {
          s.push_back(static_cast<std::int64_t>(a));
          na.multipliers += mul_cost(z, a);
          ++rep.shared_multipliers[l];
        }
      }
      const std::int64_t b = q.layers[l].biases[n];
      na.accumulator = acc_cost(z, widths, bit_length(static_cast<std::uint64_t>(b < 0 ? -b : b)));
      if (l == 0) {
        const auto in = q.accumulator_format(0, n);
        na.qrelu = qrelu_area(in.integer_bits, in.frac_bits(), q.genes.activation.integer_bits,
                              q.genes.activation.frac_bits(), lib);
      }
      rep.multipliers += na.multipliers;
      rep.accumulators += na.accumulator;
      rep.qrelus += na.qrelu;
      rep.neurons.push_back(na);
    }
  }
  rep.total = rep.multipliers + rep.accumulators + rep.qrelus;
  return rep;
}

/// Everything the fast estimator needs, built once per gate library.
struct AreaEstimator {
  GateLibrary lib;
  MultiplierCostTable lut;
  std::map<int, AccumulatorRegressor> lr;
  std::size_t lr_samples = 100;
  std::uint64_t lr_seed = 0;

  std::uint64_t key() const {
    return fnv1a(nlohmann::json(lib).dump() + "|" + std::to_string(lr_samples) + "|" + std::to_string(lr_seed) + "|" +
                 nlohmann::json(lut.z_set).dump());
  }
};

inline std::vector<int> default_estimator_z_set() { return {1, 2, 3, 4, 5, 6, 7, 8}; }

inline AreaEstimator build_estimator(const GateLibrary& lib, std::vector<int> z_set = default_estimator_z_set(),
                                     std::size_t lr_samples = 100, std::uint64_t seed = 0) {
  lib.validate();
  AreaEstimator e;
  e.lib = lib;
  e.lut = build_multiplier_lut(lib, z_set);
  e.lr_samples = lr_samples;
  e.lr_seed = seed;
  for (int z : e.lut.z_set) e.lr[z] = fit_accumulator_lr(z, lib, lr_samples, seed);
  return e;
}

/// Fast estimate: multiplier LUT + accumulator regression + QRelu closed form.
inline AreaReport estimate_area(const QuantizedMLP& q, const AreaEstimator& e) {
  return network_area(
      q, e.lib, [&](int z, std::uint64_t a) { return e.lut.lookup(z, a); },
      [&](int z, const std::vector<int>& widths, int bias_width) {
        auto it = e.lr.find(z);
        if (it == e.lr.end()) throw InputError("no accumulator regression for " + std::to_string(z) + "-bit inputs");
        return it->second.predict(accumulator_features(widths, bias_width));
      });
}

/// Reference area: multiplier and accumulator oracles + QRelu closed form.
inline AreaReport oracle_area(const QuantizedMLP& q, const GateLibrary& lib) {
  return network_area(
      q, lib, [&](int z, std::uint64_t a) { return multiplier_oracle(a, z, lib); },
      [&](int, const std::vector<int>& widths, int bias_width) { return accumulator_oracle(widths, bias_width, lib); });
}

// ---------------------------------------------------------------------------
// Delay and voltage
// ---------------------------------------------------------------------------

inline int ceil_log2(std::size_t n) { return n <= 1 ? 0 : bit_length(n - 1); }

/// Nominal-voltage delay of one neuron: slowest multiplier chain, then the
/// adder tree (depth levels of ripple adders), then the QRelu for hidden
/// neurons. A neuron without kept weights contributes nothing.
inline double neuron_delay(const QuantizedMLP& q, std::size_t l, std::size_t n, const GateLibrary& lib) {
  const auto& W = q.layers[l].weights;
  const int z = layer_input_bits(q, l);
  double mul = 0.0;
  int maxw = 0;
  std::size_t summands = 0;
  for (std::size_t c = 0; c < W.cols(); ++c) {
    const std::int64_t v = W(n, c);
    if (v == 0) continue;
    const std::uint64_t a = static_cast<std::uint64_t>(v < 0 ? -v : v);
    mul = std::max(mul, multiplier_plan(a, z, lib).delay);
    maxw = std::max(maxw, product_width(a, z));
    ++summands;
  }
  if (summands == 0) return 0.0;
  const std::int64_t b = q.layers[l].biases[n];
  if (b != 0) {
    ++summands;
    maxw = std::max(maxw, bit_length(static_cast<std::uint64_t>(b < 0 ? -b : b)));
  }
  const int depth = ceil_log2(summands);
  double d = mul + depth * (maxw + depth) * lib.d(Gate::FA);
  if (l == 0) {
    const auto in = q.accumulator_format(0, n);
    const int high = std::max(in.integer_bits - q.genes.activation.integer_bits, 1);
    d += lib.d(Gate::INV) + lib.d(Gate::AND2) + ceil_log2(static_cast<std::size_t>(high)) * lib.d(Gate::OR2);
  }
  return d;
}

/// Critical path in seconds at `volts`: slowest hidden neuron followed by
/// the slowest output neuron.
inline double critical_path_delay(const QuantizedMLP& q, const GateLibrary& lib, double volts) {
  const double scale = lib.delay_scale(volts);
  std::array<double, 2> worst{0.0, 0.0};
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t n = 0; n < q.layers[l].weights.rows(); ++n) worst[l] = std::max(worst[l], neuron_delay(q, l, n, lib));
  return (worst[0] + worst[1]) * scale;
}

/// Lowest supply voltage on a 10 mV grid that meets the delay constraint.
inline double min_voltage(const QuantizedMLP& q, const GateLibrary& lib, double delay_constraint) {
  const double vmin = lib.min_voltage(), vmax = lib.max_voltage();
  const int steps = static_cast<int>(std::lround((vmax - vmin) / 0.01));
  auto volts = [&](int k) { return k == steps ? vmax : vmin + 0.01 * k; };
  auto ok = [&](int k) { return critical_path_delay(q, lib, volts(k)) <= delay_constraint; };
  if (!ok(steps))
    throw InfeasibleError("delay constraint of " + std::to_string(delay_constraint * 1e3) +
                          " ms cannot be met; the best achievable delay is " +
                          std::to_string(critical_path_delay(q, lib, vmax) * 1e3) + " ms at " + std::to_string(vmax) +
                          " V");
  int lo = 0, hi = steps;  // invariant: ok(hi)
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (ok(mid))
      hi = mid;
    else
      lo = mid + 1;
  }
  return std::round(volts(lo) * 100.0) / 100.0;
}

// ---------------------------------------------------------------------------
// JSON and caching
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const NeuronArea& n) {
  j = {{"layer", n.layer},     {"index", n.index}, {"multipliers", n.multipliers}, {"accumulator", n.accumulator},
       {"qrelu", n.qrelu}, {"total", n.total()}};
}

inline void to_json(nlohmann::json& j, const AreaReport& r) {
  j = {{"total", r.total},
       {"multipliers", r.multipliers},
       {"accumulators", r.accumulators},
       {"qrelus", r.qrelus},
       {"shared_multipliers", r.shared_multipliers},
       {"neurons", r.neurons}};
}

inline void to_json(nlohmann::json& j, const AccumulatorRegressor& r) {
  j = {{"z", r.z}, {"coef", r.coef}, {"n_samples", r.n_samples}, {"r2", r.r2}, {"mean_fallback", r.mean_fallback}};
}

inline void from_json(const nlohmann::json& j, AccumulatorRegressor& r) {
  r.z = j.at("z").get<int>();
  r.coef = j.at("coef").get<std::array<double, 4>>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.r2 = j.at("r2").get<double>();
  r.mean_fallback = j.at("mean_fallback").get<bool>();
}

inline nlohmann::json estimator_to_json(const AreaEstimator& e) {
  nlohmann::json j;
  j["key"] = std::to_string(e.key());
  j["library"] = e.lib;
  j["lr_samples"] = e.lr_samples;
  j["lr_seed"] = e.lr_seed;
  j["z_set"] = e.lut.z_set;
  for (const auto& [z, row] : e.lut.table) j["lut"][std::to_string(z)] = row;
  for (const auto& [z, r] : e.lr) j["lr"][std::to_string(z)] = r;
  return j;
}

inline AreaEstimator estimator_from_json(const nlohmann::json& j) {
  AreaEstimator e;
  e.lib = j.at("library").get<GateLibrary>();
  e.lr_samples = j.at("lr_samples").get<std::size_t>();
  e.lr_seed = j.at("lr_seed").get<std::uint64_t>();
  e.lut.z_set = j.at("z_set").get<std::vector<int>>();
  for (int z : e.lut.z_set) {
    e.lut.table[z] = j.at("lut").at(std::to_string(z)).get<std::vector<double>>();
    e.lr[z] = j.at("lr").at(std::to_string(z)).get<AccumulatorRegressor>();
  }
  return e;
}

/// Reuse the estimator stored at `cache_path` when it was built from the
/// same library and settings; rebuild and rewrite it otherwise.
inline AreaEstimator load_or_build_estimator(const std::string& cache_path, const GateLibrary& lib,
                                             std::vector<int> z_set = default_estimator_z_set(),
                                             std::size_t lr_samples = 100, std::uint64_t seed = 0) {
  AreaEstimator want;
  want.lib = lib;
  want.lr_samples = lr_samples;
  want.lr_seed = seed;
  want.lut.z_set = z_set;
  std::sort(want.lut.z_set.begin(), want.lut.z_set.end());
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
    try {
      std::ifstream in(cache_path);
      auto j = nlohmann::json::parse(in);
      if (j.at("key").get<std::string>() == std::to_string(want.key())) return estimator_from_json(j);
    } catch (const std::exception&) {
      // stale or corrupt cache: rebuild
    }
  }
  auto e = build_estimator(lib, z_set, lr_samples, seed);
  if (!cache_path.empty()) {
    std::ofstream out(cache_path);
    out << estimator_to_json(e).dump(1) << "\n";
  }
  return e;
}

}  // namespace printmlp

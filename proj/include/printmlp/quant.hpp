#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "printmlp/common.hpp"
#include "printmlp/dataio.hpp"
#include "printmlp/model.hpp"

namespace printmlp {

/// Binary fixed-point format.
///
/// Signed Q(I).(F): P = I + F + 1 bits, range [-2^I, 2^I - 2^-F].
/// Unsigned UQ(I).(F): P = I + F bits, range [0, 2^I - 2^-F].
/// Internal accumulator formats may carry a negative I; gene formats may not.
struct FixedPointFormat {
  int total_bits = 8;
  int integer_bits = 0;
  bool is_signed = true;

  static FixedPointFormat signed_q(int integer, int frac) { return {integer + frac + 1, integer, true}; }
  static FixedPointFormat unsigned_q(int integer, int frac) { return {integer + frac, integer, false}; }

  int frac_bits() const { return total_bits - integer_bits - (is_signed ? 1 : 0); }
  std::int64_t min_code() const { return is_signed ? -(std::int64_t{1} << (total_bits - 1)) : 0; }
  std::int64_t max_code() const {
    return is_signed ? (std::int64_t{1} << (total_bits - 1)) - 1 : (std::int64_t{1} << total_bits) - 1;
  }
  double value(std::int64_t code) const { return std::ldexp(static_cast<double>(code), -frac_bits()); }
  double step() const { return std::ldexp(1.0, -frac_bits()); }
  double min_value() const { return value(min_code()); }
  double max_value() const { return value(max_code()); }

  bool valid() const { return total_bits >= 1 && total_bits <= 62 && frac_bits() >= 0; }

  std::string name() const {
    return (is_signed ? "Q" : "UQ") + std::to_string(integer_bits) + "." + std::to_string(frac_bits());
  }

  bool operator==(const FixedPointFormat&) const = default;
  auto operator<=>(const FixedPointFormat&) const = default;
};

enum class Rounding { stochastic, nearest, truncate };

struct QuantizedValue {
  std::int64_t code = 0;
  double value = 0.0;
};

/// Quantize onto the format grid and saturate to its range. Stochastic mode
/// rounds up with probability equal to the fractional remainder and always
/// consumes exactly one draw from `rng`.
inline QuantizedValue quantize_value(double x, const FixedPointFormat& fmt, Rounding mode, Rng& rng) {
  const double scaled = std::ldexp(x, fmt.frac_bits());
  double fl = std::floor(scaled);
  switch (mode) {
    case Rounding::truncate:
      break;
    case Rounding::nearest:
      fl = std::floor(scaled + 0.5);
      break;
    case Rounding::stochastic:
      if (rng.uniform() < scaled - fl) fl += 1.0;
      break;
  }
  std::int64_t code;
  if (!(fl >= static_cast<double>(fmt.min_code())))
    code = fmt.min_code();
  else if (fl > static_cast<double>(fmt.max_code()))
    code = fmt.max_code();
  else
    code = static_cast<std::int64_t>(fl);
  return {code, fmt.value(code)};
}

inline QuantizedValue quantize_value(double x, const FixedPointFormat& fmt, Rounding mode) {
  Rng unused(0);
  if (mode == Rounding::stochastic) throw std::invalid_argument("stochastic rounding needs an RNG");
  return quantize_value(x, fmt, mode, unused);
}

/// QRelu on an integer accumulator with `in_frac_bits` fractional bits:
/// negative -> 0; otherwise drop the low bits below the output grid and
/// saturate when any higher magnitude bit is set.
inline std::int64_t qrelu_code(std::int64_t acc, int in_frac_bits, const FixedPointFormat& out) {
  if (acc < 0) return 0;
  const int shift = in_frac_bits - out.frac_bits();
  const std::int64_t truncated = shift >= 0 ? (acc >> shift) : (acc << -shift);
  if ((truncated >> out.total_bits) != 0) return out.max_code();
  return truncated;
}

inline std::int64_t qrelu(std::int64_t acc, const FixedPointFormat& in, const FixedPointFormat& out) {
  if (!in.is_signed || out.is_signed) throw std::invalid_argument("qrelu: expects a signed input and an unsigned output");
  if (out.frac_bits() > in.frac_bits() || out.integer_bits > in.integer_bits)
    throw std::invalid_argument("qrelu: output format " + out.name() + " is wider than input " + in.name());
  return qrelu_code(acc, in.frac_bits(), out);
}

/// Quantization genes: weight (c), bias (b), hidden activation (r) and input
/// (i) formats plus the pruning level in tenths.
struct QuantGenes {
  FixedPointFormat weight{8, 0, true};
  FixedPointFormat bias{8, 0, true};
  FixedPointFormat activation{8, 0, false};
  FixedPointFormat input{4, 0, false};
  int sparsity_tenths = 0;

  double sparsity() const { return sparsity_tenths / 10.0; }

  void validate() const {
    auto check = [](const FixedPointFormat& f, bool is_signed, int max_bits, const char* what) {
      if (f.is_signed != is_signed || !f.valid() || f.integer_bits < 0 || f.total_bits > max_bits)
        throw InputError(std::string("invalid ") + what + " format " + f.name());
    };
    check(weight, true, 8, "weight");
    check(bias, true, 8, "bias");
    check(activation, false, 8, "activation");
    check(input, false, 4, "input");
    if (sparsity_tenths < 0 || sparsity_tenths > 5) throw InputError("sparsity must be one of 0.0..0.5");
  }

  std::string describe() const {
    return "c=" + weight.name() + " b=" + bias.name() + " r=" + activation.name() + " i=" + input.name() +
           " s=" + std::to_string(sparsity_tenths * 10) + "%";
  }

  bool operator==(const QuantGenes&) const = default;
};

/// Per-layer weight mask, 1 = kept.
using WeightMask = std::array<Matrix<std::uint8_t>, 2>;

inline WeightMask full_mask(const MLPModel& m) {
  return {Matrix<std::uint8_t>(m.hidden_dim, m.input_dim, 1), Matrix<std::uint8_t>(m.output_dim, m.hidden_dim, 1)};
}

struct QuantizedLayer {
  Matrix<std::int64_t> weights;  // codes in the weight format
  Matrix<std::uint8_t> mask;     // 1 = kept
  Matrix<int> cluster;           // -1 = not clustered
  std::vector<std::int64_t> biases;
  /// Declared two's-complement width of each neuron's accumulator.
  std::vector<int> acc_bits;
  /// Binary point of the accumulator grid shared by the layer.
  int acc_frac_bits = 0;

  bool operator==(const QuantizedLayer&) const = default;
};

/// Integer twin of a bespoke MLP circuit.
struct QuantizedMLP {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  QuantGenes genes;
  std::array<QuantizedLayer, 2> layers;
  ActivationProfile profile;

  const FixedPointFormat& layer_input_format(std::size_t l) const { return l == 0 ? genes.input : genes.activation; }

  int product_shift(std::size_t l) const {
    return layers[l].acc_frac_bits - layer_input_format(l).frac_bits() - genes.weight.frac_bits();
  }
  int bias_shift(std::size_t l) const { return layers[l].acc_frac_bits - genes.bias.frac_bits(); }

  /// Signed accumulator format of neuron n in layer l (integer bits may be negative).
  FixedPointFormat accumulator_format(std::size_t l, std::size_t n) const {
    const int w = layers[l].acc_bits[n];
    return {w, w - 1 - layers[l].acc_frac_bits, true};
  }

  bool operator==(const QuantizedMLP&) const = default;
};

/// Fractional bits of a layer's accumulator grid: wide enough for the
/// products and the bias, and for layer 0 at least the QRelu output grid.
inline int accumulator_frac_bits(const QuantGenes& g, std::size_t layer) {
  const FixedPointFormat& in = layer == 0 ? g.input : g.activation;
  int f = std::max(in.frac_bits() + g.weight.frac_bits(), g.bias.frac_bits());
  if (layer == 0) f = std::max(f, g.activation.frac_bits());
  return f;
}

/// Inputs are truncated onto the input grid (hardware-friendly).
inline std::vector<std::int64_t> quantize_inputs(std::span<const double> row, const FixedPointFormat& fmt) {
  std::vector<std::int64_t> codes(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) codes[k] = quantize_value(row[k], fmt, Rounding::truncate).code;
  return codes;
}

enum class OverflowPolicy {
  error,      // throw OverflowError when an accumulator leaves its width
  wrap,       // two's-complement wrap, as the emitted circuit does
  unbounded,  // ignore declared widths (used while profiling)
};

struct InferenceResult {
  int class_id = 0;
  std::array<std::vector<std::int64_t>, 2> accumulators;
  std::vector<std::int64_t> hidden_codes;
};

namespace detail {

inline std::int64_t neuron_accumulator(const QuantizedMLP& q, std::size_t l, std::size_t n,
                                       std::span<const std::int64_t> in, OverflowPolicy policy) {
  const auto& layer = q.layers[l];
  std::int64_t pos = 0, neg = 0;
  auto w = layer.weights.row(n);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] > 0)
      pos += in[k] * w[k];
    else if (w[k] < 0)
      neg += in[k] * -w[k];
  }
  const std::int64_t acc = (pos - neg) * (std::int64_t{1} << q.product_shift(l)) +
                           layer.biases[n] * (std::int64_t{1} << q.bias_shift(l));
  if (policy == OverflowPolicy::unbounded) return acc;
  const int width = layer.acc_bits[n];
  if (fits_signed(acc, width)) return acc;
  if (policy == OverflowPolicy::wrap) return wrap_signed(acc, width);
  throw OverflowError("accumulator of layer " + std::to_string(l) + " neuron " + std::to_string(n) + " holds " +
                      std::to_string(acc) + ", beyond its " + std::to_string(width) + "-bit width");
}

}  // namespace detail

/// Bit-exact integer inference: products of input and weight codes are
/// summed in a positive and a negative group, subtracted, aligned with the
/// bias on the accumulator grid; hidden neurons go through QRelu and the
/// class is the argmax of the output accumulators (lowest index on ties).
inline InferenceResult fixed_point_inference(const QuantizedMLP& q, std::span<const std::int64_t> input_codes,
                                             OverflowPolicy policy = OverflowPolicy::error) {
  if (input_codes.size() != q.input_dim) throw InputError("inference: input width mismatch");
  for (auto c : input_codes)
    if (c < q.genes.input.min_code() || c > q.genes.input.max_code())
      throw InputError("inference: input code outside format " + q.genes.input.name());
  InferenceResult res;
  res.accumulators[0].resize(q.hidden_dim);
  res.hidden_codes.resize(q.hidden_dim);
  for (std::size_t n = 0; n < q.hidden_dim; ++n) {
    const auto acc = detail::neuron_accumulator(q, 0, n, input_codes, policy);
    res.accumulators[0][n] = acc;
    res.hidden_codes[n] = qrelu_code(acc, q.layers[0].acc_frac_bits, q.genes.activation);
  }
  res.accumulators[1].resize(q.output_dim);
  for (std::size_t o = 0; o < q.output_dim; ++o)
    res.accumulators[1][o] = detail::neuron_accumulator(q, 1, o, res.hidden_codes, policy);
  res.class_id = static_cast<int>(argmax<std::int64_t>(res.accumulators[1]));
  return res;
}

inline int predict(const QuantizedMLP& q, std::span<const double> row, OverflowPolicy policy = OverflowPolicy::wrap) {
  auto codes = quantize_inputs(row, q.genes.input);
  return fixed_point_inference(q, codes, policy).class_id;
}

/// Accuracy of the integer circuit model; accumulators wrap like hardware.
inline double accuracy(const QuantizedMLP& q, const Dataset& d, OverflowPolicy policy = OverflowPolicy::wrap) {
  if (d.rows() == 0) throw InputError("empty evaluation set");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < d.rows(); ++r)
    if (predict(q, d.features.row(r), policy) == d.labels[r]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(d.rows());
}

/// Size every accumulator to the bare minimum seen on `rows` plus one guard
/// bit, and record the matching real-valued activation profile.
inline void size_accumulators(QuantizedMLP& q, const Dataset& rows) {
  if (rows.rows() == 0) throw InputError("accumulator sizing needs at least one profiling row");
  std::array<std::vector<std::uint64_t>, 2> max_abs{std::vector<std::uint64_t>(q.hidden_dim, 0),
                                                     std::vector<std::uint64_t>(q.output_dim, 0)};
  std::vector<std::int64_t> hidden_max(q.hidden_dim, 0);
  std::vector<std::int64_t> out_max(q.output_dim, std::numeric_limits<std::int64_t>::min());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto codes = quantize_inputs(rows.features.row(r), q.genes.input);
    auto res = fixed_point_inference(q, codes, OverflowPolicy::unbounded);
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t n = 0; n < res.accumulators[l].size(); ++n) {
        const auto a = res.accumulators[l][n];
        max_abs[l][n] = std::max(max_abs[l][n], static_cast<std::uint64_t>(a < 0 ? -a : a));
      }
    for (std::size_t n = 0; n < q.hidden_dim; ++n) hidden_max[n] = std::max(hidden_max[n], res.hidden_codes[n]);
    for (std::size_t o = 0; o < q.output_dim; ++o) out_max[o] = std::max(out_max[o], res.accumulators[1][o]);
  }
  for (std::size_t l = 0; l < 2; ++l) {
    auto& layer = q.layers[l];
    layer.acc_bits.resize(max_abs[l].size());
    q.profile.pre_max_abs[l].resize(max_abs[l].size());
    for (std::size_t n = 0; n < max_abs[l].size(); ++n) {
      layer.acc_bits[n] = signed_bits_for_magnitude(max_abs[l][n]) + 1;
      q.profile.pre_max_abs[l][n] = std::ldexp(static_cast<double>(max_abs[l][n]), -layer.acc_frac_bits);
    }
  }
  q.profile.post_max[0].resize(q.hidden_dim);
  for (std::size_t n = 0; n < q.hidden_dim; ++n) q.profile.post_max[0][n] = q.genes.activation.value(hidden_max[n]);
  q.profile.post_max[1].resize(q.output_dim);
  for (std::size_t o = 0; o < q.output_dim; ++o)
    q.profile.post_max[1][o] = std::ldexp(static_cast<double>(out_max[o]), -q.layers[1].acc_frac_bits);
}

/// Quantize a trained model. Free weights and all biases use one stochastic
/// rounding draw from `seed`; clustered weights (cluster id >= 0) use
/// nearest rounding so equal centroids stay equal; masked weights are 0.
/// Accumulators are sized by profiling `profile_rows` (the training split).
inline QuantizedMLP quantize_model(const MLPModel& m, const QuantGenes& genes, const WeightMask& mask,
                                   const Dataset& profile_rows, std::uint64_t seed,
                                   const std::array<Matrix<int>, 2>* cluster_ids = nullptr) {
  genes.validate();
  QuantizedMLP q;
  q.input_dim = m.input_dim;
  q.hidden_dim = m.hidden_dim;
  q.output_dim = m.output_dim;
  q.genes = genes;
  Rng rng(seed);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& W = m.layers[l].weights;
    auto& layer = q.layers[l];
    layer.weights = Matrix<std::int64_t>(W.rows(), W.cols(), 0);
    layer.mask = mask[l];
    layer.cluster = cluster_ids ? (*cluster_ids)[l] : Matrix<int>(W.rows(), W.cols(), -1);
    for (std::size_t r = 0; r < W.rows(); ++r)
      for (std::size_t c = 0; c < W.cols(); ++c) {
        const bool clustered = layer.cluster(r, c) >= 0;
        const auto qv = quantize_value(W(r, c), genes.weight, clustered ? Rounding::nearest : Rounding::stochastic, rng);
        layer.weights(r, c) = mask[l](r, c) ? qv.code : 0;
        if (!mask[l](r, c)) layer.cluster(r, c) = -1;
      }
    layer.biases.resize(m.layers[l].biases.size());
    for (std::size_t n = 0; n < layer.biases.size(); ++n)
      layer.biases[n] = quantize_value(m.layers[l].biases[n], genes.bias, Rounding::stochastic, rng).code;
    layer.acc_frac_bits = accumulator_frac_bits(genes, l);
  }
  size_accumulators(q, profile_rows);
  return q;
}

/// Smallest I >= 0 with 2^I >= v, capped at `cap`.
inline int integer_bits_for(double v, int cap) {
  int i = 0;
  while (i < cap && std::ldexp(1.0, i) < v) ++i;
  return i;
}

/// Reference precision of the un-minimized design: 8-bit weights, biases
/// and activations, 4-bit inputs, integer bits chosen from the value ranges.
inline QuantGenes reference_genes(const MLPModel& m, const Dataset& train) {
  double wmax = 0.0, bmax = 0.0;
  for (const auto& l : m.layers) {
    for (double w : l.weights.data()) wmax = std::max(wmax, std::abs(w));
    for (double b : l.biases) bmax = std::max(bmax, std::abs(b));
  }
  const auto prof = profile_activations(m, train);
  double hmax = 0.0;
  for (double h : prof.post_max[0]) hmax = std::max(hmax, h);
  QuantGenes g;
  g.weight = {8, integer_bits_for(wmax, 7), true};
  g.bias = {8, integer_bits_for(bmax, 7), true};
  g.activation = {8, integer_bits_for(hmax, 8), false};
  g.input = {4, 0, false};
  g.sparsity_tenths = 0;
  return g;
}

// ---------------------------------------------------------------------------
// Quantization-aware retraining
// ---------------------------------------------------------------------------

/// Fixed values for individual weights; NaN marks a free weight.
using FrozenWeights = std::array<Matrix<double>, 2>;

/// Forward pass on quantized weights, biases, inputs and QRelu activations;
/// straight-through gradients inside each format's range.
class QatPolicy {
 public:
  QatPolicy(const QuantGenes& genes, const WeightMask& mask, const FrozenWeights* frozen)
      : genes_(genes), mask_(mask) {
    if (frozen) frozen_ = *frozen;
  }

  Matrix<double> prepare_inputs(const Matrix<double>& x) const {
    Matrix<double> out = x;
    for (auto& v : out.data()) v = quantize_value(v, genes_.input, Rounding::truncate).value;
    return out;
  }

  void effective(const MLPModel& m, Rng& rng, EffectiveParams& eff) const {
    for (std::size_t l = 0; l < 2; ++l) {
      const auto& W = m.layers[l].weights;
      eff.weights[l] = Matrix<double>(W.rows(), W.cols());
      eff.weight_gate[l] = Matrix<double>(W.rows(), W.cols());
      for (std::size_t r = 0; r < W.rows(); ++r)
        for (std::size_t c = 0; c < W.cols(); ++c) {
          if (!mask_[l](r, c)) continue;
          if (is_frozen(l, r, c)) {
            eff.weights[l](r, c) = quantize_value(frozen_[l](r, c), genes_.weight, Rounding::nearest).value;
            continue;
          }
          const double w = W(r, c);
          eff.weights[l](r, c) = quantize_value(w, genes_.weight, Rounding::stochastic, rng).value;
          eff.weight_gate[l](r, c) = in_range(w, genes_.weight) ? 1.0 : 0.0;
        }
      const auto& b = m.layers[l].biases;
      eff.biases[l].resize(b.size());
      eff.bias_gate[l].resize(b.size());
      for (std::size_t n = 0; n < b.size(); ++n) {
        eff.biases[l][n] = quantize_value(b[n], genes_.bias, Rounding::stochastic, rng).value;
        eff.bias_gate[l][n] = in_range(b[n], genes_.bias) ? 1.0 : 0.0;
      }
    }
  }

  double activation(double z, double& grad) const {
    const double top = std::ldexp(1.0, genes_.activation.integer_bits);
    grad = (z > 0.0 && z < top) ? 1.0 : 0.0;
    if (z <= 0.0) return 0.0;
    const double t = std::ldexp(std::floor(std::ldexp(z, genes_.activation.frac_bits())), -genes_.activation.frac_bits());
    return std::min(t, genes_.activation.max_value());
  }

  bool trainable(std::size_t l, std::size_t r, std::size_t c) const { return mask_[l](r, c) && !is_frozen(l, r, c); }

  void constrain(MLPModel& m) const {
    for (std::size_t l = 0; l < 2; ++l) {
      auto& W = m.layers[l].weights;
      for (std::size_t r = 0; r < W.rows(); ++r)
        for (std::size_t c = 0; c < W.cols(); ++c) {
          if (!mask_[l](r, c))
            W(r, c) = 0.0;
          else if (is_frozen(l, r, c))
            W(r, c) = frozen_[l](r, c);
        }
    }
  }

 private:
  bool is_frozen(std::size_t l, std::size_t r, std::size_t c) const {
    return !frozen_[l].empty() && !std::isnan(frozen_[l](r, c));
  }
  static bool in_range(double v, const FixedPointFormat& f) {
    return v >= f.min_value() && v <= f.max_value() + f.step();
  }

  QuantGenes genes_;
  WeightMask mask_;
  FrozenWeights frozen_;
};

/// Quantization-aware retraining of a copy of `m`. Masked weights stay at
/// zero and frozen weights at their fixed values throughout.
inline MLPModel qat_retrain(const MLPModel& m, const Dataset& train_set, const QuantGenes& genes,
                            const TrainConfig& cfg, const WeightMask& mask, const FrozenWeights* frozen = nullptr) {
  genes.validate();
  MLPModel out = m;
  out.trained_with = cfg;
  QatPolicy policy(genes, mask, frozen);
  policy.constrain(out);
  Rng rng(derive_seed(cfg.seed, 2));
  fit(out, train_set, cfg, policy, rng);
  return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const FixedPointFormat& f) {
  j = {{"P", f.total_bits}, {"I", f.integer_bits}, {"signed", f.is_signed}};
}

inline void from_json(const nlohmann::json& j, FixedPointFormat& f) {
  f.total_bits = j.at("P").get<int>();
  f.integer_bits = j.at("I").get<int>();
  f.is_signed = j.at("signed").get<bool>();
}

inline void to_json(nlohmann::json& j, const QuantGenes& g) {
  j = {{"weight", g.weight}, {"bias", g.bias},       {"activation", g.activation},
       {"input", g.input},   {"sparsity", g.sparsity()}};
}

inline void from_json(const nlohmann::json& j, QuantGenes& g) {
  g.weight = j.at("weight").get<FixedPointFormat>();
  g.bias = j.at("bias").get<FixedPointFormat>();
  g.activation = j.at("activation").get<FixedPointFormat>();
  g.input = j.at("input").get<FixedPointFormat>();
  g.sparsity_tenths = static_cast<int>(std::lround(j.at("sparsity").get<double>() * 10.0));
}

inline void to_json(nlohmann::json& j, const ActivationProfile& p) {
  j = {{"pre_max_abs", p.pre_max_abs}, {"post_max", p.post_max}};
}

inline void from_json(const nlohmann::json& j, ActivationProfile& p) {
  p.pre_max_abs = j.at("pre_max_abs").get<std::array<std::vector<double>, 2>>();
  p.post_max = j.at("post_max").get<std::array<std::vector<double>, 2>>();
}

inline void to_json(nlohmann::json& j, const QuantizedMLP& q) {
  j = {{"input_dim", q.input_dim}, {"hidden_dim", q.hidden_dim}, {"output_dim", q.output_dim}, {"formats", q.genes}};
  j["layers"] = nlohmann::json::array();
  for (const auto& l : q.layers)
    j["layers"].push_back({{"weights", matrix_to_json(l.weights)},
                           {"mask", matrix_to_json(l.mask)},
                           {"cluster", matrix_to_json(l.cluster)},
                           {"biases", l.biases},
                           {"acc_bits", l.acc_bits},
                           {"acc_frac_bits", l.acc_frac_bits}});
  j["profile"] = q.profile;
}

inline void from_json(const nlohmann::json& j, QuantizedMLP& q) {
  q.input_dim = j.at("input_dim").get<std::size_t>();
  q.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  q.output_dim = j.at("output_dim").get<std::size_t>();
  q.genes = j.at("formats").get<QuantGenes>();
  const auto& layers = j.at("layers");
  if (layers.size() != 2) throw InputError("quantized model JSON: expected two layers");
  const std::array<std::size_t, 2> cols{q.input_dim, q.hidden_dim};
  for (std::size_t l = 0; l < 2; ++l) {
    auto& dst = q.layers[l];
    dst.weights = matrix_from_json<std::int64_t>(layers[l].at("weights"), cols[l]);
    dst.mask = matrix_from_json<std::uint8_t>(layers[l].at("mask"), cols[l]);
    dst.cluster = matrix_from_json<int>(layers[l].at("cluster"), cols[l]);
    dst.biases = layers[l].at("biases").get<std::vector<std::int64_t>>();
    dst.acc_bits = layers[l].at("acc_bits").get<std::vector<int>>();
    dst.acc_frac_bits = layers[l].at("acc_frac_bits").get<int>();
  }
  q.profile = j.at("profile").get<ActivationProfile>();
}

}  // namespace printmlp

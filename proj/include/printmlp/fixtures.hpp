#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "printmlp/common.hpp"
#include "printmlp/dataio.hpp"
#include "printmlp/quant.hpp"

namespace printmlp {

/// Isotropic unit-variance Gaussian blobs. Row r belongs to class
/// r % n_classes; class c is centred at separation * (1 + c / d) on axis
/// c % d, so centres are at least separation * sqrt(2) apart.
inline Dataset make_blobs(int n_classes, std::size_t n_features, std::size_t n_rows, double separation,
                          std::uint64_t seed) {
  if (!(separation > 0.0)) throw InputError("blobs: separation must be positive");
  if (n_classes < 2 || n_features < 1) throw InputError("blobs: need at least two classes and one feature");
  Dataset d;
  d.n_classes = n_classes;
  for (std::size_t k = 0; k < n_features; ++k) d.attribute_names.push_back("f" + std::to_string(k));
  for (int c = 0; c < n_classes; ++c) d.class_names.push_back(std::to_string(c));
  d.features = Matrix<double>(0, n_features);
  Rng rng(seed);
  std::vector<double> row(n_features);
  const auto dims = static_cast<int>(n_features);
  for (std::size_t r = 0; r < n_rows; ++r) {
    const int c = static_cast<int>(r % static_cast<std::size_t>(n_classes));
    for (std::size_t k = 0; k < n_features; ++k) row[k] = rng.normal();
    row[static_cast<std::size_t>(c % dims)] += separation * (1.0 + c / dims);
    d.features.append_row(row);
    d.labels.push_back(c);
  }
  return d;
}

/// CSV with a header row; the label is the last column.
inline std::string to_csv(const Dataset& d) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& n : d.attribute_names) out << n << ",";
  out << "label\n";
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (double v : d.features.row(r)) out << v << ",";
    out << d.class_names.at(static_cast<std::size_t>(d.labels[r])) << "\n";
  }
  return out.str();
}

inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << to_csv(d);
}

/// Every input code combination of a format, as feature values on its grid.
inline Dataset exhaustive_inputs(std::size_t n_inputs, const FixedPointFormat& fmt) {
  Dataset d;
  d.n_classes = 1;
  d.features = Matrix<double>(0, n_inputs);
  const auto levels = static_cast<std::uint64_t>(fmt.max_code() - fmt.min_code() + 1);
  std::uint64_t total = 1;
  for (std::size_t k = 0; k < n_inputs; ++k) total *= levels;
  std::vector<double> row(n_inputs);
  for (std::uint64_t idx = 0; idx < total; ++idx) {
    std::uint64_t rest = idx;
    for (std::size_t k = 0; k < n_inputs; ++k) {
      row[k] = fmt.value(fmt.min_code() + static_cast<std::int64_t>(rest % levels));
      rest /= levels;
    }
    d.features.append_row(row);
    d.labels.push_back(0);
  }
  return d;
}

/// Hand-built 2x2x2 network: UQ0.4 inputs, Q1.2 weights and biases, UQ1.3
/// hidden activations; accumulators sized over all 256 input pairs.
inline QuantizedMLP reference_net() {
  QuantizedMLP q;
  q.input_dim = q.hidden_dim = q.output_dim = 2;
  q.genes.input = FixedPointFormat::unsigned_q(0, 4);
  q.genes.weight = FixedPointFormat::signed_q(1, 2);
  q.genes.bias = FixedPointFormat::signed_q(1, 2);
  q.genes.activation = FixedPointFormat::unsigned_q(1, 3);
  q.genes.sparsity_tenths = 0;
  const std::array<std::array<std::int64_t, 4>, 2> w{{{3, -3, 5, 2}, {4, -1, -6, 3}}};
  const std::array<std::array<std::int64_t, 2>, 2> b{{{1, -2}, {0, 2}}};
  for (std::size_t l = 0; l < 2; ++l) {
    auto& layer = q.layers[l];
    layer.weights = Matrix<std::int64_t>(2, 2);
    std::copy(w[l].begin(), w[l].end(), layer.weights.data().begin());
    layer.mask = Matrix<std::uint8_t>(2, 2, 1);
    layer.cluster = Matrix<int>(2, 2, -1);
    layer.biases.assign(b[l].begin(), b[l].end());
    layer.acc_frac_bits = accumulator_frac_bits(q.genes, l);
  }
  size_accumulators(q, exhaustive_inputs(2, q.genes.input));
  return q;
}

}  // namespace printmlp

#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "printmlp/printmlp.hpp"

namespace testsupport {

using namespace printmlp;

// Per process, so ctest -j can run test cases side by side.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("printmlp_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Random valid gene set (sparsity unused here).
inline QuantGenes random_genes(Rng& rng, int max_input_bits = 4) {
  QuantGenes g;
  const int pc = static_cast<int>(rng.uniform_int(2, 8));
  const int pb = static_cast<int>(rng.uniform_int(2, 8));
  const int pr = static_cast<int>(rng.uniform_int(1, 8));
  const int pi = static_cast<int>(rng.uniform_int(1, max_input_bits));
  g.weight = {pc, static_cast<int>(rng.uniform_int(0, pc - 1)), true};
  g.bias = {pb, static_cast<int>(rng.uniform_int(0, pb - 1)), true};
  g.activation = {pr, static_cast<int>(rng.uniform_int(0, pr)), false};
  g.input = {pi, static_cast<int>(rng.uniform_int(0, pi)), false};
  return g;
}

struct RandomNetSpec {
  std::size_t min_in = 2, max_in = 8;
  std::size_t min_hidden = 1, max_hidden = 10;
  std::size_t min_out = 2, max_out = 5;
  double prune_probability = 0.2;
  int max_input_bits = 4;
  std::size_t profile_rows = 32;
};

/// Random quantized network with codes drawn uniformly from the formats and
/// accumulators sized on random rows.
inline QuantizedMLP random_quantized_mlp(Rng& rng, const RandomNetSpec& s = {}) {
  QuantizedMLP q;
  q.input_dim = static_cast<std::size_t>(rng.uniform_int(s.min_in, s.max_in));
  q.hidden_dim = static_cast<std::size_t>(rng.uniform_int(s.min_hidden, s.max_hidden));
  q.output_dim = static_cast<std::size_t>(rng.uniform_int(s.min_out, s.max_out));
  q.genes = random_genes(rng, s.max_input_bits);
  const std::array<std::size_t, 2> rows{q.hidden_dim, q.output_dim};
  const std::array<std::size_t, 2> cols{q.input_dim, q.hidden_dim};
  for (std::size_t l = 0; l < 2; ++l) {
    auto& L = q.layers[l];
    L.weights = Matrix<std::int64_t>(rows[l], cols[l]);
    L.mask = Matrix<std::uint8_t>(rows[l], cols[l], 1);
    L.cluster = Matrix<int>(rows[l], cols[l], -1);
    for (std::size_t i = 0; i < L.weights.size(); ++i) {
      if (rng.uniform() < s.prune_probability) {
        L.mask.data()[i] = 0;
        continue;
      }
      L.weights.data()[i] = rng.uniform_int(q.genes.weight.min_code(), q.genes.weight.max_code());
    }
    L.biases.resize(rows[l]);
    for (auto& b : L.biases) b = rng.uniform_int(q.genes.bias.min_code(), q.genes.bias.max_code());
    L.acc_frac_bits = accumulator_frac_bits(q.genes, l);
  }
  Dataset prof;
  prof.n_classes = 1;
  prof.features = Matrix<double>(0, q.input_dim);
  std::vector<double> row(q.input_dim);
  for (std::size_t r = 0; r < s.profile_rows; ++r) {
    for (auto& v : row) v = rng.uniform();
    prof.features.append_row(row);
    prof.labels.push_back(0);
  }
  size_accumulators(q, prof);
  return q;
}

inline std::vector<std::int64_t> random_input_codes(const QuantizedMLP& q, Rng& rng) {
  std::vector<std::int64_t> c(q.input_dim);
  for (auto& v : c) v = rng.uniform_int(q.genes.input.min_code(), q.genes.input.max_code());
  return c;
}

/// Random float model whose hidden pre-activations stay away from the ReLU
/// kink on the given rows (finite differences are unreliable there).
inline MLPModel random_smooth_model(Rng& rng, const Dataset& d, std::size_t hidden, double margin = 1e-3) {
  for (;;) {
    MLPModel m = init_model({d.cols(), hidden, static_cast<std::size_t>(d.n_classes)}, rng.next());
    for (auto& l : m.layers)
      for (auto& b : l.biases) b = rng.uniform(-0.5, 0.5);
    bool ok = true;
    for (std::size_t r = 0; r < d.rows() && ok; ++r) {
      std::vector<double> pre;
      forward_logits(m, d.features.row(r), &pre);
      for (double z : pre) ok = ok && std::abs(z) >= margin;
    }
    if (ok) return m;
  }
}

/// Relative error ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||, 1e-12)
/// over every parameter, central differences with step h.
inline double gradient_check(const MLPModel& m, const Dataset& d, double l1, double h = 1e-6) {
  Gradients g;
  loss_and_gradient(m, d, l1, &g);
  double diff = 0, na = 0, nn = 0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = loss_and_gradient(m, d, l1, nullptr);
    param = keep - h;
    const double down = loss_and_gradient(m, d, l1, nullptr);
    param = keep;
    const double numeric = (up - down) / (2 * h);
    diff += (analytic - numeric) * (analytic - numeric);
    na += analytic * analytic;
    nn += numeric * numeric;
  };
  MLPModel& mm = const_cast<MLPModel&>(m);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t i = 0; i < mm.layers[l].weights.size(); ++i)
      probe(mm.layers[l].weights.data()[i], g.layers[l].weights.data()[i]);
    for (std::size_t i = 0; i < mm.layers[l].biases.size(); ++i) probe(mm.layers[l].biases[i], g.layers[l].biases[i]);
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

/// Exact real-arithmetic inference over the quantized values, independent of
/// the integer interpreter: long double carries every value exactly here
/// (at most ~40 significant bits).
inline int real_valued_inference(const QuantizedMLP& q, std::span<const std::int64_t> codes) {
  std::vector<long double> x(codes.size());
  for (std::size_t k = 0; k < codes.size(); ++k) x[k] = std::ldexp(static_cast<long double>(codes[k]), -q.genes.input.frac_bits());
  const int fc = q.genes.weight.frac_bits(), fb = q.genes.bias.frac_bits();
  std::vector<long double> h(q.hidden_dim);
  for (std::size_t n = 0; n < q.hidden_dim; ++n) {
    long double z = std::ldexp(static_cast<long double>(q.layers[0].biases[n]), -fb);
    for (std::size_t k = 0; k < q.input_dim; ++k) z += x[k] * std::ldexp(static_cast<long double>(q.layers[0].weights(n, k)), -fc);
    // QRelu in real arithmetic: clip to [0, max], floor to the output grid
    const auto& r = q.genes.activation;
    long double v = z <= 0 ? 0.0L : std::floor(std::ldexp(z, r.frac_bits()));
    v = std::min<long double>(v, static_cast<long double>(r.max_code()));
    h[n] = std::ldexp(static_cast<long double>(v), -r.frac_bits());
  }
  std::vector<long double> o(q.output_dim);
  for (std::size_t n = 0; n < q.output_dim; ++n) {
    long double z = std::ldexp(static_cast<long double>(q.layers[1].biases[n]), -fb);
    for (std::size_t k = 0; k < q.hidden_dim; ++k) z += h[k] * std::ldexp(static_cast<long double>(q.layers[1].weights(n, k)), -fc);
    o[n] = z;
  }
  std::size_t best = 0;
  for (std::size_t n = 1; n < o.size(); ++n)
    if (o[n] > o[best]) best = n;
  return static_cast<int>(best);
}

/// Small Verilog smoke check: balanced module/endmodule, every statement
/// terminated, every identifier used in an expression declared first.
inline std::vector<std::string> lint_verilog(const std::string& text) {
  std::vector<std::string> problems;
  static const std::set<std::string> keywords{"module", "endmodule", "input", "output", "wire", "signed", "assign"};
  std::set<std::string> declared;
  int modules = 0, endmodules = 0;
  std::istringstream in(text);
  std::string line;
  bool in_header = false;
  const std::regex ident(R"([A-Za-z_][A-Za-z0-9_]*)");
  const std::regex sized_literal(R"(\d+'s?[dbh][0-9a-fA-F_]+)");
  while (std::getline(in, line)) {
    if (auto c = line.find("//"); c != std::string::npos) line = line.substr(0, c);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string first;
    ls >> first;
    if (first == "module") {
      ++modules;
      in_header = true;
      continue;
    }
    if (first == "endmodule") {
      ++endmodules;
      continue;
    }
    if (in_header) {
      if (first == ");") {
        in_header = false;
        continue;
      }
      std::smatch m;
      std::string rest = line;
      std::string last;
      for (auto it = std::sregex_iterator(rest.begin(), rest.end(), ident); it != std::sregex_iterator(); ++it)
        last = it->str();
      if (!last.empty() && !keywords.count(last)) declared.insert(last);
      continue;
    }
    if (line.find(';') == std::string::npos) problems.push_back("unterminated statement: " + line);
    std::string lhs, rhs;
    if (first == "wire") {
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        problems.push_back("wire without driver: " + line);
        continue;
      }
      lhs = line.substr(0, eq);
      rhs = line.substr(eq + 1);
      std::string name;
      for (auto it = std::sregex_iterator(lhs.begin(), lhs.end(), ident); it != std::sregex_iterator(); ++it) name = it->str();
      if (declared.count(name)) problems.push_back("redeclared: " + name);
      rhs = std::regex_replace(rhs, sized_literal, " ");
      for (auto it = std::sregex_iterator(rhs.begin(), rhs.end(), ident); it != std::sregex_iterator(); ++it)
        if (!declared.count(it->str())) problems.push_back("undeclared '" + it->str() + "' in: " + line);
      declared.insert(name);
    } else if (first == "assign") {
      const auto eq = line.find('=');
      rhs = std::regex_replace(line.substr(eq + 1), sized_literal, " ");
      for (auto it = std::sregex_iterator(rhs.begin(), rhs.end(), ident); it != std::sregex_iterator(); ++it)
        if (!declared.count(it->str())) problems.push_back("undeclared '" + it->str() + "' in: " + line);
    } else {
      problems.push_back("unexpected statement: " + line);
    }
  }
  if (modules != 1 || endmodules != 1) problems.push_back("module/endmodule not balanced");
  return problems;
}

/// Number of multiplier wires (l<layer>_c<col>_m<abs>) declared in the text.
inline std::size_t count_multiplier_wires(const std::string& text) {
  const std::regex re(R"(wire (\[\d+:0\] )?l\d+_c\d+_m\d+ =)");
  return static_cast<std::size_t>(std::distance(std::sregex_iterator(text.begin(), text.end(), re), std::sregex_iterator()));
}

/// Normalized blob fixture split 70/30.
struct BlobData {
  Dataset train, test;
};

inline BlobData blob_fixture(std::uint64_t seed = 1, double separation = 3.0, std::size_t rows = 300,
                             int classes = 3, std::size_t features = 4) {
  auto all = make_blobs(classes, features, rows, separation, seed);
  auto parts = split(all, {0.7, seed});
  auto stats = fit_normalization(parts.train);
  return {normalize(parts.train, stats), normalize(parts.test, stats)};
}

}  // namespace testsupport

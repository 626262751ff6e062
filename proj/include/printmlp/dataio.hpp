#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "printmlp/common.hpp"

namespace printmlp {

/// Tabular classification data. Labels are dense ids in [0, n_classes).
struct Dataset {
  Matrix<double> features;
  std::vector<int> labels;
  std::vector<std::string> attribute_names;
  int n_classes = 0;
  /// Original label text for each dense id.
  std::vector<std::string> class_names;

  std::size_t rows() const { return labels.size(); }
  std::size_t cols() const { return features.cols(); }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.features = Matrix<double>(indices.size(), cols());
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      auto src = features.row(indices[i]);
      std::copy(src.begin(), src.end(), out.features.row(i).begin());
      out.labels.push_back(labels[indices[i]]);
    }
    out.attribute_names = attribute_names;
    out.n_classes = n_classes;
    out.class_names = class_names;
    return out;
  }

  void validate() const {
    if (features.rows() != labels.size())
      throw InputError("dataset: feature rows and label count differ");
    for (int y : labels)
      if (y < 0 || y >= n_classes) throw InputError("dataset: label outside [0, n_classes)");
  }
};

struct CsvOptions {
  /// Column index (negative counts from the end) or header name.
  std::variant<int, std::string> label_column = -1;
  /// ' ' or '\t' split on runs of whitespace.
  char delimiter = ',';
  /// Unset: a header is assumed when a feature cell of the first row is not numeric.
  std::optional<bool> has_header;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  if (delim == ' ' || delim == '\t') {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
      cells.emplace_back(line.substr(i, j - i));
      i = j;
    }
    return cells;
  }
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    cells.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Read a delimited text file. Labels are remapped to dense ids; numeric
/// labels are ordered numerically, textual ones lexicographically.
inline Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset file: " + path.string());

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    rows.push_back(detail::split_line(line, opt.delimiter));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw InputError(path.string() + ": no rows");

  const std::size_t width = rows.front().size();
  if (width < 2) throw InputError(path.string() + ": need at least one feature column and a label column");

  auto resolve_label = [&](const std::vector<std::string>* header) -> std::size_t {
    if (const int* idx = std::get_if<int>(&opt.label_column)) {
      const long long i = *idx < 0 ? static_cast<long long>(width) + *idx : *idx;
      if (i < 0 || i >= static_cast<long long>(width))
        throw InputError("label column index out of range");
      return static_cast<std::size_t>(i);
    }
    const auto& name = std::get<std::string>(opt.label_column);
    if (!header) throw InputError("label column given by name but the file has no header");
    auto it = std::find(header->begin(), header->end(), name);
    if (it == header->end()) throw InputError("label column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header->begin());
  };

  bool header = false;
  if (opt.has_header) {
    header = *opt.has_header;
  } else if (std::holds_alternative<std::string>(opt.label_column)) {
    header = true;
  } else {
    const std::size_t lab = resolve_label(nullptr);
    for (std::size_t c = 0; c < width; ++c)
      if (c != lab && !detail::parse_number(rows.front()[c])) header = true;
  }

  const std::vector<std::string>* header_row = header ? &rows.front() : nullptr;
  const std::size_t label_col = resolve_label(header_row);
  const std::size_t first = header ? 1 : 0;
  if (rows.size() <= first) throw InputError(path.string() + ": no rows");

  Dataset d;
  for (std::size_t c = 0; c < width; ++c) {
    if (c == label_col) continue;
    d.attribute_names.push_back(header ? rows.front()[c] : "x" + std::to_string(d.attribute_names.size()));
  }

  std::vector<std::string> raw_labels;
  d.features = Matrix<double>(0, width - 1);
  std::vector<double> buf(width - 1);
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != width)
      throw InputError(path.string() + ":" + std::to_string(line_numbers[r]) + ": expected " +
                       std::to_string(width) + " columns, found " + std::to_string(cells.size()));
    std::size_t k = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_col) continue;
      auto v = detail::parse_number(cells[c]);
      if (!v)
        throw InputError(path.string() + ":" + std::to_string(line_numbers[r]) + ": column " +
                         std::to_string(c + 1) + ": non-numeric feature '" + cells[c] + "'");
      buf[k++] = *v;
    }
    d.features.append_row(buf);
    raw_labels.push_back(cells[label_col]);
  }

  std::vector<std::string> names = raw_labels;
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  const bool numeric = std::all_of(names.begin(), names.end(),
                                   [](const std::string& s) { return detail::parse_number(s).has_value(); });
  if (numeric)
    std::stable_sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
      return *detail::parse_number(a) < *detail::parse_number(b);
    });
  std::map<std::string, int> id;
  for (std::size_t i = 0; i < names.size(); ++i) id[names[i]] = static_cast<int>(i);
  for (const auto& s : raw_labels) d.labels.push_back(id[s]);
  d.class_names = std::move(names);
  d.n_classes = static_cast<int>(d.class_names.size());
  return d;
}

/// Per-column min-max statistics from a training split.
struct NormStats {
  std::vector<double> min;
  std::vector<double> max;
  std::vector<std::string> warnings;

  bool operator==(const NormStats& o) const { return min == o.min && max == o.max; }
};

inline NormStats fit_normalization(const Dataset& source) {
  NormStats s;
  const std::size_t nc = source.cols();
  s.min.assign(nc, std::numeric_limits<double>::infinity());
  s.max.assign(nc, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < source.rows(); ++r)
    for (std::size_t c = 0; c < nc; ++c) {
      s.min[c] = std::min(s.min[c], source.features(r, c));
      s.max[c] = std::max(s.max[c], source.features(r, c));
    }
  for (std::size_t c = 0; c < nc; ++c) {
    if (source.rows() == 0) s.min[c] = s.max[c] = 0.0;
    if (s.max[c] == s.min[c]) {
      const std::string name = c < source.attribute_names.size() ? source.attribute_names[c] : std::to_string(c);
      s.warnings.push_back("constant column '" + name + "' mapped to 0");
    }
  }
  return s;
}

/// Min-max scale into [0, 1] with the given statistics; out-of-range values
/// are clamped and constant columns become 0.
inline Dataset normalize(const Dataset& d, const NormStats& stats) {
  if (stats.min.size() != d.cols()) throw InputError("normalize: column count mismatch");
  Dataset out = d;
  for (std::size_t r = 0; r < d.rows(); ++r)
    for (std::size_t c = 0; c < d.cols(); ++c) {
      const double span = stats.max[c] - stats.min[c];
      double v = span > 0.0 ? (d.features(r, c) - stats.min[c]) / span : 0.0;
      out.features(r, c) = std::clamp(v, 0.0, 1.0);
    }
  return out;
}

inline Dataset normalize(const Dataset& d, const Dataset& stats_source) {
  return normalize(d, fit_normalization(stats_source));
}

struct SplitSpec {
  double train_ratio = 0.7;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::vector<std::string> warnings;
};

/// Stratified, seeded train/test split. Row order inside each part follows
/// the original file.
inline SplitResult split(const Dataset& d, const SplitSpec& spec) {
  if (!(spec.train_ratio > 0.0 && spec.train_ratio < 1.0))
    throw InputError("split: train_ratio must lie in (0, 1)");
  const std::size_t n = d.rows();
  if (n < static_cast<std::size_t>(std::max(d.n_classes, 1)) * 2)
    throw InputError("split: need at least 2 rows per class");

  std::vector<std::vector<std::size_t>> by_class(d.n_classes);
  for (std::size_t i = 0; i < n; ++i) by_class[d.labels[i]].push_back(i);

  SplitResult res;
  const auto target = static_cast<long long>(std::llround(spec.train_ratio * static_cast<double>(n)));
  std::vector<long long> take(d.n_classes, 0), lo(d.n_classes, 0), hi(d.n_classes, 0);
  std::vector<double> frac(d.n_classes, 0.0);
  long long total = 0;
  for (int c = 0; c < d.n_classes; ++c) {
    const auto nc = static_cast<long long>(by_class[c].size());
    if (nc == 0) continue;
    if (nc == 1) {
      lo[c] = hi[c] = 1;
      res.warnings.push_back("class " + std::to_string(c) + " has a single sample; kept in train");
    } else {
      lo[c] = 1;
      hi[c] = nc - 1;
    }
    const double ideal = spec.train_ratio * static_cast<double>(nc);
    take[c] = std::clamp(static_cast<long long>(std::floor(ideal)), lo[c], hi[c]);
    frac[c] = ideal - std::floor(ideal);
    total += take[c];
  }
  // Largest-remainder adjustment towards the global target.
  std::vector<int> order(d.n_classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (bool moved = true; total < target && moved;) {
    moved = false;
    for (int c : order)
      if (total < target && take[c] < hi[c]) ++take[c], ++total, moved = true;
  }
  for (bool moved = true; total > target && moved;) {
    moved = false;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if (total > target && take[*it] > lo[*it]) --take[*it], --total, moved = true;
  }

  Rng rng(spec.seed);
  for (int c = 0; c < d.n_classes; ++c) {
    auto idx = by_class[c];
    rng.shuffle(idx);
    for (std::size_t k = 0; k < idx.size(); ++k)
      (static_cast<long long>(k) < take[c] ? res.train_rows : res.test_rows).push_back(idx[k]);
  }
  std::sort(res.train_rows.begin(), res.train_rows.end());
  std::sort(res.test_rows.begin(), res.test_rows.end());
  res.train = d.subset(res.train_rows);
  res.test = d.subset(res.test_rows);
  return res;
}

struct Fold {
  Dataset train;
  Dataset validation;
  std::vector<std::size_t> validation_rows;
};

/// Seeded k-fold partition; the first (rows % k) folds hold one extra row.
inline std::vector<Fold> kfold(const Dataset& d, std::size_t k, std::uint64_t seed) {
  const std::size_t n = d.rows();
  if (k < 2) throw InputError("kfold: k must be at least 2");
  if (k > n) throw InputError("kfold: k exceeds the number of rows");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);

  std::vector<Fold> folds;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = n / k + (f < n % k ? 1 : 0);
    std::vector<std::size_t> val(idx.begin() + pos, idx.begin() + pos + len);
    std::vector<std::size_t> tr(idx.begin(), idx.begin() + pos);
    tr.insert(tr.end(), idx.begin() + pos + len, idx.end());
    std::sort(val.begin(), val.end());
    std::sort(tr.begin(), tr.end());
    folds.push_back({d.subset(tr), d.subset(val), val});
    pos += len;
  }
  return folds;
}

/// Everything needed to rebuild the normalized train/test splits of a run.
struct DatasetManifest {
  std::string source;
  std::string label_column;  // index as text or header name
  char delimiter = ',';
  std::vector<std::string> attribute_names;
  std::vector<std::string> class_names;
  NormStats norm;
  SplitSpec split;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::vector<std::string> warnings;
};

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
  j = nlohmann::json{{"source", m.source},
                     {"label_column", m.label_column},
                     {"delimiter", std::string(1, m.delimiter)},
                     {"attribute_names", m.attribute_names},
                     {"class_names", m.class_names},
                     {"normalization", {{"min", m.norm.min}, {"max", m.norm.max}}},
                     {"split", {{"train_ratio", m.split.train_ratio}, {"seed", m.split.seed}}},
                     {"train_rows", m.train_rows},
                     {"test_rows", m.test_rows},
                     {"warnings", m.warnings}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
  m.source = j.at("source").get<std::string>();
  m.label_column = j.at("label_column").get<std::string>();
  const auto delim = j.at("delimiter").get<std::string>();
  m.delimiter = delim.empty() ? ',' : delim.front();
  m.attribute_names = j.at("attribute_names").get<std::vector<std::string>>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.norm.min = j.at("normalization").at("min").get<std::vector<double>>();
  m.norm.max = j.at("normalization").at("max").get<std::vector<double>>();
  m.split.train_ratio = j.at("split").at("train_ratio").get<double>();
  m.split.seed = j.at("split").at("seed").get<std::uint64_t>();
  m.train_rows = j.at("train_rows").get<std::size_t>();
  m.test_rows = j.at("test_rows").get<std::size_t>();
  m.warnings = j.value("warnings", std::vector<std::string>{});
}

/// Parse a label-column argument: integers select by index, anything else by name.
inline std::variant<int, std::string> parse_label_column(const std::string& s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc{} && ptr == s.data() + s.size()) return v;
  return s;
}

struct PreparedData {
  Dataset train;  // normalized
  Dataset test;   // normalized with train statistics
  DatasetManifest manifest;
};

/// load_csv + split + normalize, recording the recipe in a manifest.
inline PreparedData prepare_dataset(const std::string& path, const std::string& label_column, char delimiter,
                                    const SplitSpec& spec) {
  CsvOptions opt;
  opt.label_column = parse_label_column(label_column);
  opt.delimiter = delimiter;
  Dataset all = load_csv(path, opt);
  SplitResult parts = split(all, spec);
  NormStats stats = fit_normalization(parts.train);

  PreparedData out;
  out.train = normalize(parts.train, stats);
  out.test = normalize(parts.test, stats);
  out.manifest.source = path;
  out.manifest.label_column = label_column;
  out.manifest.delimiter = delimiter;
  out.manifest.attribute_names = all.attribute_names;
  out.manifest.class_names = all.class_names;
  out.manifest.split = spec;
  out.manifest.train_rows = out.train.rows();
  out.manifest.test_rows = out.test.rows();
  out.manifest.warnings = parts.warnings;
  out.manifest.warnings.insert(out.manifest.warnings.end(), stats.warnings.begin(), stats.warnings.end());
  out.manifest.norm = std::move(stats);
  return out;
}

inline PreparedData prepare_dataset(const DatasetManifest& m) {
  return prepare_dataset(m.source, m.label_column, m.delimiter, m.split);
}

}  // namespace printmlp

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "printmlp/codegen.hpp"
#include "printmlp/compress.hpp"
#include "printmlp/dataio.hpp"
#include "printmlp/fixtures.hpp"
#include "printmlp/hwcost.hpp"
#include "printmlp/model.hpp"
#include "printmlp/optsearch.hpp"
#include "printmlp/quant.hpp"

namespace printmlp {

namespace fs = std::filesystem;

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(1) + "\n"); }

/// Library from `path`, or the built-in default when empty.
inline GateLibrary gate_library_or_default(const std::string& path) {
  if (path.empty()) return {};
  return load_gate_library(path);
}

/// Estimator cached next to the run outputs, keyed by the library hash.
inline AreaEstimator run_estimator(const std::string& gate_lib, const fs::path& out_dir) {
  const auto lib = gate_library_or_default(gate_lib);
  fs::create_directories(out_dir);
  return load_or_build_estimator((out_dir / "estimator_cache.json").string(), lib);
}

/// Area of a float model implemented at reference precision.
inline double reference_area(const MLPModel& m, const Dataset& train, const AreaEstimator& est, std::uint64_t seed) {
  const auto q = quantize_model(m, reference_genes(m, train), full_mask(m), train, quantization_seed(seed));
  return estimate_area(q, est).total;
}

// ---------------------------------------------------------------------------
// nas
// ---------------------------------------------------------------------------

struct NasOptions {
  std::string data;
  std::string label_column = "-1";
  char delimiter = ',';
  double train_ratio = 0.7;
  std::uint64_t seed = 0;
  std::size_t budget = 20;
  std::string gate_lib;
  std::string out = "out";
  unsigned threads = 1;
};

/// Writes <out>/model.json (model, dataset manifest, trial log) and
/// <out>/manifest.json.
inline void cmd_nas(const NasOptions& o) {
  auto data = prepare_dataset(o.data, o.label_column, o.delimiter, {o.train_ratio, o.seed});
  const fs::path out(o.out);
  const auto est = run_estimator(o.gate_lib, out);
  NasConfig cfg;
  cfg.budget = o.budget;
  cfg.threads = o.threads;
  auto res = nas_search(
      data.train, cfg, [&](const MLPModel& m) { return reference_area(m, data.train, est, o.seed); }, o.seed);

  nlohmann::json j;
  j["model"] = res.model;
  j["manifest"] = data.manifest;
  j["seed"] = o.seed;
  j["test_accuracy"] = accuracy(res.model, data.test);
  j["nas"]["winner"] = res.winner;
  j["nas"]["trials"] = nlohmann::json::array();
  for (const auto& t : res.trials)
    j["nas"]["trials"].push_back({{"hidden_dim", t.hidden_dim},
                                  {"config", t.config},
                                  {"cv_accuracy", t.cv_accuracy},
                                  {"failed", t.failed},
                                  {"area", t.area ? nlohmann::json(*t.area) : nlohmann::json(nullptr)}});
  write_json_file(out / "model.json", j);
  write_json_file(out / "manifest.json", data.manifest);
}

struct LoadedModel {
  MLPModel model;
  DatasetManifest manifest;
  PreparedData data;
  std::uint64_t seed = 0;
};

inline LoadedModel load_model_file(const std::string& path) {
  const auto j = read_json_file(path);
  LoadedModel lm;
  try {
    lm.model = j.at("model").get<MLPModel>();
    lm.manifest = j.at("manifest").get<DatasetManifest>();
    lm.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw InputError("'" + path + "' is not a model file: " + e.what());
  }
  lm.data = prepare_dataset(lm.manifest);
  return lm;
}

// ---------------------------------------------------------------------------
// minimize
// ---------------------------------------------------------------------------

enum class Technique { combined, quantization, pruning, sharing };

inline Technique technique_from_string(const std::string& s) {
  if (s == "combined") return Technique::combined;
  if (s == "quant") return Technique::quantization;
  if (s == "prune") return Technique::pruning;
  if (s == "cluster") return Technique::sharing;
  throw InputError("unknown technique '" + s + "' (combined, quant, prune, cluster)");
}

inline std::string to_string(Technique t) {
  switch (t) {
    case Technique::combined: return "combined";
    case Technique::quantization: return "quant";
    case Technique::pruning: return "prune";
    case Technique::sharing: return "cluster";
  }
  return "combined";
}

struct MinimizeOptions {
  std::string model;
  Technique technique = Technique::combined;
  std::uint64_t seed = 0;
  std::size_t pop = 40;
  std::size_t gens = 50;
  int sparsity_max_tenths = 5;
  int qat_epochs = 30;
  std::string gate_lib;
  std::string out = "out";
  unsigned threads = 1;
  bool resume = false;
};

struct MinimizeResult {
  SearchContext context;
  ParetoFront front;
};

inline nlohmann::json front_to_json(const ParetoFront& front, const SearchContext& ctx, Technique t,
                                    const std::string& model_path) {
  nlohmann::json j;
  j["technique"] = to_string(t);
  j["seed"] = ctx.seed;
  j["model_file"] = model_path;
  j["baseline"] = {{"accuracy", ctx.baseline_accuracy},
                   {"area", ctx.baseline_area},
                   {"genes", ctx.reference},
                   {"quantized", ctx.baseline}};
  j["members"] = nlohmann::json::array();
  for (const auto& d : front) j["members"].push_back(design_to_json(d));
  return j;
}

/// Run one minimization technique on a NAS model and write <out>/front.json.
/// The GA checkpoints every generation to <out>/checkpoint.jsonl.
inline MinimizeResult run_minimize(const MinimizeOptions& o, const LoadedModel& lm, const AreaEstimator& est) {
  SearchConfig sc;
  sc.qat.epochs = o.qat_epochs;
  sc.threads = o.threads;
  sc.sparsity_max_tenths = o.sparsity_max_tenths;
  MinimizeResult r{make_context(lm.model, lm.data.train, lm.data.test, est, sc, o.seed), {}};
  DesignEvaluator ev(r.context);
  GaOptions ga;
  ga.nsga.pop_size = o.pop;
  ga.nsga.generations = o.gens;
  ga.nsga.resume = o.resume;
  if (!o.out.empty()) ga.nsga.checkpoint_path = (fs::path(o.out) / "checkpoint.jsonl").string();
  const std::uint64_t ga_seed = derive_seed(o.seed, 0x6a);
  switch (o.technique) {
    case Technique::combined:
      r.front = cluster_sweep(search_front(ev, ga, ga_seed), ev);
      break;
    case Technique::quantization:
      ga.quantization_only = true;
      r.front = search_front(ev, ga, ga_seed);
      break;
    case Technique::pruning:
      r.front = prune_only_front(ev);
      break;
    case Technique::sharing:
      r.front = cluster_only_front(ev);
      break;
  }
  return r;
}

inline MinimizeResult cmd_minimize(const MinimizeOptions& o) {
  if (o.pop < 4 || o.pop % 2) throw InputError("--pop must be even and at least 4");
  const auto lm = load_model_file(o.model);
  const fs::path out(o.out);
  const auto est = run_estimator(o.gate_lib, out);
  auto r = run_minimize(o, lm, est);
  write_json_file(out / "front.json", front_to_json(r.front, r.context, o.technique, o.model));
  return r;
}

struct FrontFile {
  std::string technique;
  std::string model_file;
  std::uint64_t seed = 0;
  double baseline_accuracy = 0.0;
  double baseline_area = 0.0;
  ParetoFront members;
};

inline FrontFile load_front_file(const std::string& path) {
  const auto j = read_json_file(path);
  FrontFile f;
  try {
    f.technique = j.at("technique").get<std::string>();
    f.model_file = j.at("model_file").get<std::string>();
    f.seed = j.at("seed").get<std::uint64_t>();
    f.baseline_accuracy = j.at("baseline").at("accuracy").get<double>();
    f.baseline_area = j.at("baseline").at("area").get<double>();
    for (const auto& m : j.at("members")) f.members.push_back(design_from_json(m));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("'" + path + "' is not a front file: " + e.what());
  }
  return f;
}

// ---------------------------------------------------------------------------
// emit
// ---------------------------------------------------------------------------

/// Front member with the smallest area among those losing at most
/// `max_loss` accuracy; ties go to lower loss, then lower index.
inline std::size_t pick_member(const ParetoFront& front, double max_loss) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < front.size(); ++i) {
    const auto& d = front[i];
    if (d.failed || !d.quantized || d.accuracy_loss > max_loss + 1e-12) continue;
    if (!best || d.area < front[*best].area ||
        (d.area == front[*best].area && d.accuracy_loss < front[*best].accuracy_loss))
      best = i;
  }
  if (!best)
    throw InfeasibleError("no front member loses at most " + std::to_string(max_loss * 100.0) + "% accuracy");
  return *best;
}

struct EmitOptions {
  std::string front;
  std::optional<std::size_t> pick;
  double max_loss = 0.05;
  double delay_ms = 200.0;
  std::string gate_lib;
  std::string out = "out";
  std::size_t vectors = 100;
  std::string module_name = "bespoke_mlp";
};

struct EmitResult {
  std::size_t member = 0;
  double voltage = 0.0;
  nlohmann::json report;
};

/// Writes <out>/<module>.v, <out>/vectors.txt and <out>/report.json.
inline EmitResult cmd_emit(const EmitOptions& o) {
  const auto f = load_front_file(o.front);
  if (f.members.empty()) throw InputError("front file has no members");
  EmitResult r;
  if (o.pick) {
    if (*o.pick >= f.members.size()) throw InputError("--pick is beyond the front size");
    r.member = *o.pick;
  } else {
    r.member = pick_member(f.members, o.max_loss);
  }
  const auto& d = f.members[r.member];
  if (!d.quantized) throw InputError("front member has no quantized design");
  const auto& q = *d.quantized;
  const auto lib = gate_library_or_default(o.gate_lib);
  r.voltage = min_voltage(q, lib, o.delay_ms * 1e-3);

  const auto lm = load_model_file(f.model_file);
  const fs::path out(o.out);
  const auto est = run_estimator(o.gate_lib, out);
  const auto plan = plan_netlist(q, lib);
  const std::string name = sanitize_identifier(o.module_name);
  write_text_file(out / (name + ".v"), emit_verilog(plan, name));
  write_text_file(out / "vectors.txt",
                  emit_golden_vectors(q, lm.data.test, std::min(o.vectors, lm.data.test.rows())));

  r.report = {{"member", r.member},
              {"genes", d.genes},
              {"cluster_k", d.cluster_k ? nlohmann::json(*d.cluster_k) : nlohmann::json(nullptr)},
              {"accuracy", d.accuracy},
              {"accuracy_loss", d.accuracy_loss},
              {"baseline_accuracy", f.baseline_accuracy},
              {"baseline_area", f.baseline_area},
              {"voltage", r.voltage},
              {"delay_constraint_ms", o.delay_ms},
              {"delay_ms", critical_path_delay(q, lib, r.voltage) * 1e3},
              {"area", estimate_area(q, est)},
              {"oracle_area", oracle_area(q, lib).total},
              {"multipliers", plan.multiplier_count()}};
  write_json_file(out / "report.json", r.report);
  return r;
}

// ---------------------------------------------------------------------------
// pareto-export
// ---------------------------------------------------------------------------

struct ExportOptions {
  std::string front;
  std::string model;  // defaults to the model recorded in the front file
  std::string gate_lib;
  std::string out = "pareto.csv";
};

struct Baseline {
  double accuracy = 0.0;
  double area = 0.0;
};

/// Un-minimized reference implementation of the model, recomputed from scratch.
inline Baseline compute_baseline(const LoadedModel& lm, const AreaEstimator& est, std::uint64_t seed) {
  const auto q = quantize_model(lm.model, reference_genes(lm.model, lm.data.train), full_mask(lm.model),
                                lm.data.train, quantization_seed(seed));
  return {accuracy(q, lm.data.test), estimate_area(q, est).total};
}

inline std::string pareto_csv(const ParetoFront& front, const Baseline& base) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "accuracy_norm,area_norm,accuracy,area,Pc,Ic,Pb,Ib,Pr,Ir,Pi,Ii,sparsity,k_hidden,k_out\n";
  for (const auto& d : front) {
    const auto g = encode_genes(d.genes);
    out << (base.accuracy > 0 ? d.accuracy / base.accuracy : 0.0) << "," << d.area / base.area << "," << d.accuracy
        << "," << d.area;
    for (int k = 0; k < kSparsity; ++k) out << "," << g[static_cast<std::size_t>(k)];
    out << "," << d.genes.sparsity();
    if (d.cluster_k)
      out << "," << (*d.cluster_k)[0] << "," << (*d.cluster_k)[1];
    else
      out << ",,";
    out << "\n";
  }
  return out.str();
}

inline void cmd_pareto_export(const ExportOptions& o) {
  const auto f = load_front_file(o.front);
  const auto lm = load_model_file(o.model.empty() ? f.model_file : o.model);
  const fs::path out(o.out);
  const auto est = build_estimator(gate_library_or_default(o.gate_lib));
  write_text_file(out, pareto_csv(f.members, compute_baseline(lm, est, f.seed)));
}

// ---------------------------------------------------------------------------
// fixture
// ---------------------------------------------------------------------------

struct FixtureOptions {
  int classes = 3;
  std::size_t features = 4;
  std::size_t rows = 300;
  double separation = 3.0;
  std::uint64_t seed = 0;
  std::string out = "blobs.csv";
};

inline void cmd_fixture(const FixtureOptions& o) {
  write_text_file(o.out, to_csv(make_blobs(o.classes, o.features, o.rows, o.separation, o.seed)));
}

}  // namespace printmlp

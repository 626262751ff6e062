// printmlp: train, minimize and emit bespoke printed MLP classifiers.
//
// Exit codes: 0 ok, 2 bad input, 3 infeasible constraint, 4 internal error.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "printmlp/printmlp.hpp"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitInternal = 4;

char delimiter_from(const std::string& s) {
  if (s == "tab" || s == "\\t") return '\t';
  if (s == "space") return ' ';
  if (s.size() != 1) throw printmlp::InputError("delimiter must be a single character, 'tab' or 'space'");
  return s.front();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hardware-aware minimization of printed bespoke MLP classifiers"};
  app.set_config("--config", "", "TOML file whose keys mirror the command-line flags");
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string gate_lib;
  std::string out = "out";
  app.add_option("--seed", seed, "Global random seed")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads for evaluations")->capture_default_str();
  app.add_option("--gate-lib", gate_lib, "Gate library JSON (area, delay, voltage table)");
  app.add_option("--out", out, "Output directory (or file for pareto-export/fixture)")->capture_default_str();

  // nas
  printmlp::NasOptions nas;
  std::string nas_delim = ",";
  auto* c_nas = app.add_subcommand("nas", "Hardware-aware architecture search on a CSV dataset");
  c_nas->add_option("data", nas.data, "CSV file")->required();
  c_nas->add_option("--label-column", nas.label_column, "Label column: index (negative counts from the end) or name")
      ->capture_default_str();
  c_nas->add_option("--delimiter", nas_delim, "Field delimiter")->capture_default_str();
  c_nas->add_option("--train-ratio", nas.train_ratio, "Train share of the split")->capture_default_str();
  c_nas->add_option("--budget", nas.budget, "Number of sampled candidates")->capture_default_str();

  // minimize
  printmlp::MinimizeOptions mz;
  std::string technique = "combined";
  double sparsity_max = 0.5;
  auto* c_min = app.add_subcommand("minimize", "Search quantization, pruning and weight sharing for a model");
  c_min->add_option("model", mz.model, "model.json written by 'nas'")->required();
  c_min->add_option("--technique", technique, "combined | quant | prune | cluster")->capture_default_str();
  c_min->add_option("--pop", mz.pop, "NSGA-II population size")->capture_default_str();
  c_min->add_option("--gens", mz.gens, "NSGA-II generations")->capture_default_str();
  c_min->add_option("--sparsity-max", sparsity_max, "Largest pruning level (0.0-0.5)")->capture_default_str();
  c_min->add_option("--qat-epochs", mz.qat_epochs, "Retraining epochs per evaluated design")->capture_default_str();
  c_min->add_flag("--resume", mz.resume, "Continue from <out>/checkpoint.jsonl");

  // emit
  printmlp::EmitOptions em;
  std::optional<std::size_t> pick;
  auto* c_emit = app.add_subcommand("emit", "Write Verilog, golden vectors and a report for one front member");
  c_emit->add_option("front", em.front, "front.json written by 'minimize'")->required();
  c_emit->add_option("--pick", pick, "Front member index (overrides --max-loss)");
  c_emit->add_option("--max-loss", em.max_loss, "Pick the smallest design losing at most this accuracy")
      ->capture_default_str();
  c_emit->add_option("--delay-ms", em.delay_ms, "Delay constraint for voltage scaling")->capture_default_str();
  c_emit->add_option("--vectors", em.vectors, "Number of golden test vectors")->capture_default_str();
  c_emit->add_option("--module", em.module_name, "Verilog module name")->capture_default_str();

  // pareto-export
  printmlp::ExportOptions ex;
  auto* c_exp = app.add_subcommand("pareto-export", "Front as CSV normalized to the un-minimized baseline");
  c_exp->add_option("front", ex.front, "front.json")->required();
  c_exp->add_option("--model", ex.model, "Baseline model (default: the one recorded in the front)");

  // fixture
  printmlp::FixtureOptions fx;
  auto* c_fix = app.add_subcommand("fixture", "Write a synthetic Gaussian-blob dataset as CSV");
  c_fix->add_option("--classes", fx.classes)->capture_default_str();
  c_fix->add_option("--features", fx.features)->capture_default_str();
  c_fix->add_option("--rows", fx.rows)->capture_default_str();
  c_fix->add_option("--separation", fx.separation)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*c_nas) {
      nas.seed = seed;
      nas.threads = threads;
      nas.gate_lib = gate_lib;
      nas.out = out;
      nas.delimiter = delimiter_from(nas_delim);
      printmlp::cmd_nas(nas);
      std::cout << "wrote " << out << "/model.json\n";
    } else if (*c_min) {
      mz.technique = printmlp::technique_from_string(technique);
      mz.seed = seed;
      mz.threads = threads;
      mz.gate_lib = gate_lib;
      mz.out = out;
      if (!(sparsity_max >= 0.0 && sparsity_max <= 0.5)) throw printmlp::InputError("--sparsity-max must lie in [0, 0.5]");
      mz.sparsity_max_tenths = static_cast<int>(std::floor(sparsity_max * 10.0 + 1e-9));
      auto r = printmlp::cmd_minimize(mz);
      std::cout << "baseline accuracy " << r.context.baseline_accuracy << ", area " << r.context.baseline_area << "\n";
      std::cout << "front of " << r.front.size() << " designs written to " << out << "/front.json\n";
    } else if (*c_emit) {
      em.pick = pick;
      em.gate_lib = gate_lib;
      em.out = out;
      auto r = printmlp::cmd_emit(em);
      std::cout << "member " << r.member << " at " << r.voltage << " V written to " << out << "\n";
    } else if (*c_exp) {
      ex.gate_lib = gate_lib;
      ex.out = out == "out" ? "pareto.csv" : out;
      printmlp::cmd_pareto_export(ex);
      std::cout << "wrote " << ex.out << "\n";
    } else if (*c_fix) {
      fx.seed = seed;
      fx.out = out == "out" ? "blobs.csv" : out;
      printmlp::cmd_fixture(fx);
      std::cout << "wrote " << fx.out << "\n";
    }
  } catch (const printmlp::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const printmlp::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}

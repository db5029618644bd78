// itergraph command line: train, eval, robustness, convergence, timing.
#include "itergraph/experiment.hpp"
#include "itergraph/numkit/errors.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace itergraph;

namespace {

enum Exit { ok = 0, usage = 1, data = 2, numerical = 3 };

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string seeds;
  std::string out;
  unsigned jobs = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "config file (key = value)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", c.sets, "override a config key, e.g. --set lambda=0.5");
  cmd->add_option("--seeds", c.seeds, "comma-separated seed list (overrides 'seeds')");
  cmd->add_option("-o,--out", c.out, "output directory for report.jsonl, summary.txt, ...");
  cmd->add_option("-j,--jobs", c.jobs, "seeds trained concurrently")->check(CLI::PositiveNumber);
}

ExperimentConfig resolve(const Common& c) {
  std::vector<std::string> overrides = c.sets;
  if (!c.seeds.empty()) overrides.push_back("seeds=" + c.seeds);
  return load_config(c.config, overrides);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void emit(const Common& c, const ExperimentConfig& config, const ExperimentReport& report) {
  std::cout << report.summary_text();
  if (c.out.empty()) return;
  const fs::path dir(c.out);
  fs::create_directories(dir);
  write_file(dir / "report.jsonl", report.to_jsonl());
  write_file(dir / "summary.txt", report.summary_text());
  write_file(dir / "config.resolved", to_config_text(config));
  if (!report.curves.empty()) write_file(dir / "curves.csv", report.curves_csv());
  std::cout << "wrote " << dir.string() << '\n';
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double r = std::stod(item, &used);
      if (used != item.size() || r < 0.0 || r > 1.0) throw std::invalid_argument(item);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw ConfigError("bad ratio '" + item + "' (expected numbers in [0, 1])");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint graph structure and node embedding learning"};
  app.require_subcommand(1);

  Common train_c, eval_c, robust_c, conv_c, timing_c;
  std::string model_path, ratios = "0.25,0.5,0.75", perturb = "delete";
  bool retrain_fixed = false;
  std::vector<Index> sizes{250, 500, 1000, 2000};

  auto* train = app.add_subcommand("train", "train every seed and report test accuracy");
  add_common(train, train_c);
  train->add_option("--save-model", model_path, "save the first seed's model as JSON");

  auto* eval = app.add_subcommand("eval", "score a saved model on the test split");
  add_common(eval, eval_c);
  eval->add_option("-m,--model", model_path, "model JSON from train --save-model")->required();

  auto* robust = app.add_subcommand("robustness", "accuracy under edge deletion or addition");
  add_common(robust, robust_c);
  robust->add_option("--mode", perturb, "delete or add")->check(CLI::IsMember({"delete", "add"}));
  robust->add_option("--ratios", ratios, "comma-separated perturbation ratios");

  auto* conv = app.add_subcommand("convergence", "per-iteration delta_A and accuracy");
  add_common(conv, conv_c);
  conv->add_flag("--retrain-fixed", retrain_fixed, "train a separate model per fixed iteration count");

  auto* timing = app.add_subcommand("timing", "training time with and without iterations");
  add_common(timing, timing_c);
  timing->add_option("--sizes", sizes, "synthetic graph sizes for forward-pass scaling")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }

  try {
    if (train->parsed()) {
      const auto config = resolve(train_c);
      std::vector<TrainedModel> models;
      const auto report = run_train(config, {train_c.jobs}, model_path.empty() ? nullptr : &models);
      emit(train_c, config, report);
      if (!model_path.empty() && !models.empty()) {
        save_model(model_path, models.front().fit.params, config, models.front().seed);
      }
      return report.failed_seeds.size() == config.seeds.size() ? numerical : ok;
    }
    if (eval->parsed()) {
      const auto config = resolve(eval_c);
      emit(eval_c, config, run_eval(config, model_path));
    } else if (robust->parsed()) {
      const auto config = resolve(robust_c);
      const auto mode = perturb == "add" ? PerturbMode::add : PerturbMode::remove;
      emit(robust_c, config, run_robustness(config, mode, parse_ratios(ratios), {robust_c.jobs}));
    } else if (conv->parsed()) {
      const auto config = resolve(conv_c);
      emit(conv_c, config, run_convergence(config, retrain_fixed, {conv_c.jobs}));
    } else if (timing->parsed()) {
      const auto config = resolve(timing_c);
      emit(timing_c, config, run_timing(config, sizes, {timing_c.jobs}));
    }
    return ok;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return usage;
  } catch (const ContractError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return usage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return data;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return numerical;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return numerical;
  }
}

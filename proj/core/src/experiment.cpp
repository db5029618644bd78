#include "itergraph/experiment.hpp"

#include "itergraph/numkit/errors.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <random>
#include <sstream>

namespace itergraph {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Runs fn(i) for i in [0, count), up to `jobs` at a time; results keep index order.
template <typename T>
std::vector<T> parallel_map(std::size_t count, unsigned jobs, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(count);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  for (std::size_t begin = 0; begin < count; begin += jobs) {
    const std::size_t end = std::min(count, begin + jobs);
    std::vector<std::future<T>> pending;
    for (std::size_t i = begin; i < end; ++i) pending.push_back(std::async(std::launch::async, fn, i));
    for (std::size_t i = begin; i < end; ++i) out[i] = pending[i - begin].get();
  }
  return out;
}

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != rows * cols) throw DataError("model file: matrix size mismatch");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

json summary_json(const Summary& s) {
  return json{{"mean", s.mean}, {"std", s.stddev}, {"count", s.count}};
}

std::string pct(const Summary& s) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << 100.0 * s.mean << " +- " << 100.0 * s.stddev;
  return ss.str();
}

RunConfig gcn_equivalent(RunConfig config) {
  config = ablation_mode(config, AblationMode::no_iterative);
  config.alpha = config.beta = config.gamma = 0.0;
  config.lambda = 1.0;
  return config;
}

}  // namespace

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

TrainedModel train_model(const Dataset& dataset, RunConfig config, std::uint64_t seed) {
  config.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  FitResult fr = fit(dataset, config);
  return TrainedModel{seed, config, std::move(fr), seconds_since(start)};
}

SeedRun score_model(TrainedModel& model, const Dataset& dataset) {
  SeedRun run;
  run.seed = model.seed;
  run.seconds = model.seconds;
  run.best_epoch = model.fit.history.best_epoch;
  run.epochs = static_cast<int>(model.fit.history.epochs.size());
  run.dev_accuracy = model.fit.history.best_dev_accuracy;
  const Evaluation ev = evaluate(model.fit.params, model.fit.context, model.config, dataset.test);
  run.test_accuracy = ev.accuracy;
  run.test_iterations = static_cast<int>(ev.trace.iterations.size());
  run.stop_reason = to_string(ev.trace.reason);
  return run;
}

ExperimentReport run_train(const ExperimentConfig& config, const RunOptions& options,
                           std::vector<TrainedModel>* models) {
  const Dataset dataset = load_experiment_dataset(config.data);
  ExperimentReport report;
  report.command = "train";
  report.config = to_key_values(config);
  report.seeds = config.seeds;

  struct Outcome {
    SeedRun run;
    std::optional<TrainedModel> model;
  };
  auto outcomes = parallel_map<Outcome>(config.seeds.size(), options.jobs, [&](std::size_t i) {
    Outcome o;
    o.run.seed = config.seeds[i];
    try {
      TrainedModel m = train_model(dataset, config.run, config.seeds[i]);
      o.run = score_model(m, dataset);
      if (models != nullptr) o.model = std::move(m);
    } catch (const std::exception& e) {
      spdlog::error("seed {} failed: {}", config.seeds[i], e.what());
      o.run.error = e.what();
    }
    return o;
  });

  std::vector<double> accs;
  for (auto& o : outcomes) {
    if (o.run.error.empty()) {
      accs.push_back(o.run.test_accuracy);
    } else {
      report.failed_seeds.push_back(o.run.seed);
    }
    report.runs.push_back(o.run);
    if (models != nullptr && o.model) models->push_back(std::move(*o.model));
  }
  report.test_accuracy = summarize(accs);
  return report;
}

ExperimentReport run_robustness(const ExperimentConfig& config, PerturbMode mode,
                                const std::vector<double>& ratios, const RunOptions& options) {
  const Dataset dataset = load_experiment_dataset(config.data);
  if (!dataset.adjacency)
    throw DataError("robustness: dataset '" + dataset.name + "' has no given graph (set 'edges')");
  ExperimentReport report;
  report.command = std::string("robustness-") + (mode == PerturbMode::remove ? "delete" : "add");
  report.config = to_key_values(config);
  report.seeds = config.seeds;

  const std::pair<const char*, RunConfig> variants[] = {{"learned", config.run},
                                                        {"gcn", gcn_equivalent(config.run)}};
  for (double ratio : ratios) {
    for (const auto& [name, run_config] : variants) {
      RobustnessRow row;
      row.ratio = ratio;
      row.variant = name;
      row.accuracies = parallel_map<double>(config.seeds.size(), options.jobs, [&](std::size_t i) {
        const std::uint64_t seed = config.seeds[i];
        Dataset perturbed = dataset;
        perturbed.adjacency = perturb_edges(*dataset.adjacency, ratio, mode, seed);
        TrainedModel m = train_model(perturbed, run_config, seed);
        return score_model(m, perturbed).test_accuracy;
      });
      row.summary = summarize(row.accuracies);
      report.robustness.push_back(std::move(row));
    }
  }
  return report;
}

ExperimentReport run_convergence(const ExperimentConfig& config, bool retrain_fixed,
                                 const RunOptions& options) {
  const Dataset dataset = load_experiment_dataset(config.data);
  ExperimentReport report;
  report.command = "convergence";
  report.config = to_key_values(config);
  report.seeds = config.seeds;

  auto curve = [&](std::uint64_t seed, const Evaluation& ev, const char* strategy, int fixed) {
    std::vector<CurvePoint> pts;
    for (const IterationRecord& rec : ev.trace.iterations) {
      pts.push_back(CurvePoint{seed, strategy, fixed, rec.iteration, rec.delta_a,
                               accuracy(rec.predictions, dataset.labels, dataset.test)});
    }
    return pts;
  };

  auto per_seed = parallel_map<std::pair<SeedRun, std::vector<CurvePoint>>>(
      config.seeds.size(), options.jobs, [&](std::size_t i) {
        const std::uint64_t seed = config.seeds[i];
        RunConfig dyn = config.run;
        dyn.stopping = StoppingMode::dynamic;
        TrainedModel m = train_model(dataset, dyn, seed);
        SeedRun run = score_model(m, dataset);
        const Evaluation ev = evaluate(m.fit.params, m.fit.context, m.config, dataset.test);
        std::vector<CurvePoint> pts = curve(seed, ev, "dynamic", 0);
        for (int k = 1; k <= config.run.max_iters; ++k) {
          RunConfig fixed = m.config;
          fixed.stopping = StoppingMode::fixed;
          fixed.max_iters = k;
          if (retrain_fixed) {
            TrainedModel mk = train_model(dataset, fixed, seed);
            const Evaluation evk = evaluate(mk.fit.params, mk.fit.context, mk.config, dataset.test);
            auto more = curve(seed, evk, "fixed", k);
            pts.insert(pts.end(), more.begin(), more.end());
          } else {
            const Evaluation evk = evaluate(m.fit.params, m.fit.context, fixed, dataset.test);
            auto more = curve(seed, evk, "fixed", k);
            pts.insert(pts.end(), more.begin(), more.end());
          }
        }
        return std::make_pair(run, pts);
      });

  std::vector<double> accs;
  for (auto& [run, pts] : per_seed) {
    accs.push_back(run.test_accuracy);
    report.runs.push_back(run);
    report.curves.insert(report.curves.end(), pts.begin(), pts.end());
  }
  report.test_accuracy = summarize(accs);
  return report;
}

double time_forward_pass(Index nodes, Index dim, const RunConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int classes = 3;
  Dataset ds;
  ds.name = "synthetic";
  ds.num_classes = classes;
  ds.features.resize(nodes, dim);
  ds.labels.resize(static_cast<std::size_t>(nodes));
  for (Index i = 0; i < nodes; ++i) {
    const int y = static_cast<int>(i % classes);
    ds.labels[static_cast<std::size_t>(i)] = y;
    for (Index j = 0; j < dim; ++j) ds.features(i, j) = noise(rng) + (j % classes == y ? 2.0 : 0.0);
  }
  for (Index i = 0; i < nodes; ++i) ds.train.push_back(i);
  RunConfig cfg = config;
  cfg.seed = seed;
  const GraphContext ctx = make_context(ds, cfg);
  ModelParams params = ModelParams::init(dim, classes, cfg);
  double best = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 3; ++rep) {
    const auto start = std::chrono::steady_clock::now();
    Tape tape(seed);
    tape.set_grad_enabled(false);
    forward_pass(tape, ctx, params, cfg, false, ds.train);
    best = std::min(best, seconds_since(start));
  }
  return best;
}

ExperimentReport run_timing(const ExperimentConfig& config, const std::vector<Index>& scaling_sizes,
                            const RunOptions& options) {
  const Dataset dataset = load_experiment_dataset(config.data);
  ExperimentReport report;
  report.command = "timing";
  report.config = to_key_values(config);
  report.seeds = config.seeds;

  const std::pair<const char*, RunConfig> variants[] = {
      {"full", config.run}, {"no-iterative", ablation_mode(config.run, AblationMode::no_iterative)}};
  for (const auto& [name, run_config] : variants) {
    TimingRow row;
    row.variant = name;
    row.seconds = parallel_map<double>(config.seeds.size(), options.jobs, [&](std::size_t i) {
      return train_model(dataset, run_config, config.seeds[i]).seconds;
    });
    row.summary = summarize(row.seconds);
    report.timing.push_back(std::move(row));
  }
  RunConfig scaling = config.run;
  scaling.stopping = StoppingMode::fixed;
  for (Index n : scaling_sizes)
    report.scaling.push_back({n, time_forward_pass(n, 32, scaling, 0)});
  return report;
}

ExperimentReport run_eval(const ExperimentConfig& config, const fs::path& model_file) {
  const Dataset dataset = load_experiment_dataset(config.data);
  std::uint64_t seed = 0;
  ModelParams params = load_model(model_file, &seed);
  RunConfig run = config.run;
  run.seed = seed;
  const GraphContext ctx = make_context(dataset, run);
  const Evaluation ev = evaluate(params, ctx, run, dataset.test);
  ExperimentReport report;
  report.command = "eval";
  report.config = to_key_values(config);
  report.seeds = {seed};
  SeedRun r;
  r.seed = seed;
  r.test_accuracy = ev.accuracy;
  r.test_iterations = static_cast<int>(ev.trace.iterations.size());
  r.stop_reason = to_string(ev.trace.reason);
  report.runs.push_back(r);
  const double acc[] = {ev.accuracy};
  report.test_accuracy = summarize(acc);
  return report;
}

void save_model(const fs::path& path, const ModelParams& params, const ExperimentConfig& config,
                std::uint64_t seed) {
  json j;
  j["seed"] = seed;
  j["config"] = to_key_values(config);
  j["params"] = {{"metric.raw", matrix_to_json(params.raw_metric.value)},
                 {"metric.embed", matrix_to_json(params.embed_metric.value)},
                 {"gcn.w1", matrix_to_json(params.w1.value)},
                 {"gcn.w2", matrix_to_json(params.w2.value)}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump() << '\n';
}

ModelParams load_model(const fs::path& path, std::uint64_t* seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path.string());
  try {
    const json j = json::parse(in);
    if (seed != nullptr) *seed = j.at("seed").get<std::uint64_t>();
    const json& p = j.at("params");
    return ModelParams{Tensor("metric.raw", matrix_from_json(p.at("metric.raw"))),
                       Tensor("metric.embed", matrix_from_json(p.at("metric.embed"))),
                       Tensor("gcn.w1", matrix_from_json(p.at("gcn.w1"))),
                       Tensor("gcn.w2", matrix_from_json(p.at("gcn.w2")))};
  } catch (const json::exception& e) {
    throw DataError("model file " + path.string() + ": " + e.what());
  }
}

std::string ExperimentReport::to_jsonl() const {
  std::ostringstream out;
  out << json{{"type", "config"}, {"command", command}, {"config", config}, {"seeds", seeds}}.dump() << '\n';
  for (const SeedRun& r : runs) {
    json j{{"type", "seed"},           {"seed", r.seed},
           {"test_accuracy", r.test_accuracy}, {"dev_accuracy", r.dev_accuracy},
           {"seconds", r.seconds},     {"best_epoch", r.best_epoch},
           {"epochs", r.epochs},       {"test_iterations", r.test_iterations},
           {"stop_reason", r.stop_reason}};
    if (!r.error.empty()) j["error"] = r.error;
    out << j.dump() << '\n';
  }
  for (const RobustnessRow& r : robustness)
    out << json{{"type", "robustness"}, {"ratio", r.ratio}, {"variant", r.variant},
                {"accuracies", r.accuracies}, {"summary", summary_json(r.summary)}}.dump()
        << '\n';
  for (const TimingRow& r : timing)
    out << json{{"type", "timing"}, {"variant", r.variant}, {"seconds", r.seconds},
                {"summary", summary_json(r.summary)}}.dump()
        << '\n';
  for (const ScalingRow& r : scaling)
    out << json{{"type", "scaling"}, {"nodes", r.nodes}, {"seconds", r.seconds}}.dump() << '\n';
  out << json{{"type", "summary"}, {"test_accuracy", summary_json(test_accuracy)},
              {"failed_seeds", failed_seeds}}.dump()
      << '\n';
  return out.str();
}

std::string ExperimentReport::summary_text() const {
  std::ostringstream out;
  out << command;
  if (auto it = config.find("dataset"); it != config.end()) out << " on " << it->second;
  out << '\n';
  for (const SeedRun& r : runs) {
    out << "  seed " << r.seed << ": ";
    if (!r.error.empty()) {
      out << "FAILED (" << r.error << ")\n";
      continue;
    }
    out << std::fixed << std::setprecision(2) << "test " << 100.0 * r.test_accuracy << "%  dev "
        << 100.0 * r.dev_accuracy << "%  best epoch " << r.best_epoch << "/" << r.epochs << "  "
        << r.seconds << " s  iterations " << r.test_iterations << " (" << r.stop_reason << ")\n";
  }
  if (!runs.empty()) out << "  test accuracy: " << pct(test_accuracy) << " over " << test_accuracy.count << " runs\n";
  for (const RobustnessRow& r : robustness)
    out << "  ratio " << r.ratio << "  " << std::setw(8) << r.variant << ": " << pct(r.summary) << '\n';
  for (const TimingRow& r : timing)
    out << std::fixed << std::setprecision(2) << "  " << std::setw(13) << r.variant << ": "
        << r.summary.mean << " +- " << r.summary.stddev << " s\n";
  for (const ScalingRow& r : scaling)
    out << "  forward pass n=" << r.nodes << ": " << std::setprecision(5) << r.seconds << " s\n";
  if (!failed_seeds.empty()) {
    out << "  failed seeds:";
    for (auto s : failed_seeds) out << ' ' << s;
    out << '\n';
  }
  return out.str();
}

std::string ExperimentReport::curves_csv() const {
  std::ostringstream out;
  out << "seed,strategy,fixed_iters,iteration,delta_a,test_accuracy\n";
  out << std::setprecision(17);
  for (const CurvePoint& p : curves) {
    out << p.seed << ',' << p.strategy << ',' << p.fixed_iters << ',' << p.iteration << ',';
    if (p.delta_a) {
      out << *p.delta_a;
    } else {
      out << "undefined";
    }
    out << ',' << p.test_accuracy << '\n';
  }
  return out.str();
}

}  // namespace itergraph

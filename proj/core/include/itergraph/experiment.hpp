#pragma once

#include "itergraph/config.hpp"
#include "itergraph/engine.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace itergraph {

// Mean and population standard deviation.
struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};
Summary summarize(std::span<const double> values);

struct TrainedModel {
  std::uint64_t seed = 0;
  RunConfig config;
  FitResult fit;
  double seconds = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  double dev_accuracy = 0.0;
  double seconds = 0.0;
  int best_epoch = 0;
  int epochs = 0;
  int test_iterations = 0;
  std::string stop_reason;
  std::string error;  // non-empty when the run failed
};

struct RobustnessRow {
  double ratio = 0.0;
  std::string variant;
  std::vector<double> accuracies;
  Summary summary;
};

struct CurvePoint {
  std::uint64_t seed = 0;
  std::string strategy;   // "dynamic" or "fixed"
  int fixed_iters = 0;    // 0 for dynamic
  int iteration = 0;
  std::optional<double> delta_a;
  double test_accuracy = 0.0;
};

struct TimingRow {
  std::string variant;
  std::vector<double> seconds;
  Summary summary;
};

struct ScalingRow {
  Index nodes = 0;
  double seconds = 0.0;
};

struct ExperimentReport {
  std::string command;
  std::map<std::string, std::string> config;
  std::vector<std::uint64_t> seeds;
  std::vector<SeedRun> runs;
  Summary test_accuracy;
  std::vector<std::uint64_t> failed_seeds;
  std::vector<RobustnessRow> robustness;
  std::vector<CurvePoint> curves;
  std::vector<TimingRow> timing;
  std::vector<ScalingRow> scaling;

  // One JSON object per line: config, seed runs, summary, then extras.
  std::string to_jsonl() const;
  std::string summary_text() const;
  // iteration curves as CSV: seed,strategy,fixed_iters,iteration,delta_a,test_accuracy
  std::string curves_csv() const;
};

struct RunOptions {
  unsigned jobs = 1;  // seeds trained concurrently
};

TrainedModel train_model(const Dataset& dataset, RunConfig config, std::uint64_t seed);
SeedRun score_model(TrainedModel& model, const Dataset& dataset);

// fit + evaluate for every configured seed.
ExperimentReport run_train(const ExperimentConfig& config, const RunOptions& options = {},
                           std::vector<TrainedModel>* models = nullptr);

// Learned graph vs. the vanilla-GCN-equivalent configuration (lambda = 1, no
// iterations, no graph regularization) under edge deletions or additions.
ExperimentReport run_robustness(const ExperimentConfig& config, PerturbMode mode,
                                const std::vector<double>& ratios, const RunOptions& options = {});

// Inference-time delta_A / accuracy per iteration under dynamic stopping and
// for every fixed iteration count 1..T. With `retrain_fixed`, each fixed
// count is trained from scratch instead of reusing the dynamic model.
ExperimentReport run_convergence(const ExperimentConfig& config, bool retrain_fixed,
                                 const RunOptions& options = {});

// Wall-clock training time with and without iterative learning, plus forward
// pass time on synthetic graphs of the given sizes.
ExperimentReport run_timing(const ExperimentConfig& config, const std::vector<Index>& scaling_sizes,
                            const RunOptions& options = {});

// Test accuracy of a saved model.
ExperimentReport run_eval(const ExperimentConfig& config, const std::filesystem::path& model_file);

// Seconds for one inference forward pass on a synthetic n-node problem.
double time_forward_pass(Index nodes, Index dim, const RunConfig& config, std::uint64_t seed);

void save_model(const std::filesystem::path& path, const ModelParams& params,
                const ExperimentConfig& config, std::uint64_t seed);
ModelParams load_model(const std::filesystem::path& path, std::uint64_t* seed = nullptr);

}  // namespace itergraph

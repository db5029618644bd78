#pragma once

#include "itergraph/data.hpp"
#include "itergraph/graphreg.hpp"
#include "itergraph/numkit/tape.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace itergraph {

enum class AblationMode { full, no_graph_reg, no_iterative };
enum class StoppingMode { dynamic, fixed };

std::string to_string(AblationMode mode);
std::string to_string(StoppingMode mode);
AblationMode parse_ablation(const std::string& text);
StoppingMode parse_stopping(const std::string& text);

// Every hyperparameter of a training run.
struct RunConfig {
  double lambda = 0.8;       // weight of the initial graph
  double eta = 0.7;          // weight of the refined graph against the first learned one
  double alpha = 0.1;        // smoothness
  double beta = 0.1;         // connectivity
  double gamma = 0.3;        // sparsity
  Index knn = 20;            // kNN size when no graph is given
  double epsilon = 0.75;     // sparsification threshold
  Index heads = 1;           // metric heads m
  double stop_delta = 1e-3;  // dynamic stopping threshold
  int max_iters = 10;        // T
  Index hidden = 16;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  double dropout = 0.5;       // after the first GCN layer in the initialization pass
  double iter_dropout = 0.5;  // after the first GCN layer inside refinement iterations
  int max_epochs = 1000;
  int patience = 100;
  std::uint64_t seed = 0;
  AblationMode ablation = AblationMode::full;
  StoppingMode stopping = StoppingMode::dynamic;
  bool iterative = true;      // false skips the refinement loop
  bool sparse_graph = true;   // sparse learned graphs; false runs the dense reference ops

  GraphRegWeights reg_weights() const { return {alpha, beta, gamma}; }
  void validate() const;
};

// full: unchanged; no_graph_reg: alpha = beta = gamma = 0; no_iterative:
// initialization pass only.
RunConfig ablation_mode(RunConfig config, AblationMode mode);

// Graph-side inputs shared by every forward pass of one run.
struct GraphContext {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;
  Matrix initial_adjacency;     // A0 (given or kNN)
  Matrix normalized_initial;    // L0
  SparseMatrix normalized_initial_sparse;
  Matrix feature_gram;          // X X^T for the sparse smoothness term; empty if unused
};

GraphContext make_context(const Dataset& dataset, const RunConfig& config);

struct ModelParams {
  Tensor raw_metric;    // heads x input dim
  Tensor embed_metric;  // heads x hidden
  Tensor w1;
  Tensor w2;

  static ModelParams init(Index input_dim, Index classes, const RunConfig& config);
  std::vector<Tensor*> all();
};

enum class StopDecision { proceed, stop };
enum class StopReason { none, converged, max_iters };
std::string to_string(StopReason reason);

// Continue iff (t == 0 or |A_t - A_prev|_F^2 > delta |A_0|_F^2) and t < T.
// Dynamic mode only; a zero |A_0| makes the threshold zero.
StopDecision stopping_check(const Matrix& current, const Matrix& previous, const Matrix& initial,
                            double delta, int t, int max_iters);
// The same rule on precomputed |A_t - A_prev|_F^2 and |A_0|_F^2.
StopDecision stopping_rule(double change_sq, double initial_sq, double delta, int t, int max_iters);
StopDecision stopping_check(const SparseMatrix& current, const SparseMatrix& previous,
                            const SparseMatrix& initial, double delta, int t, int max_iters);

// |A_t - A_prev|_F^2 / |A_t|_F^2; empty when |A_t| = 0.
std::optional<double> delta_a(const Matrix& current, const Matrix& previous);
std::optional<double> delta_a(const SparseMatrix& current, const SparseMatrix& previous);

struct IterationRecord {
  int iteration = 0;
  Var adjacency;                  // A^(t), valid while the tape lives (sparse or dense)
  double change_sq = 0.0;         // |A^(t) - A^(t-1)|_F^2 (0 for t = 0)
  std::optional<double> delta_a;  // undefined for t = 0 or |A^(t)| = 0
  double pred_loss = 0.0;
  double graph_loss = 0.0;
  double loss = 0.0;
  std::vector<int> predictions;   // argmax per node after this iteration
};

struct IterationTrace {
  IterationRecord initial;
  std::vector<IterationRecord> iterations;
  StopReason reason = StopReason::none;
  double initial_norm_sq = 0.0;
  Index floored_degrees = 0;
};

struct ForwardResult {
  Var loss;
  Var logits;
  Matrix probabilities;
  IterationTrace trace;
};

// One pass of the joint graph/embedding procedure: learn A^(0) from raw
// features, then refine from embeddings until the stopping rule fires. The
// returned loss is L^(0) + mean(L^(1..t)) over `loss_rows`. Throws
// NumericalError naming the iteration if a loss is not finite.
ForwardResult forward_pass(Tape& tape, const GraphContext& context, ModelParams& params,
                           const RunConfig& config, bool training,
                           std::span<const Index> loss_rows);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
  double dev_loss = 0.0;
  int iterations = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_dev_accuracy = 0.0;
  double best_dev_loss = 0.0;
  bool early_stopped = false;
};

struct FitResult {
  ModelParams params;
  TrainHistory history;
  GraphContext context;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, TrainHistory history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

// Adam over all parameters, dev evaluation every epoch, early stopping after
// `patience` epochs without improvement. Returns the best-dev snapshot.
// Improvement: higher dev accuracy, or equal accuracy with lower dev loss.
FitResult fit(const Dataset& dataset, const RunConfig& config);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
  IterationTrace trace;
  std::vector<int> predictions;
};

// Inference-mode forward pass (no dropout, same stopping rule) scored on `mask`.
Evaluation evaluate(ModelParams& params, const GraphContext& context, const RunConfig& config,
                    std::span<const Index> mask);

double accuracy(std::span<const int> predictions, std::span<const int> labels,
                std::span<const Index> mask);
std::vector<int> argmax_rows(const Matrix& scores);

}  // namespace itergraph

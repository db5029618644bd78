#include "itergraph/engine.hpp"

#include "itergraph/gnn.hpp"
#include "itergraph/metric.hpp"
#include "itergraph/numkit/adam.hpp"
#include "itergraph/numkit/errors.hpp"
#include "itergraph/numkit/ops.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <random>

namespace itergraph {

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::full: return "full";
    case AblationMode::no_graph_reg: return "no-graph-reg";
    case AblationMode::no_iterative: return "no-iterative";
  }
  return "?";
}

std::string to_string(StoppingMode mode) {
  return mode == StoppingMode::dynamic ? "dynamic" : "fixed";
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::none: return "none";
    case StopReason::converged: return "converged";
    case StopReason::max_iters: return "max-iters";
  }
  return "?";
}

AblationMode parse_ablation(const std::string& text) {
  if (text == "full") return AblationMode::full;
  if (text == "no-graph-reg") return AblationMode::no_graph_reg;
  if (text == "no-iterative") return AblationMode::no_iterative;
  throw ContractError("unknown ablation '" + text + "' (expected full, no-graph-reg or no-iterative)");
}

StoppingMode parse_stopping(const std::string& text) {
  if (text == "dynamic") return StoppingMode::dynamic;
  if (text == "fixed") return StoppingMode::fixed;
  throw ContractError("unknown stopping mode '" + text + "' (expected dynamic or fixed)");
}

void RunConfig::validate() const {
  require(lambda >= 0.0 && lambda <= 1.0, "config: lambda must lie in [0, 1]");
  require(eta >= 0.0 && eta <= 1.0, "config: eta must lie in [0, 1]");
  reg_weights().validate();
  require(stop_delta > 0.0, "config: stop_delta must be positive");
  require(max_iters >= 1, "config: max_iters must be at least 1");
  require(knn >= 1, "config: knn must be at least 1");
  require(epsilon >= 0.0, "config: epsilon must be nonnegative");
  require(heads >= 1, "config: heads must be at least 1");
  require(hidden >= 1, "config: hidden must be at least 1");
  require(learning_rate > 0.0, "config: learning_rate must be positive");
  require(weight_decay >= 0.0, "config: weight_decay must be nonnegative");
  require(dropout >= 0.0 && dropout < 1.0, "config: dropout must lie in [0, 1)");
  require(iter_dropout >= 0.0 && iter_dropout < 1.0, "config: iter_dropout must lie in [0, 1)");
  require(max_epochs >= 1, "config: max_epochs must be at least 1");
  require(patience >= 1, "config: patience must be at least 1");
}

RunConfig ablation_mode(RunConfig config, AblationMode mode) {
  config.ablation = mode;
  switch (mode) {
    case AblationMode::full:
      break;
    case AblationMode::no_graph_reg:
      config.alpha = config.beta = config.gamma = 0.0;
      break;
    case AblationMode::no_iterative:
      config.iterative = false;
      break;
  }
  return config;
}

GraphContext make_context(const Dataset& dataset, const RunConfig& config) {
  dataset.validate();
  GraphContext ctx;
  ctx.features = dataset.features;
  ctx.labels = dataset.labels;
  ctx.num_classes = dataset.num_classes;
  ctx.initial_adjacency = dataset.adjacency ? *dataset.adjacency : knn_graph(dataset.features, config.knn);
  ctx.normalized_initial = normalize_initial(ctx.initial_adjacency);
  ctx.normalized_initial_sparse = ctx.normalized_initial.sparseView(0.0, 0.0);
  ctx.normalized_initial_sparse.makeCompressed();
  if (config.sparse_graph && config.alpha != 0.0) ctx.feature_gram = ctx.features * ctx.features.transpose();
  return ctx;
}

ModelParams ModelParams::init(Index input_dim, Index classes, const RunConfig& config) {
  std::mt19937_64 rng(config.seed);
  MetricParams raw = make_metric_params("metric.raw", config.heads, input_dim, config.epsilon, rng);
  MetricParams embed = make_metric_params("metric.embed", config.heads, config.hidden, config.epsilon, rng);
  GcnParams gcn = make_gcn_params(input_dim, config.hidden, classes, rng);
  return ModelParams{std::move(raw.weights), std::move(embed.weights), std::move(gcn.w1),
                     std::move(gcn.w2)};
}

std::vector<Tensor*> ModelParams::all() { return {&raw_metric, &embed_metric, &w1, &w2}; }

namespace {

template <typename M>
StopDecision stopping_check_impl(const M& current, const M& previous, const M& initial,
                                 double delta, int t, int max_iters) {
  require(t >= 0, "stopping_check: negative iteration");
  if (t >= max_iters) return StopDecision::stop;
  if (t == 0) return StopDecision::proceed;
  return stopping_rule(squared_distance(current, previous), initial.squaredNorm(), delta, t, max_iters);
}

template <typename M>
std::optional<double> delta_a_impl(const M& current, const M& previous) {
  const double denom = current.squaredNorm();
  if (denom == 0.0) return std::nullopt;
  return squared_distance(current, previous) / denom;
}

}  // namespace

StopDecision stopping_rule(double change_sq, double initial_sq, double delta, int t, int max_iters) {
  require(t >= 0, "stopping_check: negative iteration");
  if (t >= max_iters) return StopDecision::stop;
  if (t == 0) return StopDecision::proceed;
  if (initial_sq == 0.0) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      spdlog::warn("stopping_check: |A(0)|_F = 0, stopping only when consecutive graphs are equal");
  }
  return change_sq > delta * initial_sq ? StopDecision::proceed : StopDecision::stop;
}

StopDecision stopping_check(const Matrix& current, const Matrix& previous, const Matrix& initial,
                            double delta, int t, int max_iters) {
  return stopping_check_impl(current, previous, initial, delta, t, max_iters);
}

StopDecision stopping_check(const SparseMatrix& current, const SparseMatrix& previous,
                            const SparseMatrix& initial, double delta, int t, int max_iters) {
  return stopping_check_impl(current, previous, initial, delta, t, max_iters);
}

std::optional<double> delta_a(const Matrix& current, const Matrix& previous) {
  return delta_a_impl(current, previous);
}

std::optional<double> delta_a(const SparseMatrix& current, const SparseMatrix& previous) {
  return delta_a_impl(current, previous);
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Index i = 0; i < scores.rows(); ++i) {
    Index best = 0;
    scores.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels,
                std::span<const Index> mask) {
  require(!mask.empty(), "accuracy: empty node mask");
  std::size_t hits = 0;
  for (Index i : mask)
    if (predictions[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(i)]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(mask.size());
}

namespace {

double squared_norm(const Var& a) {
  return a.is_sparse() ? a.sparse().squaredNorm() : a.value().squaredNorm();
}

double change_squared(const Var& a, const Var& b) {
  return a.is_sparse() ? squared_distance(a.sparse(), b.sparse()) : squared_distance(a.value(), b.value());
}

void ensure_finite(double value, const char* what, int iteration) {
  if (!std::isfinite(value))
    throw NumericalError(std::string("forward_pass: non-finite ") + what + " at iteration " +
                         std::to_string(iteration));
}

}  // namespace

ForwardResult forward_pass(Tape& tape, const GraphContext& ctx, ModelParams& params,
                           const RunConfig& config, bool training,
                           std::span<const Index> loss_rows) {
  require(!loss_rows.empty(), "forward_pass: empty loss mask");
  require(ctx.features.cols() == params.raw_metric.cols() && ctx.features.cols() == params.w1.rows(),
          "forward_pass: feature dimension does not match the parameters");
  const GraphRegWeights weights = config.reg_weights();

  ForwardResult out;
  IterationTrace& trace = out.trace;
  RegDiagnostics diag;

  const Var x = tape.constant(ctx.features);
  const bool sparse = config.sparse_graph;
  const Var l0 = sparse ? tape.constant(ctx.normalized_initial_sparse) : tape.constant(ctx.normalized_initial);
  auto learn_graph = [&](const Var& nodes, const Var& metric) {
    return sparse ? sparse_cosine_graph(nodes, metric, config.epsilon)
                  : epsilon_sparsify(multi_head_cosine(nodes, metric), config.epsilon);
  };
  const Var w_raw = tape.leaf(params.raw_metric);
  const Var w_embed = tape.leaf(params.embed_metric);
  const Var w1 = tape.leaf(params.w1);
  const Var w2 = tape.leaf(params.w2);

  // Initialization: graph from raw features.
  const Var a0 = learn_graph(x, w_raw);
  const MixedAdjacency mixed0 = mix_with_initial(a0, l0, config.lambda);
  GcnOutput gcn = gcn_forward(mixed0.matrix, x, w1, w2, config.dropout, training);
  const Var pred0 = prediction_loss(gcn.logits, ctx.labels, loss_rows);
  const Matrix* gram = ctx.feature_gram.size() > 0 ? &ctx.feature_gram : nullptr;
  const Var reg0 = graph_reg_loss(a0, x, weights, &diag, gram);
  const Var loss0 = ops::add(pred0, reg0);
  ensure_finite(loss0.scalar(), "loss", 0);

  trace.initial = IterationRecord{0, a0, 0.0, std::nullopt, pred0.scalar(), reg0.scalar(),
                                  loss0.scalar(), argmax_rows(gcn.logits.value())};
  trace.initial_norm_sq = squared_norm(a0);

  Var z_prev = gcn.embedding;
  Var a_prev = a0;
  Var logits = gcn.logits;
  Var iter_sum;
  int t = 0;
  bool converged = false;

  auto keep_going = [&]() {
    if (!config.iterative) return false;
    if (config.stopping == StoppingMode::fixed) return t < config.max_iters;
    const double change = t == 0 ? 0.0 : trace.iterations.back().change_sq;
    return stopping_rule(change, trace.initial_norm_sq, config.stop_delta, t, config.max_iters) ==
           StopDecision::proceed;
  };

  while (keep_going()) {
    ++t;
    const Var at = learn_graph(z_prev, w_embed);
    const MixedAdjacency mixed_t = mix_with_initial(at, l0, config.lambda);
    const MixedAdjacency blended = mix_iterations(mixed_t, mixed0, config.eta);
    gcn = gcn_forward(blended.matrix, x, w1, w2, config.iter_dropout, training);
    const Var pred_t = prediction_loss(gcn.logits, ctx.labels, loss_rows);
    const Var reg_t = graph_reg_loss(at, x, weights, &diag, gram);
    const Var loss_t = ops::add(pred_t, reg_t);
    ensure_finite(loss_t.scalar(), "loss", t);

    IterationRecord rec;
    rec.iteration = t;
    rec.adjacency = at;
    rec.change_sq = change_squared(at, a_prev);
    const double at_norm = squared_norm(at);
    if (at_norm != 0.0) rec.delta_a = rec.change_sq / at_norm;
    rec.pred_loss = pred_t.scalar();
    rec.graph_loss = reg_t.scalar();
    rec.loss = loss_t.scalar();
    rec.predictions = argmax_rows(gcn.logits.value());
    trace.iterations.push_back(std::move(rec));

    iter_sum = iter_sum.valid() ? ops::add(iter_sum, loss_t) : loss_t;
    z_prev = gcn.embedding;
    a_prev = at;
    logits = gcn.logits;
  }

  if (t > 0) {
    const IterationRecord& last = trace.iterations.back();
    converged = config.stopping == StoppingMode::dynamic &&
                !(last.change_sq > config.stop_delta * trace.initial_norm_sq);
    trace.reason = converged ? StopReason::converged : StopReason::max_iters;
    out.loss = ops::combine(loss0, 1.0, iter_sum, 1.0 / static_cast<double>(t));
  } else {
    trace.reason = StopReason::none;
    out.loss = loss0;
  }
  ensure_finite(out.loss.scalar(), "aggregate loss", t);
  trace.floored_degrees = diag.floored_degrees;
  out.logits = logits;
  out.probabilities = ops::softmax_rows(logits.value());
  return out;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Evaluation evaluate(ModelParams& params, const GraphContext& context, const RunConfig& config,
                    std::span<const Index> mask) {
  require(!mask.empty(), "evaluate: empty node mask");
  Tape tape(0);
  tape.set_grad_enabled(false);
  ForwardResult fr = forward_pass(tape, context, params, config, false, mask);
  Evaluation ev;
  ev.predictions = argmax_rows(fr.probabilities);
  ev.accuracy = accuracy(ev.predictions, context.labels, mask);
  ev.loss = fr.trace.iterations.empty() ? fr.trace.initial.pred_loss : fr.trace.iterations.back().pred_loss;
  ev.trace = std::move(fr.trace);
  // Adjacency handles die with the tape.
  ev.trace.initial.adjacency = Var();
  for (auto& rec : ev.trace.iterations) rec.adjacency = Var();
  return ev;
}

FitResult fit(const Dataset& dataset, const RunConfig& config) {
  config.validate();
  require(!dataset.train.empty(), "fit: empty training set");
  FitResult result{ModelParams::init(dataset.dim(), dataset.num_classes, config), {}, make_context(dataset, config)};
  ModelParams& params = result.params;
  TrainHistory& history = result.history;
  const GraphContext& ctx = result.context;

  ModelParams working = params;
  AdamOptions opts;
  opts.learning_rate = config.learning_rate;
  opts.weight_decay = config.weight_decay;
  Adam adam(working.all(), opts);

  double best_acc = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    adam.zero_grad();
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      Tape tape(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
      ForwardResult fr = forward_pass(tape, ctx, working, config, true, dataset.train);
      rec.train_loss = fr.loss.scalar();
      rec.iterations = static_cast<int>(fr.trace.iterations.size());
      tape.backward(fr.loss);
      adam.step();
    } catch (const NumericalError& e) {
      throw TrainingDiverged(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")", history);
    }

    if (dataset.dev.empty()) {
      history.epochs.push_back(rec);
      params = working;
      history.best_epoch = epoch;
      continue;
    }
    const Evaluation ev = evaluate(working, ctx, config, dataset.dev);
    rec.dev_accuracy = ev.accuracy;
    rec.dev_loss = ev.loss;
    history.epochs.push_back(rec);
    if (ev.accuracy > best_acc || (ev.accuracy == best_acc && ev.loss < best_loss)) {
      best_acc = ev.accuracy;
      best_loss = ev.loss;
      params = working;
      history.best_epoch = epoch;
      history.best_dev_accuracy = ev.accuracy;
      history.best_dev_loss = ev.loss;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      history.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace itergraph

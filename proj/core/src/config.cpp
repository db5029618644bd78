#include "itergraph/config.hpp"

#include "itergraph/numkit/errors.hpp"

#include <boost/program_options.hpp>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace itergraph {
namespace po = boost::program_options;
namespace fs = std::filesystem;

namespace {

po::options_description describe() {
  po::options_description d("config");
  // clang-format off
  d.add_options()
    ("dataset", po::value<std::string>(), "dataset name")
    ("features", po::value<std::string>(), "features CSV")
    ("labels", po::value<std::string>(), "labels file")
    ("edges", po::value<std::string>(), "edge list (optional)")
    ("train_file", po::value<std::string>(), "train node indices")
    ("dev_file", po::value<std::string>(), "dev node indices")
    ("test_file", po::value<std::string>(), "test node indices")
    ("train", po::value<Index>(), "train count")
    ("dev", po::value<Index>(), "dev count")
    ("test", po::value<std::string>(), "test count or 'rest'")
    ("split_seed", po::value<std::uint64_t>(), "split seed")
    ("feature_norm", po::value<std::string>(), "none | standardize | row_l1")
    ("lambda", po::value<double>(), "initial-graph weight")
    ("eta", po::value<double>(), "refined-graph weight")
    ("alpha", po::value<double>(), "smoothness weight")
    ("beta", po::value<double>(), "connectivity weight")
    ("gamma", po::value<double>(), "sparsity weight")
    ("knn", po::value<Index>(), "kNN size")
    ("epsilon", po::value<double>(), "sparsification threshold")
    ("heads", po::value<Index>(), "metric heads")
    ("stop_delta", po::value<double>(), "stopping threshold")
    ("max_iters", po::value<int>(), "maximum refinement iterations")
    ("hidden", po::value<Index>(), "hidden size")
    ("learning_rate", po::value<double>(), "Adam learning rate")
    ("weight_decay", po::value<double>(), "L2 weight decay")
    ("dropout", po::value<double>(), "dropout in the initialization pass")
    ("iter_dropout", po::value<double>(), "dropout inside refinement iterations")
    ("max_epochs", po::value<int>(), "epoch limit")
    ("patience", po::value<int>(), "early-stopping patience")
    ("seeds", po::value<std::string>(), "comma-separated run seeds")
    ("ablation", po::value<std::string>(), "full | no-graph-reg | no-iterative")
    ("stopping", po::value<std::string>(), "dynamic | fixed");
  // clang-format on
  return d;
}

std::string keys_list() {
  std::string out;
  for (const auto& k : config_keys()) out += (out.empty() ? "" : ", ") + k;
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first == std::string::npos) continue;
    const std::string t = item.substr(first, last - first + 1);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) throw ConfigError("seeds: invalid seed '" + t + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  return seeds;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace

std::vector<std::string> config_keys() {
  const po::options_description d = describe();
  std::vector<std::string> keys;
  for (const auto& opt : d.options()) keys.push_back(opt->long_name());
  return keys;
}

std::string to_string(FeatureNorm norm) {
  switch (norm) {
    case FeatureNorm::none: return "none";
    case FeatureNorm::standardize: return "standardize";
    case FeatureNorm::row_l1: return "row_l1";
  }
  return "?";
}

FeatureNorm parse_feature_norm(const std::string& text) {
  if (text == "none") return FeatureNorm::none;
  if (text == "standardize") return FeatureNorm::standardize;
  if (text == "row_l1") return FeatureNorm::row_l1;
  throw ConfigError("feature_norm: expected none, standardize or row_l1, got '" + text + "'");
}

ExperimentConfig parse_config(std::istream& in, const fs::path& base_dir,
                              const std::vector<std::string>& overrides) {
  const auto desc = describe();
  po::variables_map vm;
  try {
    // store() keeps the first value it sees, so overrides go in first, last one winning.
    for (auto it = overrides.rbegin(); it != overrides.rend(); ++it) {
      if (it->find('=') == std::string::npos)
        throw ConfigError("override '" + *it + "' is not of the form key=value");
      std::istringstream line(*it);
      po::store(po::parse_config_file(line, desc, false), vm);
    }
    po::store(po::parse_config_file(in, desc, false), vm);
    po::notify(vm);
  } catch (const po::unknown_option& e) {
    throw ConfigError(std::string(e.what()) + "; valid keys: " + keys_list());
  } catch (const po::error& e) {
    throw ConfigError(e.what());
  }

  ExperimentConfig cfg;
  RunConfig& r = cfg.run;
  DataSpec& d = cfg.data;
  auto get_str = [&](const char* k, auto&& fn) {
    if (vm.count(k)) fn(vm[k].as<std::string>());
  };
  auto get = [&](const char* k, auto& field) {
    using T = std::decay_t<decltype(field)>;
    if (vm.count(k)) field = vm[k].as<T>();
  };
  get_str("dataset", [&](const std::string& v) { d.name = v; });
  get_str("features", [&](const std::string& v) { d.features = resolve(base_dir, v); });
  get_str("labels", [&](const std::string& v) { d.labels = resolve(base_dir, v); });
  get_str("edges", [&](const std::string& v) { d.edges = v.empty() ? fs::path() : resolve(base_dir, v); });
  get_str("train_file", [&](const std::string& v) { d.train_file = resolve(base_dir, v); });
  get_str("dev_file", [&](const std::string& v) { d.dev_file = resolve(base_dir, v); });
  get_str("test_file", [&](const std::string& v) { d.test_file = resolve(base_dir, v); });
  get("train", d.train);
  get("dev", d.dev);
  get_str("test", [&](const std::string& v) {
    if (v == "rest") {
      d.test.reset();
      return;
    }
    Index n = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (ec != std::errc() || p != v.data() + v.size() || n < 0)
      throw ConfigError("test: expected a count or 'rest', got '" + v + "'");
    d.test = n;
  });
  get("split_seed", d.split_seed);
  get_str("feature_norm", [&](const std::string& v) { d.feature_norm = parse_feature_norm(v); });
  get("lambda", r.lambda);
  get("eta", r.eta);
  get("alpha", r.alpha);
  get("beta", r.beta);
  get("gamma", r.gamma);
  get("knn", r.knn);
  get("epsilon", r.epsilon);
  get("heads", r.heads);
  get("stop_delta", r.stop_delta);
  get("max_iters", r.max_iters);
  get("hidden", r.hidden);
  get("learning_rate", r.learning_rate);
  get("weight_decay", r.weight_decay);
  get("dropout", r.dropout);
  get("iter_dropout", r.iter_dropout);
  get("max_epochs", r.max_epochs);
  get("patience", r.patience);
  get_str("seeds", [&](const std::string& v) { cfg.seeds = parse_seeds(v); });
  get_str("stopping", [&](const std::string& v) {
    try {
      r.stopping = parse_stopping(v);
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  });
  get_str("ablation", [&](const std::string& v) {
    try {
      r = ablation_mode(r, parse_ablation(v));
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  });
  try {
    r.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  return parse_config(in, path.parent_path(), overrides);
}

std::map<std::string, std::string> to_key_values(const ExperimentConfig& cfg) {
  const RunConfig& r = cfg.run;
  const DataSpec& d = cfg.data;
  std::map<std::string, std::string> kv;
  kv["dataset"] = d.name;
  kv["features"] = d.features.string();
  kv["labels"] = d.labels.string();
  if (!d.edges.empty()) kv["edges"] = d.edges.string();
  if (!d.train_file.empty()) kv["train_file"] = d.train_file.string();
  if (!d.dev_file.empty()) kv["dev_file"] = d.dev_file.string();
  if (!d.test_file.empty()) kv["test_file"] = d.test_file.string();
  kv["train"] = std::to_string(d.train);
  kv["dev"] = std::to_string(d.dev);
  kv["test"] = d.test ? std::to_string(*d.test) : "rest";
  kv["split_seed"] = std::to_string(d.split_seed);
  kv["feature_norm"] = to_string(d.feature_norm);
  // Ablations are stored already applied to the numeric fields below.
  kv["lambda"] = fmt_double(r.lambda);
  kv["eta"] = fmt_double(r.eta);
  kv["alpha"] = fmt_double(r.alpha);
  kv["beta"] = fmt_double(r.beta);
  kv["gamma"] = fmt_double(r.gamma);
  kv["knn"] = std::to_string(r.knn);
  kv["epsilon"] = fmt_double(r.epsilon);
  kv["heads"] = std::to_string(r.heads);
  kv["stop_delta"] = fmt_double(r.stop_delta);
  kv["max_iters"] = std::to_string(r.max_iters);
  kv["hidden"] = std::to_string(r.hidden);
  kv["learning_rate"] = fmt_double(r.learning_rate);
  kv["weight_decay"] = fmt_double(r.weight_decay);
  kv["dropout"] = fmt_double(r.dropout);
  kv["iter_dropout"] = fmt_double(r.iter_dropout);
  kv["max_epochs"] = std::to_string(r.max_epochs);
  kv["patience"] = std::to_string(r.patience);
  kv["ablation"] = to_string(r.ablation);
  kv["stopping"] = to_string(r.stopping);
  std::string seeds;
  for (auto s : cfg.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  kv["seeds"] = seeds;
  return kv;
}

std::string to_config_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : to_key_values(cfg)) out += k + " = " + v + "\n";
  return out;
}

Dataset load_experiment_dataset(const DataSpec& spec) {
  if (spec.features.empty() || spec.labels.empty())
    throw ConfigError("config must name both 'features' and 'labels'");
  for (const fs::path& p : {spec.features, spec.labels, spec.edges, spec.train_file, spec.dev_file, spec.test_file})
    if (!p.empty() && !fs::exists(p)) throw DataError("missing dataset file: " + p.string());

  Dataset ds = spec.edges.empty() ? load_tabular(spec.features, spec.labels, spec.name)
                                  : load_graph_dataset(spec.features, spec.labels, spec.edges, spec.name);
  normalize_features(ds.features, spec.feature_norm);
  if (!spec.train_file.empty() || !spec.dev_file.empty() || !spec.test_file.empty()) {
    if (spec.train_file.empty() || spec.dev_file.empty() || spec.test_file.empty())
      throw ConfigError("train_file, dev_file and test_file must be given together");
    ds.train = read_index_file(spec.train_file, ds.size());
    ds.dev = read_index_file(spec.dev_file, ds.size());
    ds.test = read_index_file(spec.test_file, ds.size());
  } else {
    Splits s = make_splits(ds.labels, ds.num_classes, {spec.train, spec.dev, spec.test}, spec.split_seed);
    ds.train = std::move(s.train);
    ds.dev = std::move(s.dev);
    ds.test = std::move(s.test);
  }
  ds.validate();
  return ds;
}

}  // namespace itergraph

#pragma once

#include "itergraph/data.hpp"
#include "itergraph/engine.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace itergraph {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Where a dataset lives and how to split and normalize it.
struct DataSpec {
  std::string name;
  std::filesystem::path features;
  std::filesystem::path labels;
  std::filesystem::path edges;       // empty: no given graph
  std::filesystem::path train_file;  // fixed split files override the counts
  std::filesystem::path dev_file;
  std::filesystem::path test_file;
  Index train = 10;
  Index dev = 20;
  std::optional<Index> test;         // empty: every remaining node
  std::uint64_t split_seed = 0;
  FeatureNorm feature_norm = FeatureNorm::standardize;
};

struct ExperimentConfig {
  RunConfig run;
  DataSpec data;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

// Flat "key = value" file, '#' comments. Relative paths resolve against
// `base_dir`. Unknown keys raise ConfigError listing the valid ones.
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

std::vector<std::string> config_keys();

// Resolved config as key/value text, re-parseable by parse_config.
std::map<std::string, std::string> to_key_values(const ExperimentConfig& config);
std::string to_config_text(const ExperimentConfig& config);

std::string to_string(FeatureNorm norm);
FeatureNorm parse_feature_norm(const std::string& text);

// Loads features/labels(/edges), normalizes features and attaches splits.
Dataset load_experiment_dataset(const DataSpec& spec);

}  // namespace itergraph

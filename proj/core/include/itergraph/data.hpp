#pragma once

#include "itergraph/numkit/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace itergraph {

// Node features, labels, train/dev/test node sets and an optional given graph.
struct Dataset {
  std::string name;
  Matrix features;                 // n x d, nodes are rows
  std::vector<int> labels;         // n values in [0, num_classes)
  int num_classes = 0;
  std::vector<Index> train;
  std::vector<Index> dev;
  std::vector<Index> test;
  std::optional<Matrix> adjacency; // symmetric, binary, zero diagonal

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }

  // Throws DataError when an invariant does not hold.
  void validate() const;
};

// Features CSV (optional single header line) + one integer label per line.
Dataset load_tabular(const std::filesystem::path& features, const std::filesystem::path& labels,
                     std::string name = {});

// As load_tabular plus an undirected edge list ("i j" per line, 0-based).
// Duplicates collapse, self-loops are dropped.
Dataset load_graph_dataset(const std::filesystem::path& features,
                           const std::filesystem::path& labels,
                           const std::filesystem::path& edges, std::string name = {});

Matrix read_features_csv(const std::filesystem::path& path);
std::vector<int> read_labels(const std::filesystem::path& path);
Matrix read_edge_list(const std::filesystem::path& path, Index num_nodes);
std::vector<Index> read_index_file(const std::filesystem::path& path, Index num_nodes);

struct SplitCounts {
  Index train = 0;
  Index dev = 0;
  std::optional<Index> test;  // all remaining nodes when absent
};

struct Splits {
  std::vector<Index> train;
  std::vector<Index> dev;
  std::vector<Index> test;
};

// Class-balanced training draw (round-robin over classes while a class still
// has unused nodes), then dev and test uniformly from the rest. Deterministic
// per seed. Throws DataError when the counts exceed n.
Splits make_splits(const std::vector<int>& labels, int num_classes, const SplitCounts& counts,
                   std::uint64_t seed);

enum class PerturbMode { remove, add };

// Deletes or inserts round(ratio * |E|) undirected edges uniformly at random.
// |E| counts each undirected edge once.
Matrix perturb_edges(const Matrix& adjacency, double ratio, PerturbMode mode, std::uint64_t seed);

Index count_undirected_edges(const Matrix& adjacency);

enum class FeatureNorm { none, standardize, row_l1 };

// Column-wise zero mean / unit variance (population std; constant columns
// become zero), or unit-L1 rows.
void normalize_features(Matrix& features, FeatureNorm norm);

// Writes features.csv, labels.txt, optional edges.txt and train/dev/test.txt
// into `dir`; load_dataset_dir reads them back bit-identically.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset_dir(const std::filesystem::path& dir, std::string name = {});

}  // namespace itergraph

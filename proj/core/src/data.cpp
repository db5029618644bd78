#include "itergraph/data.hpp"

#include "itergraph/numkit/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string_view>
#include <system_error>
#include <utility>

namespace itergraph {
namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw DataError(path.string() + ": empty file");
  return lines;
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_index(const std::string& s, long long& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void Dataset::validate() const {
  const Index n = size();
  if (n == 0) throw DataError(name + ": empty dataset");
  if (static_cast<Index>(labels.size()) != n)
    throw DataError(name + ": " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(n) + " feature rows");
  if (!features.allFinite()) throw DataError(name + ": non-finite feature values");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw DataError(name + ": label " + std::to_string(y) + " out of range");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (const auto* set : {&train, &dev, &test}) {
    for (Index i : *set) {
      if (i < 0 || i >= n) throw DataError(name + ": split index " + std::to_string(i) + " out of range");
      if (seen[static_cast<std::size_t>(i)]) throw DataError(name + ": splits overlap at node " + std::to_string(i));
      seen[static_cast<std::size_t>(i)] = 1;
    }
  }
  if (adjacency) {
    const Matrix& a = *adjacency;
    if (a.rows() != n || a.cols() != n) throw DataError(name + ": adjacency shape mismatch");
    if (a != a.transpose()) throw DataError(name + ": adjacency is not symmetric");
    if (a.diagonal().cwiseAbs().maxCoeff() != 0.0) throw DataError(name + ": adjacency has self-loops");
  }
}

Matrix read_features_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) throw DataError(where(path, ln) + ": blank line");
    const auto cells = split_cells(lines[ln]);
    std::vector<double> row(cells.size());
    bool numeric = true;
    std::size_t bad = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!parse_double(cells[c], row[c])) {
        numeric = false;
        bad = c;
        break;
      }
    }
    if (!numeric) {
      if (ln == 0) continue;  // header
      throw DataError(where(path, ln) + ": non-numeric cell '" + cells[bad] + "'");
    }
    for (double v : row)
      if (!std::isfinite(v)) throw DataError(where(path, ln) + ": non-finite feature value");
    if (rows.empty()) width = row.size();
    if (row.size() != width)
      throw DataError(where(path, ln) + ": expected " + std::to_string(width) + " columns, found " +
                      std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": empty dataset");
  Matrix x(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return x;
}

std::vector<int> read_labels(const fs::path& path) {
  const auto lines = read_lines(path);
  std::vector<int> labels;
  labels.reserve(lines.size());
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string cell = trim(lines[ln]);
    long long v = 0;
    if (!parse_index(cell, v) || v < 0 || v > 1'000'000)
      throw DataError(where(path, ln) + ": unknown label '" + cell + "'");
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

Matrix read_edge_list(const fs::path& path, Index num_nodes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Matrix a = Matrix::Zero(num_nodes, num_nodes);
  std::string line;
  std::size_t ln = 0;
  for (; std::getline(in, line); ++ln) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream ss(t);
    std::string su, sv, extra;
    long long u = 0, v = 0;
    if (!(ss >> su >> sv) || (ss >> extra) || !parse_index(su, u) || !parse_index(sv, v))
      throw DataError(where(path, ln) + ": expected two integer node indices");
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
      throw DataError(where(path, ln) + ": edge endpoint out of range [0, " + std::to_string(num_nodes) + ")");
    if (u == v) continue;
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  return a;
}

std::vector<Index> read_index_file(const fs::path& path, Index num_nodes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Index> out;
  std::string line;
  for (std::size_t ln = 0; std::getline(in, line); ++ln) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    long long v = 0;
    if (!parse_index(t, v) || v < 0 || v >= num_nodes)
      throw DataError(where(path, ln) + ": invalid node index '" + t + "'");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

Dataset load_tabular(const fs::path& features, const fs::path& labels, std::string name) {
  Dataset ds;
  ds.name = name.empty() ? features.parent_path().filename().string() : std::move(name);
  ds.features = read_features_csv(features);
  ds.labels = read_labels(labels);
  if (static_cast<Index>(ds.labels.size()) != ds.features.rows())
    throw DataError(ds.name + ": " + std::to_string(ds.features.rows()) + " feature rows but " +
                    std::to_string(ds.labels.size()) + " labels");
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.validate();
  return ds;
}

Dataset load_graph_dataset(const fs::path& features, const fs::path& labels, const fs::path& edges,
                           std::string name) {
  Dataset ds = load_tabular(features, labels, std::move(name));
  ds.adjacency = read_edge_list(edges, ds.size());
  ds.validate();
  return ds;
}

Splits make_splits(const std::vector<int>& labels, int num_classes, const SplitCounts& counts,
                   std::uint64_t seed) {
  const Index n = static_cast<Index>(labels.size());
  if (counts.train < 0 || counts.dev < 0 || (counts.test && *counts.test < 0))
    throw DataError("make_splits: negative count");
  const Index fixed = counts.train + counts.dev + counts.test.value_or(0);
  if (fixed > n)
    throw DataError("make_splits: requested " + std::to_string(fixed) + " nodes but only " +
                    std::to_string(n) + " exist");

  std::mt19937_64 rng(seed);
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(num_classes));
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= num_classes) throw DataError("make_splits: label out of range");
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

  Splits s;
  std::vector<std::size_t> cursor(by_class.size(), 0);
  while (static_cast<Index>(s.train.size()) < counts.train) {
    for (std::size_t c = 0; c < by_class.size() && static_cast<Index>(s.train.size()) < counts.train; ++c) {
      if (cursor[c] < by_class[c].size()) s.train.push_back(by_class[c][cursor[c]++]);
    }
  }
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  for (Index i : s.train) used[static_cast<std::size_t>(i)] = 1;
  std::vector<Index> rest;
  for (Index i = 0; i < n; ++i)
    if (!used[static_cast<std::size_t>(i)]) rest.push_back(i);
  std::shuffle(rest.begin(), rest.end(), rng);

  const auto dev_end = rest.begin() + counts.dev;
  s.dev.assign(rest.begin(), dev_end);
  const Index test_count = counts.test.value_or(static_cast<Index>(rest.size()) - counts.dev);
  s.test.assign(dev_end, dev_end + test_count);
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.dev.begin(), s.dev.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Index count_undirected_edges(const Matrix& adjacency) {
  Index count = 0;
  for (Index i = 0; i < adjacency.rows(); ++i)
    for (Index j = i + 1; j < adjacency.cols(); ++j)
      if (adjacency(i, j) != 0.0) ++count;
  return count;
}

Matrix perturb_edges(const Matrix& adjacency, double ratio, PerturbMode mode, std::uint64_t seed) {
  require(ratio >= 0.0 && ratio <= 1.0, "perturb_edges: ratio must lie in [0, 1]");
  require(adjacency.rows() == adjacency.cols(), "perturb_edges: adjacency must be square");
  const Index n = adjacency.rows();
  std::vector<std::pair<Index, Index>> present, absent;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      (adjacency(i, j) != 0.0 ? present : absent).emplace_back(i, j);
  const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(present.size())));
  Matrix out = adjacency;
  if (k == 0) return out;

  std::mt19937_64 rng(seed);
  auto& pool = mode == PerturbMode::remove ? present : absent;
  if (pool.size() < k)
    throw DataError("perturb_edges: need " + std::to_string(k) + " absent node pairs, only " +
                    std::to_string(pool.size()) + " available");
  // Partial Fisher-Yates: the first k entries form a uniform sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  const double value = mode == PerturbMode::remove ? 0.0 : 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto [u, v] = pool[i];
    out(u, v) = value;
    out(v, u) = value;
  }
  return out;
}

void normalize_features(Matrix& features, FeatureNorm norm) {
  switch (norm) {
    case FeatureNorm::none:
      return;
    case FeatureNorm::standardize: {
      const double n = static_cast<double>(features.rows());
      for (Index j = 0; j < features.cols(); ++j) {
        auto col = features.col(j);
        const double mean = col.sum() / n;
        col.array() -= mean;
        const double sd = std::sqrt(col.squaredNorm() / n);
        if (sd > 0.0) {
          col /= sd;
        } else {
          col.setZero();
        }
      }
      return;
    }
    case FeatureNorm::row_l1:
      for (Index i = 0; i < features.rows(); ++i) {
        const double s = features.row(i).cwiseAbs().sum();
        if (s > 0.0) features.row(i) /= s;
      }
      return;
  }
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "features.csv");
    for (Index i = 0; i < ds.features.rows(); ++i) {
      for (Index j = 0; j < ds.features.cols(); ++j) {
        if (j) out << ',';
        out << format_double(ds.features(i, j));
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.txt");
    for (int y : ds.labels) out << y << '\n';
  }
  if (ds.adjacency) {
    std::ofstream out(dir / "edges.txt");
    const Matrix& a = *ds.adjacency;
    for (Index i = 0; i < a.rows(); ++i)
      for (Index j = i + 1; j < a.cols(); ++j)
        if (a(i, j) != 0.0) out << i << ' ' << j << '\n';
  }
  const std::pair<const char*, const std::vector<Index>*> sets[] = {
      {"train.txt", &ds.train}, {"dev.txt", &ds.dev}, {"test.txt", &ds.test}};
  for (const auto& [file, idx] : sets) {
    std::ofstream out(dir / file);
    for (Index i : *idx) out << i << '\n';
  }
}

Dataset load_dataset_dir(const fs::path& dir, std::string name) {
  if (name.empty()) name = dir.filename().string();
  Dataset ds = fs::exists(dir / "edges.txt")
                   ? load_graph_dataset(dir / "features.csv", dir / "labels.txt", dir / "edges.txt", name)
                   : load_tabular(dir / "features.csv", dir / "labels.txt", name);
  if (fs::exists(dir / "train.txt")) ds.train = read_index_file(dir / "train.txt", ds.size());
  if (fs::exists(dir / "dev.txt")) ds.dev = read_index_file(dir / "dev.txt", ds.size());
  if (fs::exists(dir / "test.txt")) ds.test = read_index_file(dir / "test.txt", ds.size());
  ds.validate();
  return ds;
}

}  // namespace itergraph

#pragma once

// Attributed-network files and synthetic planted instances.
//
// Formats (UTF-8 text):
//   edges     "u v" per line; '#' starts a comment line; blank lines ignored
//   features  dense CSV (line i = node i, an empty line = node without
//             attributes) or sparse triplets "row col value"
//   labels    one integer per line, for every node or for the kept nodes only
//   manifest  JSON with name, edges_path, features_path, labels_path,
//             directed, feature_format, zero_indexed and optionally
//             num_nodes / num_features; relative paths resolve against the
//             manifest's directory

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bmfs/core_model.hpp"

namespace bmfs {

namespace fs = std::filesystem;

enum class FeatureFormat { dense_csv, sparse_triplet };

inline const char* to_string(FeatureFormat f) { return f == FeatureFormat::dense_csv ? "dense_csv" : "sparse_triplet"; }

inline FeatureFormat parse_feature_format(const std::string& s) {
  if (s == "dense_csv") return FeatureFormat::dense_csv;
  if (s == "sparse_triplet") return FeatureFormat::sparse_triplet;
  throw PreconditionError("unknown feature_format '" + s + "'");
}

struct DatasetManifest {
  std::string name;
  fs::path edges_path;
  fs::path features_path;
  fs::path labels_path;  // empty: no labels
  bool directed = false;
  FeatureFormat feature_format = FeatureFormat::sparse_triplet;
  bool zero_indexed = true;
  std::optional<Index> num_nodes;
  std::optional<Index> num_features;
};

inline DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return p.empty() || fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  DatasetManifest m;
  try {
    m.name = j.value("name", path.stem().string());
    m.edges_path = resolve(j.at("edges_path").get<std::string>());
    m.features_path = resolve(j.at("features_path").get<std::string>());
    m.labels_path = resolve(j.value("labels_path", std::string{}));
    m.directed = j.value("directed", false);
    m.feature_format = parse_feature_format(j.value("feature_format", std::string("sparse_triplet")));
    m.zero_indexed = j.value("zero_indexed", true);
    if (j.contains("num_nodes")) m.num_nodes = j["num_nodes"].get<Index>();
    if (j.contains("num_features")) m.num_features = j["num_features"].get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return m;
}

/// Paths are written relative to the manifest's directory when possible.
inline void write_manifest(const DatasetManifest& m, const fs::path& path) {
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) {
    if (p.empty()) return std::string{};
    return p.is_absolute() || base.empty() ? p.lexically_relative(fs::absolute(base)).generic_string()
                                           : p.lexically_relative(base).generic_string();
  };
  nlohmann::json j;
  j["name"] = m.name;
  j["edges_path"] = rel(m.edges_path);
  j["features_path"] = rel(m.features_path);
  j["labels_path"] = rel(m.labels_path);
  j["directed"] = m.directed;
  j["feature_format"] = to_string(m.feature_format);
  j["zero_indexed"] = m.zero_indexed;
  if (m.num_nodes) j["num_nodes"] = *m.num_nodes;
  if (m.num_features) j["num_features"] = *m.num_features;
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t s = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > s) out.push_back(line.substr(s, i - s));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view tok, const std::string& file, std::size_t line) {
  tok = trim(tok);
  T value{};
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty())
    throw ParseError(file, line, "malformed number '" + std::string(tok) + "'");
  return value;
}

inline std::ifstream open_input(const fs::path& p, const char* what) {
  std::ifstream in(p);
  if (!in) throw Error(std::string("cannot open ") + what + " file " + p.string());
  return in;
}

inline bool is_comment_or_blank(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

struct RawFeatures {
  std::vector<Triplet> entries;
  std::vector<char> present;  // by node row
  Index rows = 0;
  Index cols = 0;
};

inline Index adjust_index(long long v, bool zero_indexed, const std::string& file, std::size_t line, const char* what) {
  const long long id = zero_indexed ? v : v - 1;
  if (id < 0) throw ParseError(file, line, std::string(what) + " id " + std::to_string(v) + " out of range");
  return static_cast<Index>(id);
}

inline RawFeatures read_features(const fs::path& path, FeatureFormat format, bool zero_indexed) {
  auto in = open_input(path, "features");
  const std::string file = path.string();
  RawFeatures raw;
  std::string line;
  std::size_t lineno = 0;
  if (format == FeatureFormat::dense_csv) {
    Index row = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view body = trim(line);
      raw.present.push_back(body.empty() ? 0 : 1);
      if (!body.empty()) {
        Index col = 0;
        std::size_t start = 0;
        while (start <= body.size()) {
          std::size_t comma = body.find(',', start);
          if (comma == std::string_view::npos) comma = body.size();
          const double v = parse_number<double>(body.substr(start, comma - start), file, lineno);
          if (!(v >= 0.0))
            throw ParseError(file, lineno,
                             "negative feature value at (" + std::to_string(row) + ", " + std::to_string(col) + ")");
          if (v != 0.0) raw.entries.emplace_back(row, col, v);
          ++col;
          start = comma + 1;
        }
        if (raw.cols != 0 && col != raw.cols)
          throw ParseError(file, lineno, "row has " + std::to_string(col) + " columns, expected " + std::to_string(raw.cols));
        raw.cols = col;
      }
      ++row;
    }
    raw.rows = row;
    // A trailing empty line is not a node.
    while (!raw.present.empty() && !raw.present.back()) {
      raw.present.pop_back();
      --raw.rows;
    }
  } else {
    while (std::getline(in, line)) {
      ++lineno;
      if (is_comment_or_blank(line)) continue;
      const auto tok = split_ws(line);
      if (tok.size() != 3) throw ParseError(file, lineno, "expected 'row col value'");
      const Index r = adjust_index(parse_number<long long>(tok[0], file, lineno), zero_indexed, file, lineno, "row");
      const Index c = adjust_index(parse_number<long long>(tok[1], file, lineno), zero_indexed, file, lineno, "column");
      const double v = parse_number<double>(tok[2], file, lineno);
      if (!(v >= 0.0))
        throw ParseError(file, lineno, "negative feature value at (" + std::to_string(r) + ", " + std::to_string(c) + ")");
      if (static_cast<std::size_t>(r) >= raw.present.size()) raw.present.resize(r + 1, 0);
      raw.present[r] = 1;
      if (v != 0.0) raw.entries.emplace_back(r, c, v);
      raw.rows = std::max(raw.rows, r + 1);
      raw.cols = std::max(raw.cols, c + 1);
    }
  }
  return raw;
}

inline SparseMatrix assemble(Index rows, Index cols, const std::vector<Triplet>& entries) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(entries.begin(), entries.end());
  m.prune(0.0);
  m.makeCompressed();
  return m;
}

}  // namespace detail

/// Reads an n×m nonnegative feature matrix.
inline SparseMatrix load_features(const fs::path& path, FeatureFormat format, Index n, Index m,
                                  bool zero_indexed = true) {
  const auto raw = detail::read_features(path, format, zero_indexed);
  if (raw.rows > n)
    throw DimensionError(path.string() + ": " + std::to_string(raw.rows) + " feature rows exceed n = " + std::to_string(n));
  if (raw.cols > m)
    throw DimensionError(path.string() + ": " + std::to_string(raw.cols) + " feature columns exceed m = " +
                         std::to_string(m));
  return detail::assemble(n, m, raw.entries);
}

struct EdgeList {
  std::vector<std::pair<Index, Index>> edges;
  Index max_id = -1;
};

inline EdgeList load_edges(const fs::path& path, bool zero_indexed) {
  auto in = detail::open_input(path, "edge list");
  const std::string file = path.string();
  EdgeList out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment_or_blank(line)) continue;
    const auto tok = detail::split_ws(line);
    if (tok.size() == 3) throw ParseError(file, lineno, "weighted edges are not supported");
    if (tok.size() != 2) throw ParseError(file, lineno, "expected 'u v'");
    const Index u = detail::adjust_index(detail::parse_number<long long>(tok[0], file, lineno), zero_indexed, file, lineno, "node");
    const Index v = detail::adjust_index(detail::parse_number<long long>(tok[1], file, lineno), zero_indexed, file, lineno, "node");
    out.edges.emplace_back(u, v);
    out.max_id = std::max({out.max_id, u, v});
  }
  return out;
}

inline std::vector<long long> load_labels(const fs::path& path) {
  auto in = detail::open_input(path, "labels");
  const std::string file = path.string();
  std::vector<long long> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment_or_blank(line)) continue;
    out.push_back(detail::parse_number<long long>(line, file, lineno));
  }
  return out;
}

/// Loads and preprocesses a dataset: edges are symmetrized with unit weight,
/// nodes without an attribute row are dropped together with their edges, the
/// remaining nodes are re-indexed densely in id order and labels are remapped
/// to contiguous class ids.
inline AttributedNetwork load_dataset(const DatasetManifest& manifest) {
  const auto edges = load_edges(manifest.edges_path, manifest.zero_indexed);
  const auto raw = detail::read_features(manifest.features_path, manifest.feature_format, manifest.zero_indexed);
  std::optional<std::vector<long long>> labels;
  if (!manifest.labels_path.empty()) labels = load_labels(manifest.labels_path);

  Index n = std::max(edges.max_id + 1, raw.rows);
  if (labels) n = std::max(n, static_cast<Index>(labels->size()));
  if (manifest.num_nodes) {
    if (n > *manifest.num_nodes)
      throw DimensionError(manifest.name + ": node id out of range (num_nodes = " + std::to_string(*manifest.num_nodes) + ")");
    n = *manifest.num_nodes;
  }
  Index m = raw.cols;
  if (manifest.num_features) {
    if (m > *manifest.num_features) throw DimensionError(manifest.name + ": feature column exceeds num_features");
    m = *manifest.num_features;
  }

  std::vector<Index> new_id(static_cast<std::size_t>(n), -1);
  Index kept = 0;
  for (Index i = 0; i < n; ++i)
    if (static_cast<std::size_t>(i) < raw.present.size() && raw.present[i]) new_id[i] = kept++;

  std::set<std::pair<Index, Index>> unique;
  for (auto [u, v] : edges.edges) {
    const Index a = new_id[u], b = new_id[v];
    if (a < 0 || b < 0) continue;
    unique.emplace(std::min(a, b), std::max(a, b));
  }
  std::vector<Triplet> adj;
  adj.reserve(unique.size() * 2);
  for (auto [a, b] : unique) {
    adj.emplace_back(a, b, 1.0);
    if (a != b) adj.emplace_back(b, a, 1.0);
  }

  std::vector<Triplet> feat;
  feat.reserve(raw.entries.size());
  for (const auto& t : raw.entries) feat.emplace_back(new_id[t.row()], t.col(), t.value());

  std::optional<std::vector<int>> classes;
  if (labels) {
    std::vector<long long> aligned;
    if (static_cast<Index>(labels->size()) == n) {
      for (Index i = 0; i < n; ++i)
        if (new_id[i] >= 0) aligned.push_back((*labels)[i]);
    } else if (static_cast<Index>(labels->size()) == kept) {
      aligned = *labels;
    } else {
      throw DimensionError(manifest.name + ": " + std::to_string(labels->size()) + " labels for " + std::to_string(n) +
                           " nodes (" + std::to_string(kept) + " with attributes)");
    }
    std::map<long long, int> remap;
    for (long long c : aligned) remap.emplace(c, 0);
    int next = 0;
    for (auto& [c, id] : remap) id = next++;
    classes.emplace();
    classes->reserve(aligned.size());
    for (long long c : aligned) classes->push_back(remap[c]);
  }
  return AttributedNetwork(detail::assemble(kept, kept, adj), detail::assemble(kept, m, feat), std::move(classes));
}

inline AttributedNetwork load_dataset(const fs::path& manifest_path) { return load_dataset(read_manifest(manifest_path)); }

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Writes edges (each undirected pair once), sparse-triplet features (an
/// explicit "i 0 0" for attribute-less rows so every node survives reload),
/// labels and a manifest into `dir`. Returns the manifest path.
inline fs::path save_dataset(const AttributedNetwork& net, const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.name = name;
  m.edges_path = dir / "edges.txt";
  m.features_path = dir / "features.txt";
  m.feature_format = FeatureFormat::sparse_triplet;
  m.num_nodes = net.num_nodes();
  m.num_features = net.num_features();
  {
    std::ofstream out(m.edges_path);
    const SparseMatrix& a = net.adjacency();
    for (Index j = 0; j < a.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(a, j); it; ++it)
        if (it.row() <= it.col()) out << it.row() << ' ' << it.col() << '\n';
  }
  {
    SparseMatrix rowmajor_src = net.features();
    Eigen::SparseMatrix<double, Eigen::RowMajor> y(rowmajor_src);
    std::ofstream out(m.features_path);
    for (Index i = 0; i < y.outerSize(); ++i) {
      bool any = false;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(y, i); it; ++it) {
        out << i << ' ' << it.col() << ' ' << detail::format_double(it.value()) << '\n';
        any = true;
      }
      if (!any) out << i << " 0 0\n";
    }
  }
  if (net.has_labels()) {
    m.labels_path = dir / "labels.txt";
    std::ofstream out(m.labels_path);
    for (int c : net.labels()) out << c << '\n';
  }
  const fs::path manifest_path = dir / "manifest.json";
  write_manifest(m, manifest_path);
  return manifest_path;
}

/// Synthetic attributed network with k planted blocks.
struct PlantedSpec {
  Index n = 300;
  int k = 3;
  Index d_informative = 20;
  Index d_noise = 80;
  double intra_p = 0.3;
  double inter_p = 0.02;
  double signal_strength = 2.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1 || k < 1 || n < k) throw PreconditionError("planted generator: need n >= k >= 1");
    if (d_informative < 0 || d_noise < 0 || d_informative + d_noise < 1)
      throw PreconditionError("planted generator: need at least one feature");
    if (!(intra_p > inter_p)) throw PreconditionError("planted generator: intra_p must exceed inter_p");
    if (!(intra_p <= 1.0 && inter_p >= 0.0)) throw PreconditionError("planted generator: probabilities must lie in [0,1]");
    if (!(signal_strength >= 0.0)) throw PreconditionError("planted generator: signal_strength must be >= 0");
  }
};

inline int planted_block(Index node, Index n, int k) { return static_cast<int>(node * k / n); }

/// Blocks are contiguous and equal-sized (±1). Edges are independent with
/// probability intra_p inside a block and inter_p across blocks; no
/// self-loops. Every feature starts as Uniform(0,1) noise; informative
/// feature j adds signal_strength on nodes of block j mod k, noise feature j
/// adds it on nodes of group j mod k of a second random partition that is
/// independent of the blocks. Graph, feature values and that partition draw
/// from separate seeded streams and each column has its own value stream keyed
/// by its position, so with signal_strength = 0 two specs sharing a seed and
/// a total feature count produce identical matrices whatever the
/// informative/noise split. Labels are the planted blocks.
inline AttributedNetwork generate_planted(const PlantedSpec& spec) {
  spec.validate();
  const Index n = spec.n, m = spec.d_informative + spec.d_noise;
  std::seed_seq graph_seq{spec.seed, std::uint64_t{1}}, group_seq{spec.seed, std::uint64_t{3}};
  std::mt19937_64 graph_rng(graph_seq), group_rng(group_seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<int> block(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) block[i] = planted_block(i, n, spec.k);

  std::vector<Triplet> adj;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double p = block[i] == block[j] ? spec.intra_p : spec.inter_p;
      if (unit(graph_rng) < p) {
        adj.emplace_back(i, j, 1.0);
        adj.emplace_back(j, i, 1.0);
      }
    }

  std::uniform_int_distribution<int> pick_group(0, spec.k - 1);
  std::vector<int> group(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) group[i] = pick_group(group_rng);

  std::vector<Triplet> feat;
  feat.reserve(static_cast<std::size_t>(n * m));
  auto fill = [&](Index col, Index local, const std::vector<int>& membership) {
    const int target = static_cast<int>(local % spec.k);
    std::seed_seq column_seq{spec.seed, std::uint64_t{2}, static_cast<std::uint64_t>(col)};
    std::mt19937_64 value_rng(column_seq);
    for (Index i = 0; i < n; ++i) {
      double v = unit(value_rng);
      if (membership[i] == target) v += spec.signal_strength;
      feat.emplace_back(i, col, v);
    }
  };
  for (Index j = 0; j < spec.d_informative; ++j) fill(j, j, block);
  for (Index j = 0; j < spec.d_noise; ++j) fill(spec.d_informative + j, j, group);

  return AttributedNetwork(detail::assemble(n, n, adj), detail::assemble(n, m, feat), std::move(block));
}

}  // namespace bmfs

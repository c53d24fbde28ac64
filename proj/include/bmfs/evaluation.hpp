#pragma once

// Clustering-based quality of a feature selection: K-means on the selected,
// row-normalized features, scored against ground truth with matched accuracy
// (maximum-weight assignment of clusters to classes) and NMI.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "bmfs/parallel.hpp"
#include "bmfs/solver.hpp"

namespace bmfs {

/// Scales every nonzero row to unit l2 norm; zero rows stay zero.
inline Matrix normalize_rows(Matrix x) {
  for (Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n > 0.0) x.row(i) /= n;
  }
  return x;
}

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;
  double inertia = 0.0;
  int iterations = 0;
};

namespace detail {

inline Matrix kmeanspp_seed(const Matrix& x, int k, std::mt19937_64& rng) {
  const Index n = x.rows();
  Matrix centers(k, x.cols());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  Index first = std::uniform_int_distribution<Index>(0, n - 1)(rng);
  centers.row(0) = x.row(first);
  chosen[first] = 1;
  Vector dist2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    Index pick = -1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += dist2(i);
        if (acc > target && dist2(i) > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick < 0)
        for (Index i = n - 1; i >= 0; --i)
          if (dist2(i) > 0.0) {
            pick = i;
            break;
          }
    } else {
      // Every remaining point coincides with a center: take an unused one.
      std::vector<Index> unused;
      for (Index i = 0; i < n; ++i)
        if (!chosen[i]) unused.push_back(i);
      pick = unused[std::uniform_int_distribution<std::size_t>(0, unused.size() - 1)(rng)];
    }
    chosen[pick] = 1;
    centers.row(c) = x.row(pick);
    dist2 = dist2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace detail

/// Lloyd iterations from k-means++ seeds; stops when assignments repeat or
/// after `max_iters`. An emptied cluster takes the point farthest from its
/// current centroid.
inline KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed, int max_iters = 300) {
  const Index n = x.rows();
  if (k < 1) throw PreconditionError("kmeans: k must be >= 1");
  if (k > n) throw PreconditionError("kmeans: k = " + std::to_string(k) + " exceeds point count " + std::to_string(n));
  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.centroids = detail::kmeanspp_seed(x, k, rng);
  res.labels.assign(static_cast<std::size_t>(n), -1);
  Vector best(n);

  for (int it = 1; it <= std::max(1, max_iters); ++it) {
    res.iterations = it;
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      int arg = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - res.centroids.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          arg = c;
        }
      }
      best(i) = bd;
      if (res.labels[i] != arg) {
        res.labels[i] = arg;
        changed = true;
      }
    }
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (int l : res.labels) ++counts[l];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      Index far = -1;
      for (Index i = 0; i < n; ++i)
        if (counts[res.labels[i]] > 1 && (far < 0 || best(i) > best(far))) far = i;
      --counts[res.labels[far]];
      res.labels[far] = c;
      ++counts[c];
      best(far) = 0.0;
      changed = true;
    }
    Matrix sums = Matrix::Zero(k, x.cols());
    for (Index i = 0; i < n; ++i) sums.row(res.labels[i]) += x.row(i);
    for (int c = 0; c < k; ++c) res.centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
    if (!changed) break;
  }
  res.inertia = 0.0;
  for (Index i = 0; i < n; ++i) res.inertia += (x.row(i) - res.centroids.row(res.labels[i])).squaredNorm();
  return res;
}

inline std::vector<int> kmeans_cluster(const Matrix& x, int k, std::uint64_t seed, int max_iters = 300) {
  return kmeans(x, k, seed, max_iters).labels;
}

/// Maximum-weight perfect assignment on a square matrix (Kuhn–Munkres with
/// potentials, O(n³)). Returns the column assigned to each row.
inline std::vector<int> max_weight_assignment(const Matrix& weight) {
  const int n = static_cast<int>(weight.rows());
  if (weight.cols() != n) throw DimensionError("max_weight_assignment: matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  const double top = n > 0 ? weight.maxCoeff() : 0.0;
  // 1-based arrays; cost(i,j) = top − weight(i,j) ≥ 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = (top - weight(i0 - 1, j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

namespace detail {

inline void require_same_length(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw DimensionError("label sequences differ in length");
  if (a.empty()) throw PreconditionError("label sequences are empty");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] < 0 || b[i] < 0) throw PreconditionError("label ids must be nonnegative");
}

// Rows: predicted ids, columns: true ids; padded square.
inline Matrix contingency(const std::vector<int>& pred, const std::vector<int>& truth, bool square) {
  const int rp = *std::max_element(pred.begin(), pred.end()) + 1;
  const int rt = *std::max_element(truth.begin(), truth.end()) + 1;
  const int rows = square ? std::max(rp, rt) : rp;
  const int cols = square ? std::max(rp, rt) : rt;
  Matrix c = Matrix::Zero(rows, cols);
  for (std::size_t i = 0; i < pred.size(); ++i) c(pred[i], truth[i]) += 1.0;
  return c;
}

}  // namespace detail

/// Fraction of points whose cluster, mapped to a class by the best one-to-one
/// assignment, equals the true class.
inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  detail::require_same_length(pred, truth);
  const Matrix c = detail::contingency(pred, truth, true);
  const auto assign = max_weight_assignment(c);
  double hit = 0.0;
  for (std::size_t i = 0; i < assign.size(); ++i) hit += c(static_cast<Index>(i), assign[i]);
  return hit / static_cast<double>(pred.size());
}

/// MI(L, C) / max(H(L), H(C)); defined as 0 when both entropies vanish.
inline double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
  detail::require_same_length(pred, truth);
  const Matrix c = detail::contingency(pred, truth, false);
  const double n = static_cast<double>(pred.size());
  const Vector rows = c.rowwise().sum(), cols = c.colwise().sum().transpose();
  auto entropy = [n](const Vector& counts) {
    double h = 0.0;
    for (Index i = 0; i < counts.size(); ++i)
      if (counts(i) > 0.0) h -= counts(i) / n * std::log(counts(i) / n);
    return h;
  };
  double mi = 0.0;
  for (Index i = 0; i < c.rows(); ++i)
    for (Index j = 0; j < c.cols(); ++j)
      if (c(i, j) > 0.0) mi += c(i, j) / n * std::log(n * c(i, j) / (rows(i) * cols(j)));
  const double denom = std::max(entropy(rows), entropy(cols));
  if (denom <= 0.0) return 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

struct RunMetrics {
  std::uint64_t seed = 0;
  double acc = 0.0;
  double nmi = 0.0;
};

struct EvaluationReport {
  Index d = 0;
  int runs = 0;
  double acc_mean = 0.0, acc_std = 0.0;
  double nmi_mean = 0.0, nmi_std = 0.0;
  std::vector<RunMetrics> per_run;
};

/// Dense copy of the chosen feature columns.
inline Matrix select_columns(const SparseMatrix& features, const std::vector<Index>& columns) {
  Matrix out(features.rows(), static_cast<Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) out.col(static_cast<Index>(j)) = Vector(features.col(columns[j]));
  return out;
}

/// Top-d features of `scores`, row-normalized, clustered `runs` times with
/// k = class count and seeds base_seed, base_seed+1, …. Standard deviations
/// are population (divide by runs).
inline EvaluationReport evaluate_selection(const AttributedNetwork& net, const Vector& scores, Index d, int runs = 20,
                                           std::uint64_t base_seed = 0, unsigned workers = 1) {
  if (!net.has_labels()) throw PreconditionError("evaluate_selection: network has no labels");
  if (runs < 1) throw PreconditionError("evaluate_selection: runs must be >= 1");
  if (scores.size() != net.num_features()) throw DimensionError("evaluate_selection: scores length != feature count");
  const auto columns = top_d_features(scores, d);
  const Matrix x = normalize_rows(select_columns(net.features(), columns));
  const int k = net.num_classes();

  EvaluationReport rep;
  rep.d = d;
  rep.runs = runs;
  rep.per_run.resize(static_cast<std::size_t>(runs));
  parallel_for(rep.per_run.size(), workers, [&](std::size_t i) {
    const std::uint64_t seed = base_seed + i;
    const auto labels = kmeans_cluster(x, k, seed);
    rep.per_run[i] = {seed, accuracy(labels, net.labels()), nmi(labels, net.labels())};
  });
  for (const auto& r : rep.per_run) {
    rep.acc_mean += r.acc;
    rep.nmi_mean += r.nmi;
  }
  rep.acc_mean /= runs;
  rep.nmi_mean /= runs;
  for (const auto& r : rep.per_run) {
    rep.acc_std += (r.acc - rep.acc_mean) * (r.acc - rep.acc_mean);
    rep.nmi_std += (r.nmi - rep.nmi_mean) * (r.nmi - rep.nmi_mean);
  }
  rep.acc_std = std::sqrt(rep.acc_std / runs);
  rep.nmi_std = std::sqrt(rep.nmi_std / runs);
  return rep;
}

}  // namespace bmfs

#pragma once

// Domain types shared by every module and the closed-form block-model algebra:
// induced adjacency, least-squares image matrix, M̂(r) and RRE.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bmfs/error.hpp"

namespace bmfs {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Symmetric nonnegative structural adjacency plus nonnegative node features.
/// Both matrices are stored sparse; labels, when present, are remapped to
/// contiguous class ids starting at 0.
class AttributedNetwork {
 public:
  AttributedNetwork() = default;

  AttributedNetwork(SparseMatrix adjacency, SparseMatrix features,
                    std::optional<std::vector<int>> labels = std::nullopt)
      : adjacency_(std::move(adjacency)), features_(std::move(features)), labels_(std::move(labels)) {
    adjacency_.makeCompressed();
    features_.makeCompressed();
    validate();
  }

  Index num_nodes() const { return adjacency_.rows(); }
  Index num_features() const { return features_.cols(); }

  const SparseMatrix& adjacency() const { return adjacency_; }
  const SparseMatrix& features() const { return features_; }

  bool has_labels() const { return labels_.has_value(); }
  const std::vector<int>& labels() const {
    if (!labels_) throw PreconditionError("network has no ground-truth labels");
    return *labels_;
  }
  int num_classes() const {
    const auto& l = labels();
    return l.empty() ? 0 : *std::max_element(l.begin(), l.end()) + 1;
  }

  /// Number of distinct unordered node pairs {u, v} with A[u,v] != 0;
  /// a self-loop counts once.
  Index num_undirected_edges() const {
    Index off = 0, diag = 0;
    for (Index j = 0; j < adjacency_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(adjacency_, j); it; ++it) {
        if (it.value() == 0.0) continue;
        (it.row() == it.col() ? diag : off) += 1;
      }
    return off / 2 + diag;
  }

 private:
  void validate() const {
    if (adjacency_.rows() != adjacency_.cols())
      throw DimensionError("adjacency must be square");
    if (features_.rows() != adjacency_.rows())
      throw DimensionError("feature rows (" + std::to_string(features_.rows()) +
                           ") != node count (" + std::to_string(adjacency_.rows()) + ")");
    for (Index j = 0; j < adjacency_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(adjacency_, j); it; ++it)
        if (!(it.value() >= 0.0)) throw PreconditionError("adjacency has a negative or NaN entry");
    SparseMatrix asym = adjacency_ - SparseMatrix(adjacency_.transpose());
    for (Index j = 0; j < asym.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(asym, j); it; ++it)
        if (it.value() != 0.0) throw PreconditionError("adjacency is not symmetric");
    for (Index j = 0; j < features_.outerSize(); ++j)
      for (SparseMatrix::InnerIterator it(features_, j); it; ++it)
        if (!(it.value() >= 0.0))
          throw PreconditionError("negative feature value at (" + std::to_string(it.row()) + ", " +
                                  std::to_string(it.col()) + ")");
    if (labels_) {
      if (static_cast<Index>(labels_->size()) != num_nodes())
        throw DimensionError("label count != node count");
      std::vector<char> seen;
      for (int c : *labels_) {
        if (c < 0) throw PreconditionError("negative class id");
        if (static_cast<std::size_t>(c) >= seen.size()) seen.resize(c + 1, 0);
        seen[c] = 1;
      }
      if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw PreconditionError("class ids are not contiguous from 0");
    }
  }

  SparseMatrix adjacency_;
  SparseMatrix features_;
  std::optional<std::vector<int>> labels_;
};

/// Hard assignment of n nodes to k blocks (the binary matrix F, stored as one
/// block id per node).
class Allocation {
 public:
  Allocation() = default;

  Allocation(std::vector<int> block_of, int k) : block_of_(std::move(block_of)), k_(k) {
    if (k_ < 1) throw PreconditionError("block count must be >= 1");
    for (int b : block_of_)
      if (b < 0 || b >= k_) throw PreconditionError("block id out of range");
  }

  Index num_nodes() const { return static_cast<Index>(block_of_.size()); }
  int num_blocks() const { return k_; }
  int block_of(Index node) const { return block_of_[static_cast<std::size_t>(node)]; }
  const std::vector<int>& ids() const { return block_of_; }

  /// diag(FᵀF).
  std::vector<Index> block_sizes() const {
    std::vector<Index> sizes(static_cast<std::size_t>(k_), 0);
    for (int b : block_of_) ++sizes[static_cast<std::size_t>(b)];
    return sizes;
  }

  bool has_empty_block() const {
    auto s = block_sizes();
    return std::find(s.begin(), s.end(), Index{0}) != s.end();
  }

  void require_nonempty_blocks() const {
    auto s = block_sizes();
    for (int c = 0; c < k_; ++c)
      if (s[static_cast<std::size_t>(c)] == 0)
        throw PreconditionError("block " + std::to_string(c) + " is empty (FᵀF must have a positive diagonal)");
  }

  Matrix dense() const {
    Matrix f = Matrix::Zero(num_nodes(), k_);
    for (Index i = 0; i < num_nodes(); ++i) f(i, block_of(i)) = 1.0;
    return f;
  }

  SparseMatrix sparse() const {
    std::vector<Triplet> t;
    t.reserve(block_of_.size());
    for (Index i = 0; i < num_nodes(); ++i) t.emplace_back(i, block_of(i), 1.0);
    SparseMatrix f(num_nodes(), k_);
    f.setFromTriplets(t.begin(), t.end());
    return f;
  }

  friend bool operator==(const Allocation&, const Allocation&) = default;

 private:
  std::vector<int> block_of_;
  int k_ = 0;
};

/// Allocation F together with its image matrix M.
struct BlockModel {
  Allocation allocation;
  Matrix image;

  int num_blocks() const { return allocation.num_blocks(); }
  Index num_nodes() const { return allocation.num_nodes(); }
  std::vector<Index> block_sizes() const { return allocation.block_sizes(); }

  void validate() const {
    allocation.require_nonempty_blocks();
    if (image.rows() != num_blocks() || image.cols() != num_blocks())
      throw DimensionError("image matrix must be k x k");
    if (!((image.array() >= 0.0).all())) throw PreconditionError("image matrix has a negative or NaN entry");
  }
};

/// Nonnegative importance score per feature.
using FeatureScores = Vector;

inline Index count_nonzero(const Vector& r) { return (r.array() != 0.0).count(); }

namespace detail {

inline void require_scores(const SparseMatrix& features, const Vector& r) {
  if (r.size() != features.cols())
    throw DimensionError("scores length " + std::to_string(r.size()) + " != feature count " +
                         std::to_string(features.cols()));
}

inline void require_allocation(Index n, const Allocation& f) {
  if (f.num_nodes() != n)
    throw DimensionError("allocation covers " + std::to_string(f.num_nodes()) + " nodes, expected " +
                         std::to_string(n));
  f.require_nonempty_blocks();
}

}  // namespace detail

/// Â = Y·diag(r)·Yᵀ, materialized.
inline Matrix induced_adjacency(const SparseMatrix& features, const Vector& r) {
  detail::require_scores(features, r);
  Matrix yr = Matrix(features) * r.asDiagonal();
  Matrix a = yr * Matrix(features).transpose();
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose();  // exact symmetry
  return a;
}

inline Matrix induced_adjacency(const AttributedNetwork& net, const Vector& r) {
  return induced_adjacency(net.features(), r);
}

/// Â as an implicit operator v ↦ Y(diag(r)(Yᵀv)); never forms the n×n matrix.
class InducedAdjacencyOperator {
 public:
  InducedAdjacencyOperator(const SparseMatrix& features, Vector r) : features_(&features), r_(std::move(r)) {
    detail::require_scores(features, r_);
  }

  Index rows() const { return features_->rows(); }

  Vector apply(const Vector& v) const {
    if (v.size() != rows()) throw DimensionError("operand length != node count");
    Vector t = features_->transpose() * v;
    t.array() *= r_.array();
    return *features_ * t;
  }

  Matrix materialize() const {
    Matrix out(rows(), rows());
    for (Index j = 0; j < rows(); ++j) out.col(j) = apply(Vector::Unit(rows(), j));
    return out;
  }

 private:
  const SparseMatrix* features_;
  Vector r_;
};

/// D⁻¹FᵀAFD⁻¹: the minimizer of ‖A − FXFᵀ‖_F over X when every block of F is
/// non-empty. Works for dense or sparse A.
template <typename AdjacencyT>
Matrix image_matrix_closed_form(const AdjacencyT& adjacency, const Allocation& allocation) {
  if (adjacency.rows() != adjacency.cols()) throw DimensionError("adjacency must be square");
  detail::require_allocation(adjacency.rows(), allocation);
  const Matrix f = allocation.dense();
  Matrix m = f.transpose() * (adjacency * f);
  const auto sizes = allocation.block_sizes();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      m(i, j) /= static_cast<double>(sizes[i]) * static_cast<double>(sizes[j]);
  return m;
}

/// D̄ = D⁻¹FᵀY, the k×m matrix of per-block feature means.
inline Matrix block_means(const SparseMatrix& features, const Allocation& allocation) {
  detail::require_allocation(features.rows(), allocation);
  Matrix means = Matrix::Zero(allocation.num_blocks(), features.cols());
  for (Index j = 0; j < features.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(features, j); it; ++it)
      means(allocation.block_of(it.row()), it.col()) += it.value();
  const auto sizes = allocation.block_sizes();
  for (int c = 0; c < allocation.num_blocks(); ++c) means.row(c) /= static_cast<double>(sizes[c]);
  return means;
}

/// M̂(r) = D̄·diag(r)·D̄ᵀ, the image matrix of F on the induced graph.
inline Matrix mhat_of_r(const Matrix& means, const Vector& r) {
  if (r.size() != means.cols()) throw DimensionError("scores length != feature count");
  return means * r.asDiagonal() * means.transpose();
}

inline Matrix mhat_of_r(const AttributedNetwork& net, const Allocation& allocation, const Vector& r) {
  detail::require_scores(net.features(), r);
  return mhat_of_r(block_means(net.features(), allocation), r);
}

/// ‖A − FMFᵀ‖_F / ‖A‖_F. For sparse A the zero entries are accounted for by
/// per-block-pair counts, so no dense n×n matrix is formed.
inline double rre(const SparseMatrix& adjacency, const BlockModel& bm) {
  detail::require_allocation(adjacency.rows(), bm.allocation);
  const int k = bm.num_blocks();
  Matrix stored = Matrix::Zero(k, k);
  double num = 0.0, den = 0.0;
  for (Index j = 0; j < adjacency.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(adjacency, j); it; ++it) {
      const int bi = bm.allocation.block_of(it.row()), bj = bm.allocation.block_of(it.col());
      const double diff = it.value() - bm.image(bi, bj);
      num += diff * diff;
      den += it.value() * it.value();
      stored(bi, bj) += 1.0;
    }
  if (den == 0.0) throw PreconditionError("rre: adjacency has zero Frobenius norm");
  const auto sizes = bm.block_sizes();
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) {
      const double zeros = static_cast<double>(sizes[a]) * static_cast<double>(sizes[b]) - stored(a, b);
      num += zeros * bm.image(a, b) * bm.image(a, b);
    }
  return std::sqrt(num) / std::sqrt(den);
}

inline double rre(const Matrix& adjacency, const BlockModel& bm) {
  detail::require_allocation(adjacency.rows(), bm.allocation);
  double num = 0.0, den = 0.0;
  for (Index j = 0; j < adjacency.cols(); ++j)
    for (Index i = 0; i < adjacency.rows(); ++i) {
      const double diff = adjacency(i, j) - bm.image(bm.allocation.block_of(i), bm.allocation.block_of(j));
      num += diff * diff;
      den += adjacency(i, j) * adjacency(i, j);
    }
  if (den == 0.0) throw PreconditionError("rre: adjacency has zero Frobenius norm");
  return std::sqrt(num) / std::sqrt(den);
}

}  // namespace bmfs

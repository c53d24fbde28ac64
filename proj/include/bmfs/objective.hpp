#pragma once

// The two losses of block-model guided feature selection and their gradients
// with respect to the feature scores r.
//
//   L_b(r) = ‖Â − FM̂(r)Fᵀ‖²_F / ‖Â‖²_F,      Â = Y·diag(r)·Yᵀ
//   L_m(r) = Σ_i KL(Q_i(r) ‖ P_i)
//
// With G₁ = YᵀY and G₂ = YᵀFD⁻¹FᵀY, ‖Â‖² = rᵀ(G₁⊙G₁)r and
// ‖FM̂Fᵀ‖² = rᵀ(G₂⊙G₂)r. G₂ has rank ≤ k, so (G₂⊙G₂)r is evaluated as
// diag(Bᵀ·M̂(r)·B) with B = FᵀY, which costs O(k²m) instead of O(m²).

#include <cmath>
#include <string>

#include "bmfs/core_model.hpp"

namespace bmfs {

enum class GradientMode {
  analytic,       // ∂L_m/∂Q = log(Q/P) + 1
  paper_literal,  // ∂L_m/∂Q = log(Q/P) + P
};

inline const char* to_string(GradientMode m) { return m == GradientMode::analytic ? "analytic" : "paper_literal"; }

inline GradientMode parse_gradient_mode(const std::string& s) {
  if (s == "analytic") return GradientMode::analytic;
  if (s == "paper_literal") return GradientMode::paper_literal;
  throw PreconditionError("unknown gradient mode '" + s + "' (expected analytic or paper_literal)");
}

/// Immutable per-(network, block model) precomputation.
class ObjectiveContext {
 public:
  ObjectiveContext(const SparseMatrix& features, const BlockModel& bm, double delta = 1e-6) : delta_(delta) {
    if (!(delta >= 0.0)) throw PreconditionError("delta must be >= 0");
    bm.validate();
    if (bm.num_nodes() != features.rows()) throw DimensionError("block model and features disagree on node count");
    means_ = bmfs::block_means(features, bm.allocation);
    const auto sizes = bm.block_sizes();
    sizes_.resize(bm.num_blocks());
    for (int c = 0; c < bm.num_blocks(); ++c) sizes_[c] = static_cast<double>(sizes[c]);
    block_sums_ = sizes_.asDiagonal() * means_;

    gram_full_ = SparseMatrix(features.transpose() * features);
    gram_full_.prune(0.0);
    gram_full_sq_ = gram_full_.cwiseProduct(gram_full_);

    image_ = bm.image;
    Matrix shifted = image_.array() + delta_;
    Vector rows = shifted.rowwise().sum();
    for (Index i = 0; i < rows.size(); ++i)
      if (!(rows(i) > 0.0)) throw PreconditionError("image matrix row " + std::to_string(i) + " sums to zero");
    probs_ = rows.cwiseInverse().asDiagonal() * shifted;
  }

  ObjectiveContext(const AttributedNetwork& net, const BlockModel& bm, double delta = 1e-6)
      : ObjectiveContext(net.features(), bm, delta) {}

  Index num_features() const { return means_.cols(); }
  int num_blocks() const { return static_cast<int>(means_.rows()); }
  double delta() const { return delta_; }

  /// G₁ = YᵀY.
  const SparseMatrix& gram_full() const { return gram_full_; }
  /// G₁ ⊙ G₁.
  const SparseMatrix& gram_full_squared() const { return gram_full_sq_; }
  /// G₂ = YᵀFD⁻¹FᵀY, materialized on request (m×m).
  Matrix gram_block() const { return block_sums_.transpose() * sizes_.cwiseInverse().asDiagonal() * block_sums_; }
  /// D̄ = D⁻¹FᵀY.
  const Matrix& block_means() const { return means_; }
  /// B = FᵀY.
  const Matrix& block_sums() const { return block_sums_; }
  const Vector& block_sizes() const { return sizes_; }
  const Matrix& image() const { return image_; }
  /// P: rows of M + δ normalized to sum to one.
  const Matrix& target_probs() const { return probs_; }

  void require_scores(const Vector& r) const {
    if (r.size() != num_features())
      throw DimensionError("scores length " + std::to_string(r.size()) + " != feature count " +
                           std::to_string(num_features()));
  }

 private:
  double delta_;
  Matrix means_;
  Matrix block_sums_;
  Vector sizes_;
  SparseMatrix gram_full_;
  SparseMatrix gram_full_sq_;
  Matrix image_;
  Matrix probs_;
};

namespace detail {

struct BlockTerms {
  Vector full;    // (G₁⊙G₁)r
  Vector block;   // (G₂⊙G₂)r
  double full_norm;   // rᵀ(G₁⊙G₁)r = ‖Â‖²
  double block_norm;  // rᵀ(G₂⊙G₂)r = ‖FM̂Fᵀ‖²
};

inline BlockTerms block_terms(const ObjectiveContext& ctx, const Vector& r) {
  ctx.require_scores(r);
  BlockTerms t;
  t.full = ctx.gram_full_squared() * r;
  const Matrix mhat = mhat_of_r(ctx.block_means(), r);
  const Matrix& b = ctx.block_sums();
  t.block = ((mhat * b).array() * b.array()).colwise().sum().transpose();
  t.full_norm = r.dot(t.full);
  t.block_norm = r.dot(t.block);
  if (!(t.full_norm > 0.0))
    throw NumericalError("L_b undefined: ‖Y·diag(r)·Yᵀ‖_F = 0 (r is zero or supported on all-zero features)");
  return t;
}

struct ProbabilityTerms {
  Matrix q;
  Vector row_sums;  // rows of M̂(r) + δ
};

inline ProbabilityTerms probability_terms(const ObjectiveContext& ctx, const Vector& r) {
  ctx.require_scores(r);
  ProbabilityTerms t;
  Matrix shifted = mhat_of_r(ctx.block_means(), r).array() + ctx.delta();
  t.row_sums = shifted.rowwise().sum();
  for (Index i = 0; i < t.row_sums.size(); ++i)
    if (!(t.row_sums(i) > 0.0)) throw NumericalError("L_m undefined: row " + std::to_string(i) + " of M̂(r)+δ sums to 0");
  t.q = t.row_sums.cwiseInverse().asDiagonal() * shifted;
  return t;
}

inline double kl_rows(const Matrix& q, const Matrix& p) {
  double total = 0.0;
  for (Index j = 0; j < q.cols(); ++j)
    for (Index i = 0; i < q.rows(); ++i)
      if (q(i, j) > 0.0) total += q(i, j) * std::log(q(i, j) / p(i, j));
  if (!std::isfinite(total)) throw NumericalError("L_m is not finite (P has a zero where Q is positive)");
  return total;
}

}  // namespace detail

inline double loss_b(const ObjectiveContext& ctx, const Vector& r) {
  const auto t = detail::block_terms(ctx, r);
  return 1.0 - t.block_norm / t.full_norm;
}

inline Vector grad_b(const ObjectiveContext& ctx, const Vector& r) {
  const auto t = detail::block_terms(ctx, r);
  const double lb = 1.0 - t.block_norm / t.full_norm;
  return (2.0 / t.full_norm) * (t.full - t.block - lb * t.full);
}

inline double loss_m(const ObjectiveContext& ctx, const Vector& r) {
  return detail::kl_rows(detail::probability_terms(ctx, r).q, ctx.target_probs());
}

/// ∂Q/∂r_l = diag(1/((M̂+δ)1))·[d_l·d_lᵀ − (d_lᵀ1)·diag(d_l)·Q], d_l = D̄_{·,l}.
/// Every row sums to zero.
inline Matrix probability_jacobian(const ObjectiveContext& ctx, const Vector& r, Index feature) {
  const auto t = detail::probability_terms(ctx, r);
  const Vector d = ctx.block_means().col(feature);
  Matrix out = d * d.transpose() - d.sum() * d.asDiagonal() * t.q;
  return t.row_sums.cwiseInverse().asDiagonal() * out;
}

/// ∂L_m/∂r_l = tr(Gᵀ·∂Q/∂r_l), with G chosen by `mode`. All m coordinates are
/// evaluated together in O(k²m).
inline Vector grad_m(const ObjectiveContext& ctx, const Vector& r, GradientMode mode = GradientMode::analytic) {
  const auto t = detail::probability_terms(ctx, r);
  const Matrix& p = ctx.target_probs();
  Matrix g = (t.q.array() / p.array()).log();
  if (mode == GradientMode::analytic)
    g.array() += 1.0;
  else
    g += p;
  if (!g.allFinite()) throw NumericalError("∂L_m/∂Q is not finite (Q or P has a zero entry; use delta > 0)");

  const Matrix& dbar = ctx.block_means();
  const Matrix gd = g * dbar;                                            // k×m
  const Vector gq = (g.array() * t.q.array()).rowwise().sum();          // k
  const Vector col_sums = dbar.colwise().sum().transpose();             // m
  const Matrix weighted = t.row_sums.cwiseInverse().asDiagonal() * dbar;  // D̄_il / s_i
  Matrix inner = gd - gq * col_sums.transpose();
  return (weighted.array() * inner.array()).colwise().sum().transpose();
}

/// Both losses and both gradients at one point.
struct ObjectiveValues {
  double loss_b = 0.0;
  double loss_m = 0.0;
  Vector grad_b;
  Vector grad_m;
};

inline ObjectiveValues evaluate_objective(const ObjectiveContext& ctx, const Vector& r, GradientMode mode) {
  ObjectiveValues v;
  const auto t = detail::block_terms(ctx, r);
  v.loss_b = 1.0 - t.block_norm / t.full_norm;
  v.grad_b = (2.0 / t.full_norm) * (t.full - t.block - v.loss_b * t.full);
  v.loss_m = loss_m(ctx, r);
  v.grad_m = grad_m(ctx, r, mode);
  return v;
}

}  // namespace bmfs

#pragma once

// Projected gradient descent on the unit sphere ∩ nonnegative orthant, driven
// by a fixed-ratio mix of the two normalized loss gradients plus an l1 push.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "bmfs/objective.hpp"

namespace bmfs {

struct SolverConfig {
  double beta_bar = 0.6;  // weight of the normalized L_m gradient
  double gamma = 0.0;     // sparsity weight
  double eta = 1e-2;      // constant step size
  int max_iterations = 500;
  double tolerance = 1e-6;
  int patience = 10;  // consecutive sub-tolerance changes of L_b + L_m needed to stop
  GradientMode gradient_mode = GradientMode::analytic;
  double delta = 1e-6;
  std::uint64_t seed = 0;  // the iteration is deterministic; kept for provenance

  void validate() const {
    if (!(beta_bar >= 0.0 && beta_bar <= 1.0)) throw PreconditionError("beta_bar must lie in [0,1]");
    if (!(gamma >= 0.0)) throw PreconditionError("gamma must be >= 0");
    if (!(eta > 0.0)) throw PreconditionError("eta must be > 0");
    if (max_iterations < 1) throw PreconditionError("max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw PreconditionError("tolerance must be > 0");
    if (patience < 1) throw PreconditionError("patience must be >= 1");
    if (!(delta >= 0.0)) throw PreconditionError("delta must be >= 0");
  }
};

struct TraceRecord {
  int iteration = 0;
  double loss_b = 0.0;
  double loss_m = 0.0;
  double loss_total = 0.0;  // L_b + L_m
  double grad_norm = 0.0;   // ‖combined gradient‖₂ at this iterate
  Index nnz = 0;
};

enum class StopReason { tolerance, max_iterations };

struct ObjectiveTrace {
  std::vector<TraceRecord> records;  // record 0 is the initial point
  StopReason stop = StopReason::max_iterations;
  std::vector<std::string> warnings;

  bool converged() const { return stop == StopReason::tolerance; }
  int iterations() const { return records.empty() ? 0 : records.back().iteration; }
};

struct SolverResult {
  FeatureScores scores;
  ObjectiveTrace trace;
};

/// Raised when a run cannot continue; carries the trace up to the failure.
class SolverAborted : public NumericalError {
 public:
  SolverAborted(const std::string& what, ObjectiveTrace trace) : NumericalError(what), trace_(std::move(trace)) {}
  const ObjectiveTrace& trace() const noexcept { return trace_; }

 private:
  ObjectiveTrace trace_;
};

/// (1−β̄)·gb/‖gb‖ + β̄·gm/‖gm‖ + γ·1/√m. A gradient with zero norm contributes
/// nothing; a note is appended to `warnings` when one is supplied.
inline Vector combined_gradient(const Vector& gb, const Vector& gm, double beta_bar, double gamma,
                                std::vector<std::string>* warnings = nullptr) {
  if (gb.size() != gm.size()) throw DimensionError("combined_gradient: gradient lengths differ");
  const Index m = gb.size();
  Vector out = Vector::Constant(m, gamma / std::sqrt(static_cast<double>(m)));
  const double nb = gb.norm(), nm = gm.norm();
  if (nb > 0.0)
    out += ((1.0 - beta_bar) / nb) * gb;
  else if (warnings)
    warnings->emplace_back("grad_b vanished; term dropped");
  if (nm > 0.0)
    out += (beta_bar / nm) * gm;
  else if (warnings)
    warnings->emplace_back("grad_m vanished; term dropped");
  return out;
}

inline Vector combined_gradient(const Vector& gb, const Vector& gm, const SolverConfig& cfg,
                                std::vector<std::string>* warnings = nullptr) {
  return combined_gradient(gb, gm, cfg.beta_bar, cfg.gamma, warnings);
}

/// r ← r − η·grad, clamp at 0, rescale to unit l2 norm.
inline FeatureScores pgd_step(const Vector& r, const Vector& grad, double eta) {
  if (r.size() != grad.size()) throw DimensionError("pgd_step: length mismatch");
  Vector next = (r - eta * grad).cwiseMax(0.0);
  const double norm = next.norm();
  if (!(norm > 0.0))
    throw DegenerateStepError("pgd_step: every coordinate was clamped to zero (step size " + std::to_string(eta) +
                              " too large)");
  return next / norm;
}

inline FeatureScores uniform_scores(Index m) { return Vector::Constant(m, 1.0 / std::sqrt(static_cast<double>(m))); }

/// Runs the selection from r = 1/‖1‖₂ until L_b + L_m changes by less than
/// `tolerance` for `patience` consecutive iterations or the cap is reached.
inline SolverResult optimize(const ObjectiveContext& ctx, const SolverConfig& cfg) {
  cfg.validate();
  SolverResult out;
  ObjectiveTrace& trace = out.trace;
  trace.records.reserve(static_cast<std::size_t>(cfg.max_iterations) + 1);
  Vector& r = out.scores;
  r = uniform_scores(ctx.num_features());

  Vector grad;
  auto step = [&](int iteration) {
    ObjectiveValues v;
    try {
      v = evaluate_objective(ctx, r, cfg.gradient_mode);
    } catch (const NumericalError& e) {
      throw SolverAborted(std::string("iteration ") + std::to_string(iteration) + ": " + e.what(), trace);
    }
    std::vector<std::string> notes;
    grad = combined_gradient(v.grad_b, v.grad_m, cfg, &notes);
    for (auto& n : notes) trace.warnings.push_back("iteration " + std::to_string(iteration) + ": " + n);
    TraceRecord rec{iteration, v.loss_b, v.loss_m, v.loss_b + v.loss_m, grad.norm(), count_nonzero(r)};
    if (!std::isfinite(rec.loss_total) || !std::isfinite(rec.grad_norm) || !grad.allFinite())
      throw SolverAborted("iteration " + std::to_string(iteration) + ": non-finite loss or gradient", trace);
    trace.records.push_back(rec);
  };

  step(0);
  int quiet = 0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    try {
      r = pgd_step(r, grad, cfg.eta);
    } catch (const DegenerateStepError& e) {
      throw SolverAborted(std::string("iteration ") + std::to_string(it) + ": " + e.what(), trace);
    }
    step(it);
    const auto& recs = trace.records;
    const double change = std::abs(recs[recs.size() - 1].loss_total - recs[recs.size() - 2].loss_total);
    quiet = change < cfg.tolerance ? quiet + 1 : 0;
    if (quiet >= cfg.patience) {
      trace.stop = StopReason::tolerance;
      return out;
    }
  }
  trace.stop = StopReason::max_iterations;
  return out;
}

inline SolverResult optimize(const AttributedNetwork& net, const BlockModel& bm, const SolverConfig& cfg) {
  cfg.validate();
  return optimize(ObjectiveContext(net, bm, cfg.delta), cfg);
}

/// Indices of the d largest scores, descending; ties broken by ascending index.
/// Zero scores are never selected.
inline std::vector<Index> top_d_features(const Vector& r, Index d) {
  if (d < 1) throw PreconditionError("top_d_features: d must be >= 1");
  const Index nnz = count_nonzero(r);
  if (nnz < d) throw InsufficientSupportError(static_cast<std::size_t>(nnz), static_cast<std::size_t>(d));
  std::vector<Index> idx(static_cast<std::size_t>(r.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return r(a) > r(b); });
  idx.resize(static_cast<std::size_t>(d));
  return idx;
}

/// 1 − aᵀb / (‖a‖‖b‖), floored at 0 against rounding.
inline double cosine_distance(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("cosine_distance: length mismatch");
  const double denom = a.norm() * b.norm();
  if (!(denom > 0.0)) throw NumericalError("cosine_distance: zero vector");
  return std::max(0.0, 1.0 - a.dot(b) / denom);
}

}  // namespace bmfs

#pragma once

// Candidate block models for the structural graph: orthogonal nonnegative
// tri-factorization A ≈ F M Fᵀ by multiplicative updates, hard binarization,
// RRE-based selection and random re-allocation of nodes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "bmfs/core_model.hpp"
#include "bmfs/parallel.hpp"

namespace bmfs {

struct OnmtfConfig {
  int k = 2;
  int iterations = 100;
  std::uint64_t seed = 0;
  double epsilon = 1e-12;
};

struct OnmtfResult {
  Matrix allocation;  // n×k, nonnegative, continuous
  Matrix image;       // k×k
  // ‖A − FMFᵀ‖_F before the first update and after each iteration.
  std::vector<double> objective;
};

namespace detail {

// ‖A − FMFᵀ‖_F from k×k quantities: ‖A‖² − 2⟨FᵀAF, M⟩ + ⟨FᵀF·M·FᵀF, M⟩.
inline double factor_objective(double a_sq, const Matrix& ftaf, const Matrix& ftf, const Matrix& m) {
  const double fit = a_sq - 2.0 * (ftaf.array() * m.array()).sum() + ((ftf * m * ftf).array() * m.array()).sum();
  return std::sqrt(std::max(fit, 0.0));
}

inline void require_finite(const Matrix& x, const char* what, int iteration) {
  if (!x.allFinite())
    throw NumericalError(std::string("fit_onmtf: non-finite ") + what + " at iteration " + std::to_string(iteration));
}

}  // namespace detail

/// Fits A ≈ F M Fᵀ with F ≥ 0, M ≥ 0 and FᵀF ≈ I via
///   M ← M ⊙ (FᵀAF) ⊘ (FᵀF·M·FᵀF)
///   F ← F ⊙ sqrt((AFM) ⊘ (F·FᵀAF·M))
/// with `epsilon` added to every denominator. F starts uniform on (0,1) with
/// unit-norm columns; M starts at D⁻¹FᵀAFD⁻¹ with D = diag(FᵀF) = I.
template <typename AdjacencyT>
OnmtfResult fit_onmtf(const AdjacencyT& adjacency, const OnmtfConfig& cfg) {
  const Index n = adjacency.rows();
  if (adjacency.cols() != n) throw DimensionError("fit_onmtf: adjacency must be square");
  if (cfg.k < 1) throw PreconditionError("fit_onmtf: k must be >= 1");
  if (cfg.k > n) throw PreconditionError("fit_onmtf: k exceeds node count");
  if (cfg.iterations < 1) throw PreconditionError("fit_onmtf: iterations must be >= 1");
  const double a_sq = adjacency.squaredNorm();
  if (a_sq == 0.0) throw PreconditionError("fit_onmtf: adjacency is all zeros");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  OnmtfResult out;
  Matrix& f = out.allocation;
  f.resize(n, cfg.k);
  for (Index j = 0; j < f.cols(); ++j)
    for (Index i = 0; i < n; ++i) {
      double v = unit(rng);
      while (v == 0.0) v = unit(rng);
      f(i, j) = v;
    }
  f.colwise().normalize();

  Matrix af = adjacency * f;
  Matrix ftaf = f.transpose() * af;
  Matrix ftf = f.transpose() * f;
  Matrix& m = out.image;
  m = ftaf;
  out.objective.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
  out.objective.push_back(detail::factor_objective(a_sq, ftaf, ftf, m));

  const double eps = cfg.epsilon;
  for (int it = 1; it <= cfg.iterations; ++it) {
    Matrix m_den = ftf * m * ftf;
    m.array() *= ftaf.array() / (m_den.array() + eps);
    detail::require_finite(m, "image matrix", it);

    Matrix numer = af * m;
    Matrix denom = f * (ftaf * m);
    f.array() *= (numer.array() / (denom.array() + eps)).sqrt();
    detail::require_finite(f, "allocation", it);

    af = adjacency * f;
    ftaf = f.transpose() * af;
    ftf = f.transpose() * f;
    const double obj = detail::factor_objective(a_sq, ftaf, ftf, m);
    if (!std::isfinite(obj)) throw NumericalError("fit_onmtf: non-finite objective at iteration " + std::to_string(it));
    out.objective.push_back(obj);
  }
  return out;
}

/// One-hot at each row's argmax (lowest block index wins ties). Any block left
/// empty receives, from the nodes whose block still has at least two members,
/// the one with the largest continuous membership in that block.
inline Allocation binarize_allocation(const Matrix& soft) {
  const Index n = soft.rows();
  const int k = static_cast<int>(soft.cols());
  if (k < 1) throw PreconditionError("binarize_allocation: need at least one block");
  if (n < k) throw PreconditionError("binarize_allocation: fewer nodes than blocks; cannot fill every block");
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (soft(i, c) > soft(i, best)) best = c;
    ids[i] = best;
    ++sizes[best];
  }
  for (int c = 0; c < k; ++c) {
    if (sizes[c] > 0) continue;
    Index pick = -1;
    for (Index i = 0; i < n; ++i) {
      if (sizes[ids[i]] < 2) continue;
      if (pick < 0 || soft(i, c) > soft(pick, c)) pick = i;
    }
    --sizes[ids[pick]];
    ids[pick] = c;
    ++sizes[c];
  }
  return Allocation(std::move(ids), k);
}

struct Candidate {
  BlockModel model;
  double rre = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> objective_trace;
};

/// Candidates in generation order; index i was fitted with seed base_seed + i.
using CandidateSet = std::vector<Candidate>;

/// Fits `count` ONMtF models with consecutive seeds, binarizes each allocation
/// and recomputes its image matrix in closed form on `adjacency`.
inline CandidateSet generate_candidates(const SparseMatrix& adjacency, int k, int count, std::uint64_t base_seed,
                                        int iterations = 100, unsigned workers = 0) {
  if (count < 1) throw PreconditionError("generate_candidates: count must be >= 1");
  CandidateSet out(static_cast<std::size_t>(count));
  parallel_for(out.size(), workers, [&](std::size_t i) {
    OnmtfConfig cfg{k, iterations, base_seed + i, 1e-12};
    OnmtfResult fit = fit_onmtf(adjacency, cfg);
    Candidate& c = out[i];
    c.seed = cfg.seed;
    c.model.allocation = binarize_allocation(fit.allocation);
    c.model.image = image_matrix_closed_form(adjacency, c.model.allocation);
    c.rre = rre(adjacency, c.model);
    c.objective_trace = std::move(fit.objective);
  });
  return out;
}

/// Position of the lowest-RRE candidate; ties go to the earliest one.
inline std::size_t best_rre_index(const CandidateSet& cs) {
  if (cs.empty()) throw PreconditionError("select_best_rre: empty candidate set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < cs.size(); ++i)
    if (cs[i].rre < cs[best].rre) best = i;
  return best;
}

inline const BlockModel& select_best_rre(const CandidateSet& cs) { return cs[best_rre_index(cs)].model; }

enum class PerturbMode { keep_image, recompute_image };

/// Number of nodes re-allocated at a given fraction: ⌊fraction·n⌋.
inline Index perturbation_count(double fraction, Index n) {
  // The small offset keeps e.g. 0.29·100 from flooring to 28.
  return static_cast<Index>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

/// Moves exactly ⌊fraction·n⌋ nodes, sampled without replacement, to a
/// uniformly chosen different block. Draws that would empty a block are
/// resampled up to `max_retries` times.
inline BlockModel perturb_allocation(const BlockModel& bm, const SparseMatrix& adjacency, double fraction,
                                     PerturbMode mode, std::uint64_t seed, int max_retries = 100) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw PreconditionError("perturb_allocation: fraction must be in [0,1]");
  bm.validate();
  const Index n = bm.num_nodes();
  const int k = bm.num_blocks();
  const Index count = perturbation_count(fraction, n);
  if (count == 0) return bm;
  if (k < 2) throw PreconditionError("perturb_allocation: a single block cannot be re-allocated");

  std::mt19937_64 rng(seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::uniform_int_distribution<int> other(0, k - 2);
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> ids = bm.allocation.ids();
    for (Index s = 0; s < count; ++s) {
      const Index node = order[s];
      const int draw = other(rng);
      ids[node] = draw >= ids[node] ? draw + 1 : draw;
    }
    Allocation moved(std::move(ids), k);
    if (moved.has_empty_block()) continue;
    BlockModel out{std::move(moved), bm.image};
    if (mode == PerturbMode::recompute_image) out.image = image_matrix_closed_form(adjacency, out.allocation);
    return out;
  }
  throw PreconditionError("perturb_allocation: every draw emptied a block after " + std::to_string(max_retries) +
                          " retries");
}

}  // namespace bmfs

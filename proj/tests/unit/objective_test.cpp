#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "bmfs/objective.hpp"
#include "support/oracles.hpp"

using namespace bmfs;

namespace {

struct Instance {
  Matrix y;
  std::vector<int> ids;
  int k;
  Matrix image;
  BlockModel bm;
};

Instance random_instance(std::uint64_t seed, Index n, Index m, int k) {
  oracle::Rng rng(seed);
  Instance inst;
  inst.y = rng.matrix(n, m);
  inst.ids = rng.allocation(n, k);
  inst.k = k;
  inst.image = rng.symmetric(k, 0.05, 1.0);
  inst.bm = BlockModel{Allocation(inst.ids, k), inst.image};
  return inst;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// The gradient of L_b exactly as printed: Ŷ = FD⁻¹FᵀY materialized, every
/// product formed densely.
Vector literal_grad_b(const Instance& inst, const Vector& r) {
  const Matrix f = oracle::one_hot(inst.ids, inst.k);
  const Matrix d_inv = (f.transpose() * f).diagonal().cwiseInverse().asDiagonal();
  const Matrix yhat = f * d_inv * f.transpose() * inst.y;
  const Matrix& y = inst.y;
  const Matrix rr = r.asDiagonal();
  const double norm_sq = std::pow(oracle::frobenius(y * rr * y.transpose()), 2);
  const double lb = oracle::loss_b(y, inst.ids, inst.k, r);
  const Matrix inner = y.transpose() * y * rr * y.transpose() * y +
                       yhat.transpose() * yhat * rr * yhat.transpose() * yhat -
                       2.0 * yhat.transpose() * y * rr * y.transpose() * yhat;
  const Matrix full = y.transpose() * y * rr * y.transpose() * y;
  return 2.0 * inner.diagonal() / norm_sq - 2.0 * lb * full.diagonal() / norm_sq;
}

/// ∂Q/∂r_l from the element-wise expression, with δ added to M̂.
Matrix elementwise_dq(const Instance& inst, const Vector& r, Index l, double delta) {
  const Matrix f = oracle::one_hot(inst.ids, inst.k);
  const Matrix dbar = (f.transpose() * f).diagonal().cwiseInverse().asDiagonal() * f.transpose() * inst.y;
  const Matrix shifted = (dbar * r.asDiagonal() * dbar.transpose()).array() + delta;
  const Matrix q = oracle::row_normalize(shifted);
  Matrix out(inst.k, inst.k);
  for (int i = 0; i < inst.k; ++i)
    for (int j = 0; j < inst.k; ++j)
      out(i, j) = (dbar(i, l) * dbar(j, l) - q(i, j) * dbar(i, l) * dbar.col(l).sum()) / shifted.row(i).sum();
  return out;
}

/// tr(Gᵀ ∂Q/∂r_l) for every l, using the element-wise ∂Q.
Vector literal_grad_m(const Instance& inst, const Vector& r, double delta, bool printed_form) {
  const Matrix f = oracle::one_hot(inst.ids, inst.k);
  const Matrix dbar = (f.transpose() * f).diagonal().cwiseInverse().asDiagonal() * f.transpose() * inst.y;
  const Matrix q = oracle::row_normalize((dbar * r.asDiagonal() * dbar.transpose()).array() + delta);
  const Matrix p = oracle::row_normalize(inst.image.array() + delta);
  Matrix g = (q.array() / p.array()).log();
  if (printed_form)
    g += p;
  else
    g.array() += 1.0;
  Vector out(r.size());
  for (Index l = 0; l < r.size(); ++l) out(l) = (g.transpose() * elementwise_dq(inst, r, l, delta)).trace();
  return out;
}

}  // namespace

TEST(ObjectiveContext, TargetProbabilitiesForSimpleImages) {
  const SparseMatrix y = Matrix(Matrix::Ones(4, 2)).sparseView();
  const Allocation f({0, 0, 1, 1}, 2);
  ObjectiveContext identity(y, BlockModel{f, Matrix::Identity(2, 2)}, 0.0);
  EXPECT_LE((identity.target_probs() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.0);
  ObjectiveContext ones(y, BlockModel{f, Matrix::Ones(2, 2)}, 1e-6);
  EXPECT_LE((ones.target_probs() - Matrix::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ObjectiveContext, TargetRowsAreStochastic) {
  for (int trial = 0; trial < 10; ++trial) {
    const Instance inst = random_instance(10 + trial, 12, 5, 4);
    ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
    const Matrix& p = ctx.target_probs();
    EXPECT_LE((p.rowwise().sum() - Vector::Ones(4)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GT(p.minCoeff(), 0.0);
  }
}

TEST(ObjectiveContext, RejectsBadInputs) {
  const SparseMatrix y = Matrix(Matrix::Ones(3, 2)).sparseView();
  EXPECT_THROW(ObjectiveContext(y, BlockModel{Allocation({0, 0, 0}, 2), Matrix::Ones(2, 2)}), PreconditionError);
  EXPECT_THROW(ObjectiveContext(y, BlockModel{Allocation({0, 1}, 2), Matrix::Ones(2, 2)}), DimensionError);
  EXPECT_THROW(ObjectiveContext(y, BlockModel{Allocation({0, 1, 1}, 2), Matrix::Ones(2, 2)}, -1.0), PreconditionError);
  // a zero row in M with δ = 0 cannot be normalized
  Matrix image = Matrix::Ones(2, 2);
  image.row(1).setZero();
  EXPECT_THROW(ObjectiveContext(y, BlockModel{Allocation({0, 1, 1}, 2), image}, 0.0), PreconditionError);
}

TEST(ObjectiveContext, GramIdentityAndOrdering) {
  for (int trial = 0; trial < 10; ++trial) {
    const Instance inst = random_instance(30 + trial, 15, 7, 3);
    const Matrix f = oracle::one_hot(inst.ids, 3);
    const Matrix yhat = f * (f.transpose() * f).inverse() * f.transpose() * inst.y;
    ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
    const Matrix g1 = Matrix(ctx.gram_full());
    const Matrix g2 = ctx.gram_block();
    EXPECT_LE((g1 - inst.y.transpose() * inst.y).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((g2 - yhat.transpose() * yhat).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((g2 - yhat.transpose() * inst.y).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((g1 - g1.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((g2 - g2.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g1 - g2);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-8);
  }
}

TEST(LossB, MatchesNaiveDefinition) {
  for (int trial = 0; trial < 20; ++trial) {
    oracle::Rng rng(50 + trial);
    const Index n = rng.integer(10, 50), m = rng.integer(3, 40);
    const int k = rng.integer(2, 5);
    const Instance inst = random_instance(900 + trial, n, m, k);
    ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
    const Vector r = rng.vector(m);
    EXPECT_LE(rel_diff(loss_b(ctx, r), oracle::loss_b(inst.y, inst.ids, k, r)), 1e-10) << "trial " << trial;
  }
}

TEST(LossB, BlockConstantFeaturesGiveZero) {
  oracle::Rng rng(60);
  const auto ids = rng.allocation(12, 3);
  const Matrix y = oracle::one_hot(ids, 3) * rng.matrix(3, 5, 0.1, 1.0);
  ObjectiveContext ctx(y.sparseView(), BlockModel{Allocation(ids, 3), Matrix::Ones(3, 3)});
  for (int t = 0; t < 5; ++t) {
    const Vector r = rng.vector(5);
    EXPECT_NEAR(loss_b(ctx, r), 0.0, 1e-12);
    EXPECT_LE(grad_b(ctx, r).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(LossB, SingletonBlocksGiveZero) {
  oracle::Rng rng(61);
  const Matrix y = rng.matrix(6, 4);
  std::vector<int> ids{0, 1, 2, 3, 4, 5};
  ObjectiveContext ctx(y.sparseView(), BlockModel{Allocation(ids, 6), Matrix::Ones(6, 6)});
  EXPECT_NEAR(loss_b(ctx, rng.vector(4)), 0.0, 1e-12);
}

TEST(LossB, ZeroScoresAreRejected) {
  const Instance inst = random_instance(62, 8, 4, 2);
  ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
  EXPECT_THROW(loss_b(ctx, Vector::Zero(4)), NumericalError);
  EXPECT_THROW(grad_b(ctx, Vector::Zero(4)), NumericalError);
  EXPECT_THROW(loss_b(ctx, Vector::Ones(3)), DimensionError);
}

TEST(LossB, StaysInUnitInterval) {
  for (int trial = 0; trial < 30; ++trial) {
    oracle::Rng rng(70 + trial);
    const Instance inst = random_instance(700 + trial, 20, 9, 3);
    ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
    Vector r = rng.vector(9);
    for (Index l = 0; l < 9; ++l)
      if (rng.coin(0.4)) r(l) = 0.0;
    if (r.isZero()) r(0) = 1.0;
    const double lb = loss_b(ctx, r);
    EXPECT_GE(lb, -1e-14);
    EXPECT_LE(lb, 1.0 + 1e-14);
  }
}

TEST(GradB, MatchesPrintedExpression) {
  for (int trial = 0; trial < 20; ++trial) {
    oracle::Rng rng(80 + trial);
    const Instance inst = random_instance(800 + trial, 10, 6, 2);
    ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
    const Vector r = rng.vector(6, 0.1, 1.0);
    const Vector got = grad_b(ctx, r), expected = literal_grad_b(inst, r);
    EXPECT_LE((got - expected).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
  }
}

TEST(GradB, MatchesFiniteDifferences) {
  for (int trial = 0; trial < 20; ++trial) {
    oracle::Rng rng(90 + trial);
    const Instance inst = random_instance(1000 + trial, 10, 8, 2);
    ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
    const Vector r = rng.vector(8, 0.2, 1.0);
    const Vector fd = oracle::finite_difference([&](const Vector& x) { return loss_b(ctx, x); }, r);
    const Vector got = grad_b(ctx, r);
    for (Index l = 0; l < 8; ++l)
      EXPECT_LE(std::abs(got(l) - fd(l)), 1e-5 * std::max(std::abs(fd(l)), 1e-3)) << "trial " << trial << " l " << l;
  }
}

TEST(LossM, KnownValues) {
  // M chosen as a multiple of M̂(r): Q = P.
  Matrix y(4, 2);
  y << 0.9, 0.1, 0.9, 0.1, 0.5, 0.5, 0.5, 0.5;
  const Allocation f({0, 0, 1, 1}, 2);
  ObjectiveContext same(y.sparseView(), BlockModel{f, Matrix::Constant(2, 2, 1.0)}, 0.0);
  const Matrix mhat = mhat_of_r(same.block_means(), Vector::Ones(2));
  ObjectiveContext matched(y.sparseView(), BlockModel{f, 3.0 * mhat}, 0.0);
  EXPECT_NEAR(loss_m(matched, Vector::Ones(2)), 0.0, 1e-14);
  EXPECT_NEAR(loss_m(matched, 7.0 * Vector::Ones(2)), 0.0, 1e-14);

  Matrix q(2, 2), p(2, 2);
  q << 0.9, 0.1, 0.5, 0.5;
  p << 0.5, 0.5, 0.5, 0.5;
  const double expected = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
  EXPECT_NEAR(detail::kl_rows(q, p), expected, 1e-15);
  EXPECT_NEAR(expected, 0.368, 1e-3);
  EXPECT_NEAR(detail::kl_rows(p, p), 0.0, 0.0);
}

TEST(LossM, MatchesNaiveDefinition) {
  for (int trial = 0; trial < 20; ++trial) {
    oracle::Rng rng(110 + trial);
    const Instance inst = random_instance(1100 + trial, 14, 6, 3);
    for (double delta : {0.0, 1e-6}) {
      ObjectiveContext ctx(inst.y.sparseView(), inst.bm, delta);
      const Vector r = rng.vector(6);
      const double expected = oracle::loss_m(inst.y, inst.ids, 3, inst.image, r, delta);
      EXPECT_LE(std::abs(loss_m(ctx, r) - expected), 1e-12 * std::max(1.0, expected));
      EXPECT_GE(loss_m(ctx, r), 0.0);
    }
  }
}

TEST(GradM, MatchesFiniteDifferences) {
  for (int trial = 0; trial < 20; ++trial) {
    oracle::Rng rng(120 + trial);
    const Instance inst = random_instance(1200 + trial, 10, 8, 2);
    ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
    const Vector r = rng.vector(8, 0.2, 1.0);
    const Vector fd = oracle::finite_difference([&](const Vector& x) { return loss_m(ctx, x); }, r);
    const Vector got = grad_m(ctx, r, GradientMode::analytic);
    for (Index l = 0; l < 8; ++l)
      EXPECT_LE(std::abs(got(l) - fd(l)), 1e-5 * std::max(std::abs(fd(l)), 1e-3)) << "trial " << trial << " l " << l;
  }
}

TEST(GradM, MatchesTraceFormInBothModes) {
  for (int trial = 0; trial < 10; ++trial) {
    oracle::Rng rng(130 + trial);
    const Instance inst = random_instance(1300 + trial, 12, 7, 3);
    ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
    const Vector r = rng.vector(7, 0.1, 1.0);
    for (bool printed : {false, true}) {
      const Vector got = grad_m(ctx, r, printed ? GradientMode::paper_literal : GradientMode::analytic);
      const Vector expected = literal_grad_m(inst, r, ctx.delta(), printed);
      EXPECT_LE((got - expected).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
    }
  }
}

TEST(GradM, JacobianRowsSumToZero) {
  oracle::Rng rng(140);
  const Instance inst = random_instance(1400, 12, 6, 4);
  ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
  const Vector r = rng.vector(6);
  for (Index l = 0; l < 6; ++l) {
    const Matrix dq = probability_jacobian(ctx, r, l);
    EXPECT_LE(dq.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((dq - elementwise_dq(inst, r, l, ctx.delta())).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(GradM, VanishesWhenQEqualsP) {
  oracle::Rng rng(150);
  const Instance inst = random_instance(1500, 12, 5, 3);
  const Vector r = rng.vector(5, 0.1, 1.0);
  const Matrix mhat = mhat_of_r(block_means(inst.y.sparseView(), inst.bm.allocation), r);
  ObjectiveContext ctx(inst.y.sparseView(), BlockModel{inst.bm.allocation, mhat}, 1e-6);
  EXPECT_LE(grad_m(ctx, r, GradientMode::analytic).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(loss_m(ctx, r), 0.0, 1e-14);
}

TEST(GradientMode, ParsesNames) {
  EXPECT_EQ(parse_gradient_mode("analytic"), GradientMode::analytic);
  EXPECT_EQ(parse_gradient_mode("paper_literal"), GradientMode::paper_literal);
  EXPECT_STREQ(to_string(GradientMode::paper_literal), "paper_literal");
  EXPECT_THROW(parse_gradient_mode("exact"), PreconditionError);
}

TEST(Objective, ScaleInvariance) {
  for (int trial = 0; trial < 10; ++trial) {
    oracle::Rng rng(160 + trial);
    const Instance inst = random_instance(1600 + trial, 15, 8, 3);
    ObjectiveContext ctx(inst.y.sparseView(), inst.bm, 0.0);
    const Vector r = rng.vector(8);
    const double lb = loss_b(ctx, r), lm = loss_m(ctx, r);
    for (double c : {0.1, 3.0, 100.0}) {
      EXPECT_NEAR(loss_b(ctx, c * r), lb, 1e-10);
      EXPECT_NEAR(loss_m(ctx, c * r), lm, 1e-10);
    }
  }
}

TEST(Objective, ScaleInvarianceHoldsWithSmallDelta) {
  // With δ > 0 the invariance of L_m is approximate; on O(1) inputs it holds
  // far below the test tolerance.
  for (int trial = 0; trial < 10; ++trial) {
    oracle::Rng rng(170 + trial);
    const Instance inst = random_instance(1700 + trial, 15, 8, 3);
    ObjectiveContext ctx(inst.y.sparseView(), inst.bm, 1e-6);
    const Vector r = rng.vector(8);
    const double lm = loss_m(ctx, r);
    for (double c : {0.1, 3.0, 100.0}) EXPECT_NEAR(loss_m(ctx, c * r), lm, 1e-5);
  }
}

TEST(Objective, PermutingFeaturesPermutesGradients) {
  oracle::Rng rng(180);
  const Instance inst = random_instance(1800, 14, 6, 3);
  std::vector<int> perm{3, 0, 5, 1, 4, 2};
  Matrix yp(14, 6);
  Vector r = rng.vector(6), rp(6);
  for (int j = 0; j < 6; ++j) {
    yp.col(j) = inst.y.col(perm[j]);
    rp(j) = r(perm[j]);
  }
  ObjectiveContext a(inst.y.sparseView(), inst.bm), b(yp.sparseView(), inst.bm);
  EXPECT_NEAR(loss_b(a, r), loss_b(b, rp), 1e-12);
  EXPECT_NEAR(loss_m(a, r), loss_m(b, rp), 1e-12);
  const Vector ga = grad_m(a, r), gb = grad_m(b, rp), ha = grad_b(a, r), hb = grad_b(b, rp);
  for (int j = 0; j < 6; ++j) {
    EXPECT_NEAR(ga(perm[j]), gb(j), 1e-12);
    EXPECT_NEAR(ha(perm[j]), hb(j), 1e-12);
  }
}

TEST(Objective, DeltaIndifference) {
  for (int trial = 0; trial < 10; ++trial) {
    oracle::Rng rng(190 + trial);
    const Instance inst = random_instance(1900 + trial, 16, 6, 3);
    ObjectiveContext exact(inst.y.sparseView(), inst.bm, 0.0), smoothed(inst.y.sparseView(), inst.bm, 1e-6);
    const Vector r = rng.vector(6, 0.1, 1.0);
    EXPECT_NEAR(loss_m(exact, r), loss_m(smoothed, r), 1e-4);
    EXPECT_LE((grad_m(exact, r) - grad_m(smoothed, r)).cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_DOUBLE_EQ(loss_b(exact, r), loss_b(smoothed, r));
  }
}

TEST(Objective, EvaluateBundlesAllFour) {
  oracle::Rng rng(200);
  const Instance inst = random_instance(2000, 12, 5, 2);
  ObjectiveContext ctx(inst.y.sparseView(), inst.bm);
  const Vector r = rng.vector(5);
  const ObjectiveValues v = evaluate_objective(ctx, r, GradientMode::analytic);
  EXPECT_DOUBLE_EQ(v.loss_b, loss_b(ctx, r));
  EXPECT_DOUBLE_EQ(v.loss_m, loss_m(ctx, r));
  EXPECT_LE((v.grad_b - grad_b(ctx, r)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((v.grad_m - grad_m(ctx, r)).cwiseAbs().maxCoeff(), 1e-15);
}

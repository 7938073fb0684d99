// SPDX-License-Identifier: Apache-2.0
#include <random>

#include <gtest/gtest.h>

#include "cbfreach/scenario.hpp"
#include "oracles.hpp"

using namespace cbfreach;
using detail::vec2;

namespace {

LinearConstraintSet rows(std::initializer_list<std::initializer_list<double>> A, std::initializer_list<double> b) {
  LinearConstraintSet cs;
  cs.A.resize(static_cast<Eigen::Index>(A.size()), static_cast<Eigen::Index>(A.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : A) {
    Eigen::Index j = 0;
    for (double v : r) cs.A(i, j++) = v;
    ++i;
  }
  cs.b = Eigen::Map<const Vec>(b.begin(), static_cast<Eigen::Index>(b.size()));
  cs.num_cbf = cs.A.rows();
  return cs;
}

}  // namespace

TEST(BuildConstraints, ScenarioExamples) {
  const Scenario s1 = make_scenario1();
  auto cs = build_constraints(s1.filter, s1.system, vec2(3, 0));
  EXPECT_TRUE(cs.A.row(0).transpose().isApprox(vec2(12, 0)));
  EXPECT_DOUBLE_EQ(cs.b[0], 36.0);
  cs = build_constraints(s1.filter, s1.system, vec2(0.5, 0));
  EXPECT_LT(cs.b[0], 0.0);

  const Scenario s2 = make_scenario2();
  cs = build_constraints(s2.filter, s2.system, vec2(0, -2));
  ASSERT_EQ(cs.A.rows(), 2);
  EXPECT_DOUBLE_EQ(cs.A(1, 0), 1.0);
  // theta >= -f~_2(x) - h2(x) with f~(0,-2) = (-2, 4) and h2 = 0.
  EXPECT_DOUBLE_EQ(cs.b[1], -4.0);
}

TEST(BuildConstraints, RowEquivalentToCbfCondition) {
  const Scenario s2 = make_scenario2();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const Vec x = vec2(u(rng), u(rng));
    const Vec th = Vec::Constant(1, u(rng));
    const auto cs = build_constraints(s2.filter, s2.system, x);
    for (std::size_t i = 0; i < s2.filter.cbfs.size(); ++i) {
      const auto& c = s2.filter.cbfs[i];
      const double cond = c.grad_h(x).dot(s2.system.f_tilde(x) + s2.system.g(x) * th) + c.h(x);
      const double row = cs.A.row(static_cast<Eigen::Index>(i)).dot(th) - cs.b[static_cast<Eigen::Index>(i)];
      EXPECT_NEAR(cond, row, 1e-9);
    }
  }
}

TEST(BuildConstraints, ExtraRowsAreNegated) {
  Scenario s1 = make_scenario1();
  s1.filter.extra_constraints = [](const Vec&) {
    ExtraConstraints e;
    e.A_ext = Mat::Identity(2, 2);
    e.b_ext = vec2(1, 2);
    return e;
  };
  const auto cs = build_constraints(s1.filter, s1.system, vec2(-1, 0));
  ASSERT_EQ(cs.A.rows(), 3);
  EXPECT_EQ(cs.A.bottomRows(2), -Mat::Identity(2, 2));
  EXPECT_EQ(Vec(cs.b.tail(2)), vec2(-1, -2));
}

TEST(SolveQp, Examples) {
  EXPECT_TRUE(solve_qp(rows({{12, 0}}, {36})).isApprox(vec2(3, 0)));
  EXPECT_EQ(solve_qp(rows({{1, 0}}, {-1})), vec2(0, 0));
  EXPECT_TRUE(solve_qp(rows({{1, 0}, {0, 1}}, {1, 1})).isApprox(vec2(1, 1)));
}

TEST(SolveQp, InfeasibleAndDegenerate) {
  EXPECT_THROW(solve_qp(rows({{1, 0}, {-1, 0}}, {1, 1})), InfeasibleError);
  EXPECT_THROW(solve_qp(rows({{0, 0}}, {1})), DegenerateConstraintsError);
  // A vacuous zero row is dropped.
  EXPECT_EQ(solve_qp(rows({{0, 0}}, {-1})), vec2(0, 0));
  EXPECT_TRUE(solve_qp(rows({{0, 0}, {2, 0}}, {-1, 2})).isApprox(vec2(1, 0)));
}

TEST(SolveQp, TooManyRowsRejected) {
  LinearConstraintSet cs;
  cs.A = Mat::Ones(13, 2);
  cs.b = -Vec::Ones(13);
  EXPECT_THROW(solve_qp(cs), InvalidArgument);
}

TEST(SolveQp, CertificateAndOracleAgreement) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int t = 0; t < 60; ++t) {
    const int p = 1 + t % 3;
    Mat A(p, 2);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
    const Vec feas = vec2(2 * nd(rng), 2 * nd(rng));
    const Vec b = A * feas - 0.3 * Vec::Ones(p);
    const LinearConstraintSet cs{A, b, p};
    const QpSolution sol = solve_qp_certified(cs);
    EXPECT_GE((A * sol.theta - b).minCoeff(), -1e-9);
    Vec recon = Vec::Zero(2);
    for (std::size_t k = 0; k < sol.active.size(); ++k) {
      EXPECT_GE(sol.multipliers[static_cast<Eigen::Index>(k)], -1e-9);
      recon += sol.multipliers[static_cast<Eigen::Index>(k)] * A.row(sol.active[k]).transpose();
    }
    EXPECT_LE((recon - sol.theta).cwiseAbs().maxCoeff(), 1e-9);
    const Vec ref = oracle::qp_grid_projection(A, b, feas.norm() + 0.05, 400);
    EXPECT_LE((ref - sol.theta).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Filter, ScenarioOneValues) {
  const Scenario s1 = make_scenario1();
  EXPECT_TRUE(filter_correction(s1.filter, s1.system, vec2(3, 0)).isApprox(vec2(3, 0)));
  EXPECT_LE(filtered_field(s1.filter, s1.system, vec2(3, 0)).norm(), 1e-12);
  // Between the origin and the obstacle the nominal input already satisfies
  // the constraint.
  const auto cs = build_constraints(s1.filter, s1.system, vec2(0.5, 0));
  EXPECT_LT(cs.b[0], 0.0);
  EXPECT_EQ(filter_correction(s1.filter, s1.system, vec2(0.5, 0)), vec2(0, 0));
  EXPECT_LE(filtered_field(s1.filter, s1.system, vec2(2.5, std::sqrt(3.0) / 2)).norm(), 1e-12);
}

TEST(Filter, MinimalityWhenInactive) {
  const Scenario s2 = make_scenario2();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-4.0, 6.0);
  int checked = 0;
  for (int k = 0; k < 500; ++k) {
    const Vec x = vec2(u(rng), u(rng) / 3);
    const auto cs = build_constraints(s2.filter, s2.system, x);
    if ((cs.b.array() <= 0.0).all()) {
      EXPECT_EQ(filter_correction(s2.filter, s2.system, x), Vec::Zero(1));
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(Filter, FilteredInputIsNominalPlusCorrection) {
  const Scenario s1 = make_scenario1();
  const Vec x = vec2(3.5, 0.4);
  EXPECT_TRUE(filtered_input(s1.filter, s1.system, x)
                  .isApprox(s1.system.kappa(x) + filter_correction(s1.filter, s1.system, x)));
}

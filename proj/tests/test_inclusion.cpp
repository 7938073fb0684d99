// SPDX-License-Identifier: Apache-2.0
#include <random>

#include <gtest/gtest.h>

#include "cbfreach/inclusion.hpp"
#include "oracles.hpp"

using namespace cbfreach;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec s(double v) { return Vec::Constant(1, v); }

}  // namespace

TEST(LinearInclusion, Example) {
  Mat K(2, 2);
  K << -1, 0, 0, -5;
  const InclusionFn d = linear_inclusion(K, Vec::Zero(2));
  const auto [lo, hi] = d(HyperRect(v2(1, -1), v2(2, 1)));
  EXPECT_EQ(lo, v2(-2, -5));
  EXPECT_EQ(hi, v2(-1, 5));
  EXPECT_TRUE(d.matrix.has_value());
  // Face bounds: coordinate 0 pinned at its lower end.
  EXPECT_DOUBLE_EQ(d.lower_on_face(HyperRect(v2(1, -1), v2(2, 1)), 0), -1.0);
  EXPECT_DOUBLE_EQ(d.upper_on_face(HyperRect(v2(1, -1), v2(2, 1)), 1), -5.0);
}

TEST(LinearInclusion, MatchesCornerOracle) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 50; ++t) {
    Mat A(3, 2);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
    const Vec c = Vec::Random(3);
    const HyperRect box(v2(-1, 0.5), v2(0.2, 2));
    const auto [lo, hi] = linear_inclusion(A, c)(box);
    const auto [olo, ohi] = oracle::corner_range(A, c, box);
    EXPECT_TRUE(lo.isApprox(olo, 1e-12) && hi.isApprox(ohi, 1e-12));
  }
}

TEST(NaturalInclusion, SquareAndDependency) {
  const InclusionFn sq1 = natural_inclusion({"x1^2"}, 1);
  auto [lo, hi] = sq1(HyperRect(s(-1), s(2)));
  EXPECT_DOUBLE_EQ(lo[0], 0.0);
  EXPECT_DOUBLE_EQ(hi[0], 4.0);
  // Natural evaluation ignores the dependency between the two occurrences.
  std::tie(lo, hi) = natural_inclusion({"x1 - x1"}, 1)(HyperRect(s(0), s(1)));
  EXPECT_DOUBLE_EQ(lo[0], -1.0);
  EXPECT_DOUBLE_EQ(hi[0], 1.0);
  std::tie(lo, hi) = natural_inclusion({"3.5"}, 2)(HyperRect(v2(-9, -9), v2(9, 9)));
  EXPECT_DOUBLE_EQ(lo[0], 3.5);
  EXPECT_DOUBLE_EQ(hi[0], 3.5);
}

TEST(NaturalInclusion, UnsupportedPrimitiveRejected) {
  EXPECT_THROW(natural_inclusion({"sin(x1)"}, 1), InvalidArgument);
  EXPECT_THROW(natural_inclusion({"x3"}, 2), DimensionError);
  EXPECT_THROW(parse_expr("x1 +"), FormatError);
  EXPECT_THROW(parse_expr("(x1"), FormatError);
  EXPECT_THROW(parse_expr("y"), FormatError);
  EXPECT_THROW(parse_expr("x0"), FormatError);
}

TEST(Parser, PointEvaluation) {
  const Vec x = v2(1.5, -2.0);
  EXPECT_DOUBLE_EQ(parse_expr("-x1 + x1*x2 - x2^2").eval(x), -1.5 - 3.0 - 4.0);
  EXPECT_DOUBLE_EQ(parse_expr("2*(x1 - 1)^3").eval(x), 0.25);
  EXPECT_DOUBLE_EQ(parse_expr("x2^0").eval(x), 1.0);
  EXPECT_DOUBLE_EQ(parse_expr("-(x1)").eval(x), -1.5);
}

TEST(NaturalInclusion, EnclosesSamplesAndIsMonotone) {
  const InclusionFn d = natural_inclusion({"x2", "-x1 + x1^3 - x2*x1", "x1*x1*x2 - 0.5"}, 2);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0), w(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const Vec a = v2(u(rng), u(rng)), b = v2(u(rng), u(rng));
    const HyperRect outer(a.cwiseMin(b), a.cwiseMax(b));
    const auto [olo, ohi] = d(outer);
    Vec p(2), q(2);
    for (int i = 0; i < 2; ++i) {
      p[i] = outer.lo()[i] + w(rng) * (outer.hi()[i] - outer.lo()[i]);
      q[i] = outer.lo()[i] + w(rng) * (outer.hi()[i] - outer.lo()[i]);
    }
    const HyperRect inner(p.cwiseMin(q), p.cwiseMax(q));
    const auto [ilo, ihi] = d(inner);
    EXPECT_TRUE((olo.array() <= ilo.array() + 1e-12).all());
    EXPECT_TRUE((ohi.array() >= ihi.array() - 1e-12).all());
    const auto [plo, phi] = d(HyperRect(p, p));
    EXPECT_TRUE(plo.isApprox(phi, 1e-12) || (plo - phi).cwiseAbs().maxCoeff() < 1e-12);
    EXPECT_TRUE((plo.array() >= olo.array() - 1e-12).all() && (phi.array() <= ohi.array() + 1e-12).all());
  }
}

TEST(ConstantG, ReturnsSameMatrix) {
  const Mat G = Mat::Identity(2, 2);
  const MatrixInclusion inc = constant_g_inclusion(G);
  const auto [lo, hi] = inc(HyperRect(v2(-1, -1), v2(1, 1)));
  EXPECT_EQ(lo, G);
  EXPECT_EQ(hi, G);
  EXPECT_TRUE(inc.constant);
}

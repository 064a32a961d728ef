#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"
#include "ksfront/bounds.hpp"
#include "ksfront/errors.hpp"

namespace ksfront {
namespace {

// Closed-form chi-square survival function with three degrees of freedom.
double chi2_sf3(double x) {
  return std::erfc(std::sqrt(x / 2.0)) + std::sqrt(2.0 * x / std::numbers::pi) * std::exp(-x / 2.0);
}

TEST(MultiWalkBound, OneParticleMatchesSingleWalk) {
  Configuration w({-5, 0});
  w.add(-2, Label{0.4});
  RandomStream a(21);
  RandomStream b(21);
  const auto multi = verify_multi_walk_bound(w, 1.0, 0.5, 1.0, 4000, a);
  const auto single = check_lemma2_bound(-2, 1.0, 0.5, 1.0, 2.0, 4000, b);
  EXPECT_DOUBLE_EQ(multi.bound, single.bound);
  EXPECT_NEAR(multi.horizon, single.horizon, 1e-9);
  EXPECT_NEAR(multi.allowance, single.allowance, 1e-15);
  EXPECT_NEAR(multi.empirical_prob, single.empirical_prob, 3.0 * std::hypot(multi.ci_halfwidth, single.ci_halfwidth));
  EXPECT_TRUE(multi.pass);
}

// Walks are independent, so the hit probability of {0, -1} is
// 1 - (1 - p_0)(1 - p_{-1}) with single-walk estimates of p_x.
TEST(MultiWalkBound, TwoParticlesCombineIndependently) {
  Configuration w({-5, 0});
  w.add(0, Label{0.4});
  w.add(-1, Label{0.7});
  RandomStream rng(22);
  const long n = 20000;
  const double t = 2.0;
  const auto both = verify_multi_walk_bound(w, 1.0, 0.5, t, n, rng);
  const auto p0 = check_lemma2_bound(0, 1.0, 0.5, t, 2.0, n, rng);
  const auto p1 = check_lemma2_bound(-1, 1.0, 0.5, t, 2.0, n, rng);
  const double expect = 1.0 - (1.0 - p0.empirical_prob) * (1.0 - p1.empirical_prob);
  EXPECT_NEAR(both.empirical_prob, expect, 5.0 * both.ci_halfwidth + 0.01);
  EXPECT_NEAR(both.bound, (1.0 + std::exp(-0.5)) * std::exp(-mu_of(1.0, 0.5) * t), 1e-15);
  EXPECT_TRUE(both.pass);
}

TEST(MultiWalkBound, Errors) {
  RandomStream rng(23);
  Configuration w({-2, 2});
  w.add(1, Label{0.5});
  EXPECT_THROW(verify_multi_walk_bound(w, 1.0, 0.5, 1.0, 10, rng), ParameterError);
  Configuration ok({-2, 0});
  ok.add(0, Label{0.5});
  EXPECT_THROW(verify_multi_walk_bound(ok, 0.1, 0.5, 1.0, 10, rng), ParameterError);
  EXPECT_THROW(verify_multi_walk_bound(ok, 1.0, 0.5, 1.0, 0, rng), ParameterError);
}

TEST(BoundGrid, XMajorAndDeterministic) {
  BoundGridSpec spec;
  spec.x_values = {0, -2};
  spec.t_values = {1.0, 3.0};
  const auto cells = run_bound_grid(spec, 5);
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[1].x, 0);
  EXPECT_DOUBLE_EQ(cells[1].t, 3.0);
  EXPECT_EQ(cells[2].x, -2);
  EXPECT_DOUBLE_EQ(cells[2].t, 1.0);
  for (const auto& c : cells) {
    EXPECT_TRUE(c.report.pass) << c.x << " " << c.t;
    EXPECT_NEAR(c.report.bound, std::exp(0.5 * c.x - mu_of(1.0, 0.5) * c.t), 1e-15);
  }
  const auto again = run_bound_grid(spec, 5);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    EXPECT_EQ(cells[i].report.empirical_prob, again[i].report.empirical_prob);
  }
  const std::string csv = format_bound_table_csv(cells);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "x,t,empirical,ci,bound,pass");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto j = nlohmann::json::parse(format_bound_summary_json(spec, cells));
  EXPECT_EQ(j.at("failures").get<int>(), 0);
}

TEST(BoundGrid, Validation) {
  BoundGridSpec spec;
  spec.x_values = {0};
  spec.t_values = {1.0};
  EXPECT_NO_THROW(spec.validate());
  spec.n_per_cell = 999;
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.n_per_cell = 1000;
  spec.x_values = {1};
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.x_values = {0};
  spec.t_values = {-1.0};
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.t_values = {1.0};
  spec.alpha = 0.1;
  EXPECT_THROW(spec.validate(), ParameterError);
}

TEST(PoissonGoodness, HandComputedStatistic) {
  const std::vector<long> hist{370, 360, 190, 80};
  const auto g = poisson_goodness_of_fit(hist, 1.0);
  const double e0 = 1000.0 * std::exp(-1.0);
  const std::vector<double> expected{e0, e0, e0 / 2.0, 1000.0 - 2.5 * e0};
  ASSERT_EQ(g.expected.size(), 4u);
  double chi2 = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(g.expected[i], expected[i], 1e-9);
    const double d = static_cast<double>(hist[i]) - expected[i];
    chi2 += d * d / expected[i];
  }
  EXPECT_EQ(g.dof, 3);
  EXPECT_NEAR(g.chi2, chi2, 1e-9);
  EXPECT_NEAR(g.p_value, chi2_sf3(chi2), 1e-12);
  EXPECT_TRUE(g.pass);
  EXPECT_EQ(g.n_counts, 1000);
}

TEST(PoissonGoodness, MergesSparseTailAndRejectsMisfit) {
  // Expected counts beyond 3 are tiny and must be merged.
  const auto g = poisson_goodness_of_fit({37, 37, 18, 6, 2, 0, 0}, 1.0);
  for (double e : g.expected) EXPECT_GE(e, 5.0);
  long total = 0;
  for (long o : g.observed) total += o;
  EXPECT_EQ(total, 100);
  const auto bad = poisson_goodness_of_fit({100, 100, 600, 200, 0}, 1.0);
  EXPECT_FALSE(bad.pass);
  EXPECT_THROW(poisson_goodness_of_fit({0, 0}, 1.0), InsufficientDataError);
  EXPECT_THROW(poisson_goodness_of_fit({10, 10}, 0.0), ParameterError);
}

TEST(ShiftInvariance, WideWindowPasses) {
  RandomStream rng(24);
  const auto g = verify_shift_invariance(1.0, 2.0, 10.0, {-10, 10}, {-40, 40}, 200, rng);
  EXPECT_TRUE(g.pass) << g.chi2 << " p=" << g.p_value;
  EXPECT_EQ(g.n_counts, 200 * 21);
}

// With the bulk equal to the simulation window, mass leaks out and is not
// replaced, so the occupation law is no longer Poisson(rho).
TEST(ShiftInvariance, ShrunkenWindowIsDetected) {
  RandomStream rng(25);
  const auto g =
      verify_shift_invariance(1.0, 2.0, 10.0, {-10, 10}, {-10, 10}, 200, rng, 0.01, false);
  EXPECT_FALSE(g.pass);
  EXPECT_LT(g.p_value, 1e-6);
}

TEST(ShiftInvariance, MarginIsEnforced) {
  RandomStream rng(26);
  // 4 sqrt(20) is about 17.9 sites.
  EXPECT_THROW(verify_shift_invariance(1.0, 2.0, 10.0, {-10, 10}, {-25, 25}, 10, rng),
               ParameterError);
  EXPECT_THROW(verify_shift_invariance(1.0, 2.0, 10.0, {-10, 10}, {-5, 40}, 10, rng, 0.01, false),
               ParameterError);
}

}  // namespace
}  // namespace ksfront

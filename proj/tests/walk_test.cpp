#include <gtest/gtest.h>

#include <cmath>

#include "ksfront/errors.hpp"
#include "ksfront/walk.hpp"
#include "support/oracles.hpp"

namespace ksfront {
namespace {

ParticlePath sample_path() {
  // x0 = 2; backward: at t=-1 one step seen backwards (+1), at t=-3 another (-1);
  // forward: +1 at t=0.5, +1 at t=2, -1 at t=4.
  return ParticlePath::from_jumps(Label{0.5}, 2, -5.0, 5.0, {{-1.0, 1}, {-3.0, -1}},
                                  {{0.5, 1}, {2.0, 1}, {4.0, -1}});
}

TEST(ParticlePath, CadlagPositions) {
  const ParticlePath p = sample_path();
  EXPECT_EQ(p.x0(), 2);
  EXPECT_EQ(p.position_at(0.4), 2);
  EXPECT_EQ(p.position_at(0.5), 3);  // jump at t is included
  EXPECT_EQ(p.position_before(0.5), 2);
  EXPECT_EQ(p.position_at(2.0), 4);
  EXPECT_EQ(p.position_at(5.0), 3);
  // The backward step is W_{t-} - W_t, so walking back past t=-1 moves the
  // walker up by one.
  EXPECT_EQ(p.position_at(-0.5), 2);
  EXPECT_EQ(p.position_before(-1.0), 3);
  EXPECT_EQ(p.position_at(-2.0), 3);
  EXPECT_EQ(p.position_at(-4.0), 2);
  EXPECT_THROW(p.position_at(5.5), HorizonError);
  EXPECT_THROW(p.position_at(-5.5), HorizonError);
}

TEST(ParticlePath, JumpListsRoundTrip) {
  const ParticlePath p = sample_path();
  const auto fwd = p.fwd_jumps();
  const auto bwd = p.bwd_jumps();
  ASSERT_EQ(fwd.size(), 3u);
  ASSERT_EQ(bwd.size(), 2u);
  EXPECT_EQ(ParticlePath::from_jumps(p.label(), p.x0(), p.t_back(), p.t_fwd(), bwd, fwd), p);
  EXPECT_EQ(p.jumps_in(0.0, 2.0), 2u);
  EXPECT_EQ(p.jumps_in(-5.0, 5.0), 5u);
}

TEST(ParticlePath, RejectsMalformedInput) {
  EXPECT_THROW(ParticlePath::from_jumps(Label{0.1}, 0, -1.0, 1.0, {}, {{2.0, 1}}), ParameterError);
  EXPECT_THROW(ParticlePath::from_segments(Label{0.1}, 0.0, 1.0, {0.5}, {0, 2}), ParameterError);
  EXPECT_THROW(ParticlePath::from_segments(Label{0.1}, 0.0, 1.0, {0.5}, {0}), ParameterError);
}

TEST(ParticlePath, TextFormatRoundTrips) {
  RandomStream rng(3);
  std::vector<ParticlePath> paths;
  std::string text;
  for (int i = 0; i < 5; ++i) {
    paths.push_back(simulate_two_sided_walk(Label{0.1 * (i + 1)}, i - 2, 2.0, -7.0, 9.0, rng));
    text += format_path(paths.back());
  }
  EXPECT_EQ(parse_paths(text), paths);
}

TEST(SimulateWalk, JumpCountMatchesRate) {
  RandomStream rng(4);
  double fwd = 0.0;
  double bwd = 0.0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const auto p = simulate_two_sided_walk(Label{0.5}, 0, 2.0, -10.0, 10.0, rng);
    fwd += static_cast<double>(p.fwd_jumps().size());
    bwd += static_cast<double>(p.bwd_jumps().size());
  }
  // Poisson(20) per half.
  EXPECT_NEAR(fwd / n, 20.0, 5.0 * std::sqrt(20.0 / n));
  EXPECT_NEAR(bwd / n, 20.0, 5.0 * std::sqrt(20.0 / n));
}

TEST(SimulateWalk, ForwardHalfDoesNotDependOnTBack) {
  RandomStream a(5);
  RandomStream b(5);
  const auto p = simulate_two_sided_walk(Label{0.5}, 0, 2.0, -1.0, 10.0, a);
  const auto q = simulate_two_sided_walk(Label{0.5}, 0, 2.0, -50.0, 10.0, b);
  EXPECT_EQ(p.fwd_jumps(), q.fwd_jumps());
}

TEST(SimulateWalk, DisplacementVarianceIsRateTimesT) {
  RandomStream rng(6);
  const int n = 20000;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto p = simulate_two_sided_walk(Label{0.5}, 0, 2.0, 0.0, 5.0, rng);
    const double d = p.position_at(5.0);
    s2 += d * d;
  }
  EXPECT_NEAR(s2 / n, 10.0, 0.4);
}

TEST(TimeChange, RescalesJumpsAfterTau) {
  // Base jump at time 2 with infection at 1 and speed-up 2: real time 1.5.
  const auto p = ParticlePath::from_segments(Label{0.2}, 0.0, 4.0, {0.5, 2.0}, {0, 1, 2});
  const auto q = apply_time_change(p, 1.0, 2.0, 1.0);
  ASSERT_EQ(q.jump_count(), 2u);
  EXPECT_DOUBLE_EQ(q.jump_times()[0], 0.5);
  EXPECT_DOUBLE_EQ(q.jump_times()[1], 1.5);
  EXPECT_DOUBLE_EQ(q.t_fwd(), 2.5);
  EXPECT_EQ(apply_time_change(p, 1.0, 2.0, 2.0), p);
  EXPECT_THROW(apply_time_change(p, 1.0, 1.0, 2.0), ParameterError);
}

TEST(TimeChange, RemanentSpeedupFromZero) {
  // d_r = 4, d_b = 2, infected at 0: base time 2 becomes real time 1.
  const auto p = ParticlePath::from_segments(Label{0.2}, 0.0, 4.0, {2.0}, {0, 1});
  EXPECT_DOUBLE_EQ(apply_time_change(p, 0.0, 4.0, 2.0).jump_times()[0], 1.0);
}

TEST(ActivateAt, SleepsThenRunsForwardHalf) {
  const auto p = ParticlePath::from_segments(Label{0.2}, -1.0, 3.0, {-0.5, 1.0, 2.0}, {4, 3, 4, 5});
  const auto q = activate_at(p, 1.5);
  EXPECT_EQ(q.position_at(0.0), 3);
  EXPECT_EQ(q.position_at(2.4), 3);
  EXPECT_EQ(q.position_at(2.5), 4);
  EXPECT_EQ(q.position_at(3.5), 5);
  EXPECT_DOUBLE_EQ(q.t_fwd(), 4.5);
}

TEST(ShiftPath, TranslatesSpaceAndTime) {
  const ParticlePath p = sample_path();
  const auto q = shift_path(p, 3, 0.5, -10.0, 10.0);
  for (double s : {-5.0, -3.5, -1.5, 0.0, 1.5, 3.5, 4.5}) {
    EXPECT_EQ(q.position_at(s), p.position_at(s + 0.5) - 3) << s;
  }
  EXPECT_DOUBLE_EQ(q.t_back(), -5.5);
  EXPECT_DOUBLE_EQ(q.t_fwd(), 4.5);
  const auto c = shift_path(p, 0, 1.0, -2.0, 3.0);
  EXPECT_DOUBLE_EQ(c.t_back(), -2.0);
  EXPECT_DOUBLE_EQ(c.t_fwd(), 3.0);
  EXPECT_THROW(shift_path(p, 0, 6.0, -1.0, 1.0), HorizonError);
}

TEST(Mu, AgreesWithHighPrecisionEvaluation) {
  EXPECT_NEAR(mu_of(1.0, 0.5), oracle::high_precision_mu(1.0, 0.5), 1e-12);
  EXPECT_NEAR(mu_of(1.0, 0.5), 0.2447480695872386, 1e-12);
  EXPECT_NEAR(mu_of(0.1, 0.5), oracle::high_precision_mu(0.1, 0.5), 1e-12);
  EXPECT_LT(mu_of(0.1, 0.5), 0.0);
  EXPECT_NEAR(mu_of(0.5, 1e-6), oracle::high_precision_mu(0.5, 1e-6), 1e-18);
  EXPECT_DOUBLE_EQ(mu_for_rate(1.0, 0.5, 2.0), mu_of(1.0, 0.5));
}

TEST(LineBound, AtTimeZeroFromOriginTheLineIsHit) {
  RandomStream rng(7);
  const auto rep = check_lemma2_bound(0, 1.0, 0.5, 0.0, 2.0, 1000, rng);
  EXPECT_DOUBLE_EQ(rep.empirical_prob, 1.0);
  EXPECT_DOUBLE_EQ(rep.bound, 1.0);
  EXPECT_TRUE(rep.pass);
}

TEST(LineBound, HorizonAndAllowance) {
  RandomStream rng(8);
  const long n = 5000;
  const auto rep = check_lemma2_bound(-2, 1.0, 0.5, 1.0, 2.0, n, rng);
  const double mu = mu_of(1.0, 0.5);
  EXPECT_NEAR(rep.bound, std::exp(-1.0 - mu), 1e-15);
  EXPECT_NEAR(rep.allowance, 1.0 / (10.0 * n), 1e-12);
  EXPECT_NEAR(rep.horizon, (std::log(10.0 * n) - 1.0) / mu, 1e-9);
  EXPECT_TRUE(rep.pass);
  EXPECT_LE(rep.empirical_prob, rep.bound);
}

TEST(LineBound, Errors) {
  RandomStream rng(9);
  EXPECT_THROW(check_lemma2_bound(1, 1.0, 0.5, 1.0, 2.0, 10, rng), ParameterError);
  EXPECT_THROW(check_lemma2_bound(0, 0.1, 0.5, 1.0, 2.0, 10, rng), ParameterError);
  EXPECT_THROW(check_lemma2_bound(0, 1.0, 0.5, 1.0, 2.0, 0, rng), ParameterError);
}

TEST(LineAvoidance, MonotoneUnderAddingParticles) {
  Configuration one({-10, 0});
  one.add(-2, Label{0.3});
  Configuration two = one;
  two.add(-1, Label{0.6});
  RandomStream a(10);
  RandomStream b(10);
  const auto p1 = check_line_avoidance(one, 1.0, 0.5, 2.0, 20.0, 4000, a);
  const auto p2 = check_line_avoidance(two, 1.0, 0.5, 2.0, 20.0, 4000, b);
  EXPECT_GE(p1.estimate, p2.estimate);
  EXPECT_GT(p1.estimate, 0.0);
}

}  // namespace
}  // namespace ksfront

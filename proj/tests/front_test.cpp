#include <gtest/gtest.h>

#include "ksfront/errors.hpp"
#include "ksfront/front.hpp"
#include "ksfront/harness.hpp"
#include "support/oracles.hpp"

namespace ksfront {
namespace {

ParticleSystem random_system(std::uint64_t seed, double rho, IntInterval window, double rate,
                             double t_back, double t_fwd) {
  RandomStream rng(seed);
  Configuration w = sample_nu(rho, window, rng);
  if (w.total_count() == 0 || w.sites().begin()->first > 0) w.add(window.lo, Label{0.5});
  return sample_system(w, rate, t_back, t_fwd, seed);
}

ParticlePath seg(double label, std::vector<double> times, std::vector<int> values,
                 double t_fwd = 5.0) {
  return ParticlePath::from_segments(Label{label}, 0.0, t_fwd, std::move(times), std::move(values));
}

ParticleSystem system_of(std::vector<ParticlePath> paths, double t_fwd = 5.0) {
  ParticleSystem s;
  s.window = {-10, 10};
  s.t_fwd = t_fwd;
  s.particles = std::move(paths);
  return s;
}

TEST(SampleSystem, DeterministicAndCoversHorizon) {
  const auto a = random_system(1, 1.0, {-10, 10}, 2.0, -3.0, 7.0);
  const auto b = random_system(1, 1.0, {-10, 10}, 2.0, -3.0, 7.0);
  ASSERT_EQ(a.particles.size(), b.particles.size());
  for (std::size_t i = 0; i < a.particles.size(); ++i) EXPECT_EQ(a.particles[i], b.particles[i]);
  EXPECT_NO_THROW(a.validate());
  EXPECT_EQ(a.digest(), b.digest());
}

TEST(SingleRateFront, MatchesDirectSimulator) {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto psi = random_system(seed, 1.0, {-15, 25}, 2.0, 0.0, 10.0);
    const auto run = build_front_single_rate(psi);
    ASSERT_EQ(oracle::steps_of(run.trace), oracle::direct_single_rate(psi, false)) << seed;
  }
}

TEST(ModifiedFront, MatchesDirectSimulator) {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto psi = random_system(seed, 0.7, {-15, 25}, 2.0, 0.0, 10.0);
    const auto run = build_front_modified(psi);
    ASSERT_EQ(oracle::steps_of(run.trace), oracle::direct_single_rate(psi, true)) << seed;
  }
}

TEST(RemanentFront, MatchesDirectSimulator) {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto psi = random_system(seed, 1.0, {-15, 35}, 2.0, 0.0, 16.0);
    const auto run = build_front_remanent(psi, 4.0, 2.0);
    EXPECT_DOUBLE_EQ(run.trace.t_end, 8.0);
    ASSERT_EQ(oracle::steps_of(run.trace), oracle::direct_remanent(psi, 4.0, 2.0)) << seed;
  }
}

TEST(RemanentFront, EqualRatesMatchDirectSimulator) {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto psi = random_system(seed, 1.0, {-15, 25}, 2.0, 0.0, 10.0);
    const auto run = build_front_remanent(psi, 2.0, 2.0);
    ASSERT_EQ(oracle::steps_of(run.trace), oracle::direct_remanent(psi, 2.0, 2.0)) << seed;
  }
}

TEST(FrogFront, MatchesDirectSimulator) {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto psi = random_system(seed, 1.0, {-15, 25}, 2.0, 0.0, 10.0);
    const auto run = build_front_remanent(psi, 2.0, 0.0);
    ASSERT_EQ(oracle::steps_of(run.trace), oracle::direct_remanent(psi, 2.0, 0.0)) << seed;
  }
}

TEST(RemanentFront, EqualRatesDifferFromSingleRate) {
  // A red at 0 steps to 1 and back; a blue at 3 passes through 1 while the
  // red is back at 0. The remanent front remembers site 1, the single-rate
  // front does not.
  const auto psi = system_of({seg(0.9, {1.0, 2.0}, {0, 1, 0}), seg(0.1, {2.5, 3.0, 4.0}, {3, 2, 1, 2})});
  const auto rem = build_front_remanent(psi, 2.0, 2.0);
  const auto single = build_front_single_rate(psi);
  EXPECT_EQ(rem.trace.position_at(5.0), 2);
  EXPECT_EQ(single.trace.position_at(5.0), 0);
  EXPECT_DOUBLE_EQ(rem.infection_time[1], 3.0);
  EXPECT_EQ(single.infection_time[1], kNever);
}

TEST(FrontTrace, QueriesAndHorizon) {
  const auto psi = system_of({seg(0.9, {1.0, 2.0, 3.0}, {0, 1, 2, 1})});
  const auto t = build_front_single_rate(psi).trace;
  ASSERT_EQ(t.jumps.size(), 3u);
  EXPECT_EQ(t.position_at(0.99), 0);
  EXPECT_EQ(t.position_at(1.0), 1);
  EXPECT_EQ(t.running_max_at(4.0), 2);
  EXPECT_EQ(t.jumps_until(2.0), 2u);
  EXPECT_EQ(t.jump_index_at(3.0), 2u);
  EXPECT_EQ(t.jumps[2].direction, Direction::down);
  EXPECT_THROW(t.jump_index_at(2.5), ConsistencyError);
  EXPECT_THROW(t.position_at(6.0), HorizonError);
}

TEST(SingleRateFront, NeedsAParticleAtOrBelowZero) {
  const auto psi = system_of({seg(0.9, {}, {2})});
  EXPECT_THROW(build_front_single_rate(psi), ParameterError);
  EXPECT_EQ(build_front_modified(psi).trace.r0, 0);
}

TEST(FrontCensoring, FlagsApproachToWindowEdge) {
  auto psi = system_of({seg(0.9, {1.0, 2.0}, {0, 1, 2})});
  psi.window = {-3, 3};
  FrontOptions opt;
  opt.edge_margin = 1;
  const auto run = build_front_single_rate(psi, opt);
  EXPECT_TRUE(run.trace.censored);
  EXPECT_DOUBLE_EQ(run.trace.censor_time, 2.0);
  EXPECT_FALSE(build_front_single_rate(psi).trace.censored);
}

TEST(InfectionTimes, AgreeWithDirectComputation) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto psi = random_system(seed, 1.0, {-15, 25}, 2.0, 0.0, 10.0);
    const auto run = build_front_single_rate(psi);
    for (std::size_t p = 0; p < psi.particles.size(); ++p) {
      ASSERT_EQ(run.infection_time[p], infection_time_of(psi.particles[p], run.trace)) << seed;
    }
  }
}

TEST(EffectiveSystem, RebuildsTheRemanentRunAsFollowedPaths) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto psi = random_system(seed, 1.0, {-15, 35}, 2.0, 0.0, 16.0);
    const auto run = build_front_remanent(psi, 4.0, 2.0);
    const auto eff = effective_system(psi, run, 4.0, 2.0);
    EXPECT_DOUBLE_EQ(eff.t_fwd, run.trace.t_end);
    for (std::size_t p = 0; p < psi.particles.size(); ++p) {
      const double tau = run.infection_time[p];
      if (tau == kNever) continue;
      // After infection the followed path is the base path on the fast clock.
      const double t = std::min(run.trace.t_end, tau + 1.0);
      ASSERT_EQ(eff.particles[p].position_at(t), psi.particles[p].position_at(tau + (t - tau) * 2.0));
    }
  }
}

TEST(RedBlue, SnapshotPartitionsTheSystem) {
  const auto psi = random_system(3, 1.0, {-15, 25}, 2.0, 0.0, 10.0);
  const auto run = build_front_single_rate(psi);
  const auto snap = red_blue_at(psi, run.trace, 5.0);
  EXPECT_EQ(snap.red_labels.size() + snap.blue_labels.size(), psi.particles.size());
  const auto other = random_system(4, 1.0, {-15, 25}, 2.0, 0.0, 10.0);
  EXPECT_THROW(red_blue_at(other, run.trace, 5.0), ConsistencyError);
}

TEST(Symmetrize, ReflectsNegativeStartsUntilZero) {
  const auto psi = system_of({seg(0.9, {1.0, 2.0, 3.0}, {-1, -2, -1, 0}), seg(0.5, {1.0}, {2, 3})});
  const auto res = symmetrize(psi);
  const auto& p = res.system.particles[0];
  EXPECT_EQ(p.position_at(0.0), 1);
  EXPECT_EQ(p.position_at(1.5), 2);
  EXPECT_EQ(p.position_at(3.0), 0);
  EXPECT_EQ(res.system.particles[1], psi.particles[1]);
  EXPECT_TRUE(res.unresolved.empty());
  const auto stuck = symmetrize(system_of({seg(0.9, {}, {-2})}));
  ASSERT_EQ(stuck.unresolved.size(), 1u);
}

TEST(FrontCsv, RoundTrips) {
  const auto psi = random_system(5, 1.0, {-15, 25}, 2.0, 0.0, 10.0);
  auto t = build_front_single_rate(psi).trace;
  auto back = parse_front_csv(format_front_csv(t), t.t_end);
  EXPECT_EQ(format_front_csv(back), format_front_csv(t));
  ASSERT_EQ(back.jumps.size(), t.jumps.size());
  for (std::size_t i = 0; i < t.jumps.size(); ++i) {
    EXPECT_EQ(back.jumps[i].time, t.jumps[i].time);
    EXPECT_EQ(back.jumps[i].position, t.jumps[i].position);
    EXPECT_EQ(back.jumps[i].mover, t.jumps[i].mover);
  }
  EXPECT_THROW(parse_front_csv("bad header\n", 1.0), FormatError);
}

TEST(Couplings, HoldOnRandomSystems) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto psi = random_system(seed, 1.0, {-20, 20}, 2.0, 0.0, 20.0);
    EXPECT_TRUE(check_coupling_modified(psi).pass) << seed;
    EXPECT_TRUE(check_coupling_symmetrize(psi).pass) << seed;
    EXPECT_TRUE(check_lemma6(psi, 4.0, 2.0).pass) << seed;
    EXPECT_TRUE(check_lemma7(psi, 4.0, 2.0).pass) << seed;
  }
}

TEST(Couplings, AdditionRequiresSubset) {
  const auto a = system_of({seg(0.9, {}, {0})});
  const auto b = system_of({seg(0.8, {}, {0})});
  EXPECT_THROW(check_coupling_addition(a, b, FrontKind::single_rate), ParameterError);
}

// Each scripted system must be flagged when the two fronts are compared in
// the wrong order.
TEST(Couplings, ScriptedNegativeControlsAreFlagged) {
  const auto pair = scripted_addition_pair();
  EXPECT_TRUE(check_coupling_addition(pair.lower, pair.upper, FrontKind::single_rate).pass);
  EXPECT_FALSE(compare_fronts(build_front_single_rate(pair.upper).trace,
                              build_front_single_rate(pair.lower).trace)
                   .pass);
  EXPECT_FALSE(compare_fronts(build_front_modified(pair.upper).trace,
                              build_front_modified(pair.lower).trace)
                   .pass);
  const auto far = scripted_far_left_system();
  EXPECT_TRUE(check_coupling_modified(far).pass);
  EXPECT_FALSE(
      compare_fronts(build_front_modified(far).trace, build_front_single_rate(far).trace).pass);
  const auto sym = scripted_symmetrize_system();
  EXPECT_TRUE(check_coupling_symmetrize(sym).pass);
  EXPECT_FALSE(compare_fronts(build_front_modified(symmetrize(sym).system).trace,
                              build_front_modified(sym).trace)
                   .pass);
  const auto retreat = scripted_retreat_system();
  EXPECT_TRUE(check_lemma7(retreat, 4.0, 2.0).pass);
  EXPECT_FALSE(compare_fronts(build_front_remanent(retreat, 4.0, 2.0).trace,
                              build_front_single_rate(retreat).trace)
                   .pass);
}

TEST(CompareFronts, ReportsFirstViolation) {
  const auto lo = build_front_single_rate(system_of({seg(0.9, {1.0}, {0, 1})})).trace;
  const auto hi = build_front_single_rate(system_of({seg(0.9, {2.0}, {0, 1})})).trace;
  const auto v = compare_fronts(lo, hi);
  EXPECT_FALSE(v.pass);
  ASSERT_TRUE(v.first_violation.has_value());
  EXPECT_DOUBLE_EQ(v.first_violation->t, 1.0);
  EXPECT_TRUE(compare_fronts(hi, lo).pass);
  EXPECT_FALSE(compare_fronts_equal(lo, hi).pass);
  EXPECT_TRUE(compare_fronts_equal(lo, lo).pass);
}

}  // namespace
}  // namespace ksfront

#pragma once

// Brute-force reference implementations used as independent oracles by the
// unit and acceptance tests. They favour obviousness over speed: every
// event is found by a linear scan over all particles and every front value
// is recomputed from scratch.

#include <cstddef>
#include <utility>
#include <vector>

#include "ksfront/front.hpp"

namespace ksfront::oracle {

// (time, front position after the change), starting with (0, r0).
using Steps = std::vector<std::pair<double, int>>;

// Single-rate front: r_t is the largest position among red particles; a blue
// particle turns red when it stands at or below the front. If `modified`,
// the front starts at 0 and is floored at 0.
Steps direct_single_rate(const ParticleSystem& psi, bool modified);

// Remanent (d_b > 0) or frog (d_b == 0) front: r_t is the largest site ever
// visited by a red particle, starting at 0; blue particles turn red on
// entering (-inf, r_t]. Red particles follow their base path d_r/d_b times
// faster from the infection time on; frogs sit until infected and then run
// their forward walk on the clock t - tau.
Steps direct_remanent(const ParticleSystem& psi, double d_r, double d_b);

// Steps of a trace in the same (time, position) form.
Steps steps_of(const FrontTrace& trace);

// Crossing times by definition: for each level k >= 1, the first upward
// jump time t > s with r_t >= r_s + k + alpha (t - s); distinct values in
// (lo, hi), ascending.
std::vector<double> brute_crossing_times(const FrontTrace& front, double s, double alpha,
                                         double lo, double hi);

// alpha theta - 2 (cosh theta - 1) evaluated with 50 decimal digits.
double high_precision_mu(double alpha, double theta);

}  // namespace ksfront::oracle

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ksfront/lattice_config.hpp"
#include "ksfront/random_stream.hpp"

namespace ksfront {

// One nearest-neighbour step. For forward jumps (time > 0) `step` is the
// displacement W_t - W_{t-}. For backward jumps (time <= 0) it is the
// displacement seen when walking backwards in time, W_{t-} - W_t, so the
// backward half reads like an ordinary walk run on the clock -t.
struct Jump {
  double time = 0.0;
  int step = 0;
  friend bool operator==(const Jump&, const Jump&) = default;
};

// Two-sided càdlàg nearest-neighbour trajectory on [t_back, t_fwd].
//
// Stored as one ascending list of jump times covering both halves plus the
// value on each constant segment: values()[i] is the position on
// [jump_times()[i-1], jump_times()[i]), with the first and last segments
// extending to the horizon ends. position_at(t) therefore includes a jump
// occurring exactly at t, on both sides of the origin.
class ParticlePath {
 public:
  ParticlePath() : val_{0} {}

  // bwd: strictly descending times in [t_back, 0]; fwd: strictly ascending
  // times in (0, t_fwd]. Throws ParameterError on malformed input.
  static ParticlePath from_jumps(Label label, int x0, double t_back, double t_fwd,
                                 const std::vector<Jump>& bwd, const std::vector<Jump>& fwd);

  // Direct construction from the segment representation. `values` must have
  // one more entry than `times`, consecutive values must differ by one.
  static ParticlePath from_segments(Label label, double t_back, double t_fwd,
                                    std::vector<double> times, std::vector<int> values);

  Label label() const { return label_; }
  double t_back() const { return t_back_; }
  double t_fwd() const { return t_fwd_; }
  int x0() const { return position_at(0.0); }

  // Throws HorizonError outside [t_back, t_fwd].
  int position_at(double t) const;
  // Left limit W_{t-}; requires t_back < t <= t_fwd.
  int position_before(double t) const;

  std::vector<Jump> fwd_jumps() const;
  std::vector<Jump> bwd_jumps() const;

  std::span<const double> jump_times() const { return jt_; }
  std::span<const int> values() const { return val_; }
  std::size_t jump_count() const { return jt_.size(); }

  // Index of the segment containing t, i.e. number of jumps at times <= t.
  std::size_t segment_index(double t) const;
  // Number of jumps with time in (a, b].
  std::size_t jumps_in(double a, double b) const;

  friend bool operator==(const ParticlePath& a, const ParticlePath& b) {
    return a.label_ == b.label_ && a.t_back_ == b.t_back_ && a.t_fwd_ == b.t_fwd_ &&
           a.jt_ == b.jt_ && a.val_ == b.val_;
  }

 private:
  void check_time(double t) const;

  Label label_;
  double t_back_ = 0.0;
  double t_fwd_ = 0.0;
  std::vector<double> jt_;
  std::vector<int> val_;
};

// Independent rate-`rate` simple symmetric walks forward on (0, t_fwd] and
// backward on [t_back, 0) from x0. The forward half is drawn first, so it
// does not depend on t_back.
ParticlePath simulate_two_sided_walk(Label label, int x0, double rate, double t_back,
                                     double t_fwd, RandomStream& rng);

// Appends fresh forward jumps so the path covers (0, new_t_fwd].
ParticlePath extend_forward(const ParticlePath& path, double rate, double new_t_fwd,
                            RandomStream& rng);

// Residual clock speed-up from tau on: the result agrees with `path` on
// [t_back, tau] and equals path at tau + (d_r/d_b)(t - tau) for t > tau.
// The forward horizon becomes tau + (d_b/d_r)(t_fwd - tau).
ParticlePath apply_time_change(const ParticlePath& path, double tau, double d_r, double d_b);

// Immobile at x0 on [t_back, tau], then follows the forward half of `walk`
// read on a clock started at tau. Used for particles that sleep until
// activated.
ParticlePath activate_at(const ParticlePath& walk, double tau);

// Space-time translation: the result at time s is path(t0 + s) - x.
// The horizon becomes [t_back - t0, t_fwd - t0] intersected with
// [clip_back, clip_fwd].
ParticlePath shift_path(const ParticlePath& path, int x, double t0, double clip_back,
                        double clip_fwd);

// alpha*theta - 2(cosh(theta) - 1).
double mu_of(double alpha, double theta);

// Exponent of the line-hitting bound for a walk of the given total jump
// rate: alpha*theta - rate(cosh(theta) - 1). Equals mu_of at rate 2.
double mu_for_rate(double alpha, double theta, double rate);

struct BoundReport {
  double empirical_prob = 0.0;
  double ci_halfwidth = 0.0;  // one standard error
  double bound = 0.0;
  double allowance = 0.0;     // tail beyond the simulated horizon
  double horizon = 0.0;
  long n = 0;
  bool pass = false;
};

// Monte Carlo estimate of P_x(exists s >= t: W_s >= alpha s) for a walk of
// the given rate started at x0 <= 0, against e^{theta x0} e^{-mu t}. The walk
// is simulated to a horizon H at which the residual bound is 1/(10 n);
// that residual is reported as `allowance` and added to the bound.
// pass <=> empirical - 3 ci <= bound + allowance.
BoundReport check_lemma2_bound(int x0, double alpha, double theta, double t, double rate,
                               long n, RandomStream& rng);

struct ProbabilityReport {
  double estimate = 0.0;
  double ci_halfwidth = 0.0;
  double truncation_bound = 0.0;  // bound on P(first hit after t_fwd)
  long n = 0;
};

// Probability that no walk of w (all particles at sites <= 0) reaches the
// line alpha*s for s in (0, t_fwd]. Each replicate draws one seed and every
// particle's walk is driven by a substream keyed on its label, so the
// estimate is monotone under adding particles on a shared rng seed.
ProbabilityReport check_line_avoidance(const Configuration& w, double alpha, double theta,
                                       double rate, double t_fwd, long n, RandomStream& rng);

// Text format: header "label x0 t_back t_fwd" then one "time<TAB>step" line
// per jump in ascending time order (backward jumps carry negative times and
// their backward displacement). Several paths may follow each other.
std::string format_path(const ParticlePath& path);
std::vector<ParticlePath> parse_paths(std::string_view text);

}  // namespace ksfront

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ksfront/lattice_config.hpp"
#include "ksfront/random_stream.hpp"
#include "ksfront/walk.hpp"

namespace ksfront {

// Monte Carlo estimate of the probability that some walk of w (all sites
// <= 0, rate `rate`) satisfies W_s >= alpha s for some s >= t, against
// phi_theta(w) e^{-mu t}. Walks run to the horizon H at which the
// residual phi_theta(w) e^{-mu H} is 1/(10 n); that residual is reported as
// the allowance. pass <=> empirical - 3 ci <= bound + allowance.
BoundReport verify_multi_walk_bound(const Configuration& w, double alpha, double theta, double t,
                                    long n, RandomStream& rng, double rate = 2.0);

struct BoundGridSpec {
  std::vector<int> x_values;
  std::vector<double> t_values;
  long n_per_cell = 1000;
  double alpha = 1.0;
  double theta = 0.5;
  double rate = 2.0;

  // x <= 0, t >= 0, mu > 0 and n_per_cell >= 1000; throws ParameterError.
  void validate() const;
};

struct BoundCell {
  int x = 0;
  double t = 0.0;
  BoundReport report;
};

// Single-walk bound on every (x, t) cell, x-major; cell i draws from
// derive_seed(seed, i, Stream::bound_check).
std::vector<BoundCell> run_bound_grid(const BoundGridSpec& spec, std::uint64_t seed);

// CSV "x,t,empirical,ci,bound,pass" and a JSON summary with per-cell
// allowances and the number of failing cells.
std::string format_bound_table_csv(const std::vector<BoundCell>& cells);
std::string format_bound_summary_json(const BoundGridSpec& spec,
                                      const std::vector<BoundCell>& cells);

struct GoodnessReport {
  double chi2 = 0.0;
  int dof = 0;
  double p_value = 0.0;
  double significance = 0.01;
  bool pass = false;
  std::vector<long> observed;    // pooled count histogram, last bin open-ended
  std::vector<double> expected;
  long n_counts = 0;
};

// Independent rate-`rate` walks from a Poisson(rho) configuration on
// `sim_window`; the occupation counts of every site of `bulk` at time t,
// pooled over n replicas, are tested against Poisson(rho) with a chi-square
// test at `significance`. Unless `enforce_margin` is false, the bulk must
// sit at least 4 sqrt(rate t) sites inside the simulation window
// (ParameterError otherwise).
GoodnessReport verify_shift_invariance(double rho, double rate, double t, IntInterval bulk,
                                       IntInterval sim_window, long n, RandomStream& rng,
                                       double significance = 0.01, bool enforce_margin = true);

// Chi-square goodness of fit of a count histogram (index = count, last bin
// open-ended) against Poisson(rho); bins with expected count below 5 are
// merged into their neighbour towards the centre.
GoodnessReport poisson_goodness_of_fit(const std::vector<long>& histogram, double rho,
                                       double significance = 0.01);

}  // namespace ksfront

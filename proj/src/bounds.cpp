#include "ksfront/bounds.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "json.hpp"
#include "ksfront/errors.hpp"

namespace ksfront {

namespace {

// True iff a walk from x0 has W_s >= alpha s for some s in [t, h].
bool walk_reaches_line(int x0, double alpha, double t, double h, double rate,
                       RandomStream& rng) {
  int pos = x0;
  double next = rng.exponential(rate);
  while (next <= t) {
    pos += rng.sign();
    next += rng.exponential(rate);
  }
  if (pos >= alpha * t) return true;
  while (next <= h) {
    pos += rng.sign();
    if (pos >= alpha * next) return true;
    next += rng.exponential(rate);
  }
  return false;
}

}  // namespace

BoundReport verify_multi_walk_bound(const Configuration& w, double alpha, double theta, double t,
                                    long n, RandomStream& rng, double rate) {
  if (!w.sites().empty() && w.sites().rbegin()->first > 0) {
    throw ParameterError("verify_multi_walk_bound: particles must lie at sites <= 0");
  }
  if (n < 1) throw ParameterError("verify_multi_walk_bound: n must be >= 1");
  if (t < 0.0) throw ParameterError("verify_multi_walk_bound: t must be >= 0");
  const double mu = mu_for_rate(alpha, theta, rate);
  if (!(mu > 0.0)) throw ParameterError("verify_multi_walk_bound: mu must be positive");
  BoundReport rep;
  rep.n = n;
  const double phi = phi_theta(w, theta);
  rep.bound = phi * std::exp(-mu * t);
  const double h =
      phi > 0.0 ? std::max(t, (std::log(10.0 * static_cast<double>(n)) + std::log(phi)) / mu) : t;
  rep.horizon = h;
  rep.allowance = phi * std::exp(-mu * h);
  long hits = 0;
  for (long i = 0; i < n; ++i) {
    bool hit = false;
    // Every walk is drawn even after a hit so the stream position does not
    // depend on the outcome order.
    for (const auto& [x, labels] : w.sites()) {
      for (std::size_t j = 0; j < labels.size(); ++j) {
        if (walk_reaches_line(x, alpha, t, h, rate, rng)) hit = true;
      }
    }
    if (hit) ++hits;
  }
  const double nn = static_cast<double>(n);
  rep.empirical_prob = static_cast<double>(hits) / nn;
  rep.ci_halfwidth = std::sqrt(rep.empirical_prob * (1.0 - rep.empirical_prob) / nn);
  rep.pass = rep.empirical_prob - 3.0 * rep.ci_halfwidth <= rep.bound + rep.allowance;
  return rep;
}

void BoundGridSpec::validate() const {
  if (x_values.empty() || t_values.empty()) throw ParameterError("bound grid is empty");
  for (int x : x_values) {
    if (x > 0) throw ParameterError("bound grid: x values must be <= 0");
  }
  for (double t : t_values) {
    if (!(t >= 0.0)) throw ParameterError("bound grid: t values must be >= 0");
  }
  if (n_per_cell < 1000) throw ParameterError("bound grid: n_per_cell must be >= 1000");
  if (!(mu_for_rate(alpha, theta, rate) > 0.0)) {
    throw ParameterError("bound grid: alpha theta - rate (cosh theta - 1) must be positive");
  }
}

std::vector<BoundCell> run_bound_grid(const BoundGridSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<BoundCell> cells;
  std::uint64_t i = 0;
  for (int x : spec.x_values) {
    for (double t : spec.t_values) {
      RandomStream rng(derive_seed(seed, i++, Stream::bound_check));
      BoundCell c;
      c.x = x;
      c.t = t;
      c.report = check_lemma2_bound(x, spec.alpha, spec.theta, t, spec.rate, spec.n_per_cell, rng);
      cells.push_back(c);
    }
  }
  return cells;
}

std::string format_bound_table_csv(const std::vector<BoundCell>& cells) {
  std::string out = "x,t,empirical,ci,bound,pass\n";
  for (const auto& c : cells) {
    out += std::to_string(c.x) + ',' + format_double(c.t) + ',' +
           format_double(c.report.empirical_prob) + ',' + format_double(c.report.ci_halfwidth) +
           ',' + format_double(c.report.bound) + ',' + (c.report.pass ? "true" : "false") + '\n';
  }
  return out;
}

std::string format_bound_summary_json(const BoundGridSpec& spec,
                                      const std::vector<BoundCell>& cells) {
  nlohmann::ordered_json j;
  j["alpha"] = spec.alpha;
  j["theta"] = spec.theta;
  j["rate"] = spec.rate;
  j["mu"] = mu_for_rate(spec.alpha, spec.theta, spec.rate);
  j["n_per_cell"] = spec.n_per_cell;
  long failures = 0;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    if (!c.report.pass) ++failures;
    nlohmann::ordered_json r;
    r["x"] = c.x;
    r["t"] = c.t;
    r["empirical"] = c.report.empirical_prob;
    r["ci"] = c.report.ci_halfwidth;
    r["bound"] = c.report.bound;
    r["allowance"] = c.report.allowance;
    r["horizon"] = c.report.horizon;
    r["pass"] = c.report.pass;
    rows.push_back(r);
  }
  j["cells"] = rows;
  j["failures"] = failures;
  j["pass"] = failures == 0;
  return j.dump(2) + "\n";
}

GoodnessReport poisson_goodness_of_fit(const std::vector<long>& histogram, double rho,
                                       double significance) {
  if (!(rho > 0.0)) throw ParameterError("poisson_goodness_of_fit: rho must be positive");
  long total = 0;
  for (long c : histogram) total += c;
  if (total <= 0 || histogram.empty()) throw InsufficientDataError("empty count histogram");
  const std::size_t k_max = histogram.size() - 1;
  std::vector<double> expected(histogram.size());
  double pmf = std::exp(-rho);
  double cum = 0.0;
  for (std::size_t k = 0; k < k_max; ++k) {
    expected[k] = static_cast<double>(total) * pmf;
    cum += pmf;
    pmf *= rho / static_cast<double>(k + 1);
  }
  expected[k_max] = static_cast<double>(total) * std::max(0.0, 1.0 - cum);

  // Merge left to right until each bin expects at least 5; a short final
  // bin joins its left neighbour.
  std::vector<long> obs;
  std::vector<double> exp;
  long o = 0;
  double e = 0.0;
  for (std::size_t k = 0; k <= k_max; ++k) {
    o += histogram[k];
    e += expected[k];
    if (e >= 5.0) {
      obs.push_back(o);
      exp.push_back(e);
      o = 0;
      e = 0.0;
    }
  }
  if (e > 0.0 || o > 0) {
    if (exp.empty()) {
      obs.push_back(o);
      exp.push_back(e);
    } else {
      obs.back() += o;
      exp.back() += e;
    }
  }
  GoodnessReport rep;
  rep.significance = significance;
  rep.n_counts = total;
  rep.observed = obs;
  rep.expected = exp;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double d = static_cast<double>(obs[i]) - exp[i];
    rep.chi2 += d * d / exp[i];
  }
  rep.dof = static_cast<int>(obs.size()) - 1;
  if (rep.dof < 1) throw InsufficientDataError("chi-square test needs at least two bins");
  const boost::math::chi_squared dist(rep.dof);
  rep.p_value = boost::math::cdf(boost::math::complement(dist, rep.chi2));
  rep.pass = rep.p_value >= significance;
  return rep;
}

GoodnessReport verify_shift_invariance(double rho, double rate, double t, IntInterval bulk,
                                       IntInterval sim_window, long n, RandomStream& rng,
                                       double significance, bool enforce_margin) {
  if (!(rho > 0.0) || !(rate > 0.0) || t < 0.0 || n < 1) {
    throw ParameterError("verify_shift_invariance: bad parameters");
  }
  if (bulk.lo > bulk.hi || sim_window.lo > sim_window.hi) {
    throw ParameterError("verify_shift_invariance: empty window");
  }
  if (bulk.lo < sim_window.lo || bulk.hi > sim_window.hi) {
    throw ParameterError("verify_shift_invariance: bulk must lie inside the simulation window");
  }
  const double margin = 4.0 * std::sqrt(rate * t);
  if (enforce_margin &&
      (bulk.lo - sim_window.lo < margin || sim_window.hi - bulk.hi < margin)) {
    throw ParameterError("verify_shift_invariance: bulk closer than 4 sqrt(rate t) to the edge");
  }
  const std::size_t width = static_cast<std::size_t>(bulk.hi - bulk.lo + 1);
  std::vector<long> histogram;
  std::vector<int> occ(width);
  for (long rep = 0; rep < n; ++rep) {
    std::fill(occ.begin(), occ.end(), 0);
    for (int x = sim_window.lo; x <= sim_window.hi; ++x) {
      const unsigned k = rng.poisson(rho);
      for (unsigned i = 0; i < k; ++i) {
        const unsigned jumps = rng.poisson(rate * t);
        int pos = x;
        for (unsigned j = 0; j < jumps; ++j) pos += rng.sign();
        if (pos >= bulk.lo && pos <= bulk.hi) ++occ[static_cast<std::size_t>(pos - bulk.lo)];
      }
    }
    for (int c : occ) {
      if (static_cast<std::size_t>(c) >= histogram.size()) histogram.resize(c + 1, 0);
      ++histogram[static_cast<std::size_t>(c)];
    }
  }
  // One extra empty bin so the last bin stands for "this count or more".
  histogram.push_back(0);
  return poisson_goodness_of_fit(histogram, rho, significance);
}

}  // namespace ksfront

#include "ksfront/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include <boost/math/distributions/normal.hpp>

#include "json.hpp"
#include "ksfront/errors.hpp"
#include "ksfront/random_stream.hpp"

namespace ksfront {

namespace {

double z_value() {
  const boost::math::normal nd;
  return boost::math::quantile(nd, 0.5 + kConfidenceLevel / 2.0);
}

// Mean and unbiased variance of a sequence, summed in the given order.
std::pair<double, double> mean_var(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += v;
  const double m = s / n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, x.size() > 1 ? ss / (n - 1.0) : 0.0};
}

// Linear-interpolation sample quantile of sorted data.
double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double upper_quantile(std::vector<double> draws, double q) {
  std::sort(draws.begin(), draws.end());
  auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(draws.size())));
  i = std::clamp<std::size_t>(i, 1, draws.size());
  return draws[i - 1];
}

// Bootstrap over groups: the statistic is recomputed on `n_resamples`
// resamples (with replacement) of the canonically ordered groups. Returns
// the half-width z * sd of the resampled statistics.
template <typename Group, typename Stat>
double group_bootstrap_ci(const std::vector<Group>& groups, std::uint64_t seed, int n_resamples,
                          Stat stat) {
  RandomStream rng(derive_seed(seed, 0, Stream::resample));
  const std::size_t g = groups.size();
  std::vector<double> draws;
  draws.reserve(static_cast<std::size_t>(n_resamples));
  std::vector<const Group*> pick(g);
  for (int b = 0; b < n_resamples; ++b) {
    for (std::size_t i = 0; i < g; ++i) {
      pick[i] = &groups[static_cast<std::size_t>(rng.next_u64() % g)];
    }
    const auto v = stat(pick);
    if (v) draws.push_back(*v);
  }
  if (draws.size() < 2) return 0.0;
  return z_value() * std::sqrt(mean_var(draws).second);
}

double ecdf_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double best = 0.0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  while (i < a.size() || j < b.size()) {
    double x;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      x = a[i];
    } else {
      x = b[j];
    }
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

std::vector<double> normal_deciles() {
  const boost::math::normal nd;
  std::vector<double> out;
  for (int i = 1; i <= 9; ++i) out.push_back(boost::math::quantile(nd, i / 10.0));
  return out;
}

bool censored_by(const FrontTrace& f, double t) { return f.censored && f.censor_time <= t; }

}  // namespace

std::vector<IncrementSample> increments_from(const std::vector<RenewalRecord>& renewals, int r0,
                                             std::uint64_t replica, bool include_truncated) {
  std::vector<IncrementSample> out;
  double prev_kappa = 0.0;
  long prev_r = r0;
  bool prev_flagged = false;
  for (std::size_t i = 0; i < renewals.size(); ++i) {
    const auto& rec = renewals[i];
    const bool flagged = rec.flags.any();
    if (include_truncated || (!flagged && !prev_flagged)) {
      IncrementSample s;
      s.d_kappa = rec.kappa - prev_kappa;
      s.d_r = rec.r_kappa - prev_r;
      s.index = static_cast<int>(i);
      s.replica = replica;
      out.push_back(s);
    }
    prev_kappa = rec.kappa;
    prev_r = rec.r_kappa;
    prev_flagged = flagged;
  }
  return out;
}

SpeedEstimate estimate_speed_between(std::span<const FrontTrace> fronts, double a, double b) {
  if (!(b > a) || a < 0.0) throw ParameterError("estimate_speed: need 0 <= a < b");
  SpeedEstimate out;
  std::vector<double> v;
  for (const auto& f : fronts) {
    if (f.t_end < b) throw HorizonError("estimate_speed: a trace ends before the window");
    if (censored_by(f, b)) {
      ++out.n_censored;
      continue;
    }
    v.push_back((f.position_at(b) - f.position_at(a)) / (b - a));
  }
  if (v.empty()) throw InsufficientDataError("estimate_speed: no uncensored traces");
  const auto [m, var] = mean_var(v);
  out.v.value = m;
  out.v.n = static_cast<long>(v.size());
  out.v.ci_defined = v.size() > 1;
  out.v.ci = out.v.ci_defined ? z_value() * std::sqrt(var / static_cast<double>(v.size())) : 0.0;
  return out;
}

SpeedEstimate estimate_speed(std::span<const FrontTrace> fronts, double t_burn) {
  if (fronts.empty()) throw InsufficientDataError("estimate_speed: empty ensemble");
  double t_end = kNever;
  for (const auto& f : fronts) t_end = std::min(t_end, f.t_end);
  if (!(t_end >= 2.0 * t_burn)) {
    throw HorizonError("estimate_speed: traces must reach twice the burn-in");
  }
  return estimate_speed_between(fronts, t_burn, t_end);
}

namespace {

using SampleKey = std::tuple<int, double, long>;

std::vector<std::vector<SampleKey>> canonical_groups(std::span<const IncrementSample> samples) {
  std::map<std::uint64_t, std::vector<SampleKey>> by_replica;
  for (const auto& s : samples) by_replica[s.replica].emplace_back(s.index, s.d_kappa, s.d_r);
  std::vector<std::vector<SampleKey>> groups;
  for (auto& [id, g] : by_replica) {
    std::sort(g.begin(), g.end());
    groups.push_back(std::move(g));
  }
  std::sort(groups.begin(), groups.end());
  return groups;
}

std::optional<double> renewal_sigma2(const std::vector<const std::vector<SampleKey>*>& groups,
                                     double v_hat) {
  std::vector<double> y;
  double sum_k = 0.0;
  for (const auto* g : groups) {
    for (const auto& [idx, dk, dr] : *g) {
      y.push_back(static_cast<double>(dr) - v_hat * dk);
      sum_k += dk;
    }
  }
  if (y.size() < 2) return std::nullopt;
  return mean_var(y).second / (sum_k / static_cast<double>(y.size()));
}

}  // namespace

Estimate estimate_variance_renewal(std::span<const IncrementSample> samples, double v_hat,
                                   std::uint64_t resample_seed, int n_resamples) {
  if (samples.size() < 30) {
    throw InsufficientDataError("estimate_variance_renewal: need at least 30 increments, have " +
                                std::to_string(samples.size()));
  }
  for (const auto& s : samples) {
    if (!(s.d_kappa > 0.0)) throw ParameterError("increment with non-positive d_kappa");
  }
  const auto groups = canonical_groups(samples);
  std::vector<const std::vector<SampleKey>*> all;
  for (const auto& g : groups) all.push_back(&g);
  Estimate out;
  out.value = *renewal_sigma2(all, v_hat);
  out.n = static_cast<long>(samples.size());
  out.ci_defined = groups.size() > 1;
  if (out.ci_defined) {
    out.ci = group_bootstrap_ci(groups, resample_seed, n_resamples,
                                [&](const auto& pick) { return renewal_sigma2(pick, v_hat); });
  }
  return out;
}

namespace {

struct Fit {
  double slope = 0.0;
  double intercept = 0.0;
  double rms = 0.0;
  std::vector<double> variance;
};

std::optional<Fit> diffusive_fit(const std::vector<const std::vector<double>*>& rows,
                                 const std::vector<double>& t_grid) {
  if (rows.size() < 2) return std::nullopt;
  Fit fit;
  const std::size_t m = t_grid.size();
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> col;
    col.reserve(rows.size());
    for (const auto* r : rows) col.push_back((*r)[j]);
    fit.variance.push_back(mean_var(col).second);
  }
  double st = 0.0;
  double sv = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    st += t_grid[j];
    sv += fit.variance[j];
  }
  const double tm = st / static_cast<double>(m);
  const double vm = sv / static_cast<double>(m);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    sxy += (t_grid[j] - tm) * (fit.variance[j] - vm);
    sxx += (t_grid[j] - tm) * (t_grid[j] - tm);
  }
  fit.slope = sxy / sxx;
  fit.intercept = vm - fit.slope * tm;
  double rss = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double e = fit.variance[j] - fit.intercept - fit.slope * t_grid[j];
    rss += e * e;
  }
  fit.rms = std::sqrt(rss / static_cast<double>(m));
  return fit;
}

}  // namespace

DiffusiveEstimate estimate_variance_diffusive(std::span<const FrontTrace> fronts,
                                              const std::vector<double>& t_grid, double v_hat,
                                              std::uint64_t resample_seed, int n_resamples) {
  if (t_grid.size() < 3) throw ParameterError("estimate_variance_diffusive: need 3 grid points");
  if (!std::is_sorted(t_grid.begin(), t_grid.end()) ||
      std::adjacent_find(t_grid.begin(), t_grid.end()) != t_grid.end() || t_grid.front() < 0.0) {
    throw ParameterError("estimate_variance_diffusive: grid must be increasing and nonnegative");
  }
  std::vector<std::vector<double>> rows;
  for (const auto& f : fronts) {
    if (f.t_end < t_grid.back()) throw HorizonError("diffusive grid beyond a trace horizon");
    if (censored_by(f, t_grid.back())) continue;
    std::vector<double> row;
    for (double t : t_grid) row.push_back(f.position_at(t) - v_hat * t);
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw InsufficientDataError("estimate_variance_diffusive: need 2 replicas");
  std::sort(rows.begin(), rows.end());
  std::vector<const std::vector<double>*> all;
  for (const auto& r : rows) all.push_back(&r);
  const auto fit = *diffusive_fit(all, t_grid);
  DiffusiveEstimate out;
  out.sigma2.value = fit.slope;
  out.sigma2.n = static_cast<long>(rows.size());
  out.sigma2.ci_defined = true;
  out.sigma2.ci = group_bootstrap_ci(rows, resample_seed, n_resamples, [&](const auto& pick) {
    const auto f = diffusive_fit(pick, t_grid);
    return f ? std::optional<double>(f->slope) : std::nullopt;
  });
  out.intercept = fit.intercept;
  out.linearity_residual = fit.rms;
  out.t_grid = t_grid;
  out.variance = fit.variance;
  return out;
}

IidDiagnostics iid_diagnostics(std::span<const IncrementSample> samples, long min_samples) {
  if (static_cast<long>(samples.size()) < std::max(2L, min_samples)) {
    throw InsufficientDataError("iid_diagnostics: need at least " +
                                std::to_string(std::max(2L, min_samples)) + " increments, have " +
                                std::to_string(samples.size()));
  }
  std::vector<IncrementSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.replica, a.index) < std::tie(b.replica, b.index);
  });
  IidDiagnostics out;
  out.n = static_cast<long>(sorted.size());

  double mk = 0.0;
  double mr = 0.0;
  for (const auto& s : sorted) {
    mk += s.d_kappa;
    mr += static_cast<double>(s.d_r);
  }
  mk /= static_cast<double>(out.n);
  mr /= static_cast<double>(out.n);
  double vk = 0.0;
  double vr = 0.0;
  for (const auto& s : sorted) {
    vk += (s.d_kappa - mk) * (s.d_kappa - mk);
    vr += (static_cast<double>(s.d_r) - mr) * (static_cast<double>(s.d_r) - mr);
  }
  vk /= static_cast<double>(out.n);
  vr /= static_cast<double>(out.n);
  double ck = 0.0;
  double cr = 0.0;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    const auto& a = sorted[i];
    const auto& b = sorted[i + 1];
    if (a.replica != b.replica || b.index != a.index + 1) continue;
    ++out.n_pairs;
    ck += (a.d_kappa - mk) * (b.d_kappa - mk);
    cr += (static_cast<double>(a.d_r) - mr) * (static_cast<double>(b.d_r) - mr);
  }
  if (out.n_pairs == 0) throw InsufficientDataError("iid_diagnostics: no consecutive pairs");
  const double np = static_cast<double>(out.n_pairs);
  out.lag1_d_kappa = vk > 0.0 ? (ck / np) / vk : 0.0;
  out.lag1_d_r = vr > 0.0 ? (cr / np) / vr : 0.0;
  out.lag1_threshold = 3.0 / std::sqrt(np);

  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.index, a.replica) < std::tie(b.index, b.replica);
  });
  const std::size_t half = sorted.size() / 2;
  std::vector<double> k1, k2, r1, r2;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    (i < half ? k1 : k2).push_back(sorted[i].d_kappa);
    (i < half ? r1 : r2).push_back(static_cast<double>(sorted[i].d_r));
  }
  out.n_first = static_cast<long>(k1.size());
  out.n_second = static_cast<long>(k2.size());
  out.ks_d_kappa = ecdf_distance(k1, k2);
  out.ks_d_r = ecdf_distance(r1, r2);
  return out;
}

double calibrate_two_sample_threshold(long n1, long n2, double quantile, std::uint64_t seed,
                                      int reps) {
  if (n1 < 1 || n2 < 1 || reps < 1) throw ParameterError("calibration needs positive sizes");
  RandomStream rng(seed);
  std::vector<double> draws;
  for (int b = 0; b < reps; ++b) {
    std::vector<double> a(static_cast<std::size_t>(n1));
    std::vector<double> c(static_cast<std::size_t>(n2));
    for (auto& x : a) x = rng.uniform();
    for (auto& x : c) x = rng.uniform();
    draws.push_back(ecdf_distance(std::move(a), std::move(c)));
  }
  return upper_quantile(std::move(draws), quantile);
}

double decile_rmse(std::vector<double> standardized) {
  if (standardized.size() < 2) throw InsufficientDataError("decile_rmse: need 2 values");
  std::sort(standardized.begin(), standardized.end());
  const auto nq = normal_deciles();
  double ss = 0.0;
  for (int i = 1; i <= 9; ++i) {
    const double e = sorted_quantile(standardized, i / 10.0) - nq[static_cast<std::size_t>(i - 1)];
    ss += e * e;
  }
  return std::sqrt(ss / 9.0);
}

GaussianProfile gaussian_profile_check(std::span<const FrontTrace> fronts, double t_eval,
                                       double v_hat, double sigma2, bool centre_on_mean) {
  if (!(sigma2 > 0.0)) throw ParameterError("gaussian_profile_check: sigma2 must be positive");
  if (!(t_eval > 0.0)) throw ParameterError("gaussian_profile_check: t_eval must be positive");
  std::vector<double> r;
  for (const auto& f : fronts) {
    if (f.t_end < t_eval) throw HorizonError("gaussian_profile_check: t_eval beyond a trace");
    if (censored_by(f, t_eval)) continue;
    r.push_back(f.position_at(t_eval));
  }
  if (r.size() < 2) throw InsufficientDataError("gaussian_profile_check: need 2 replicas");
  GaussianProfile out;
  out.location = centre_on_mean ? mean_var(r).first : v_hat * t_eval;
  const double scale = std::sqrt(sigma2 * t_eval);
  for (double x : r) out.standardized.push_back((x - out.location) / scale);
  std::sort(out.standardized.begin(), out.standardized.end());
  out.degenerate = out.standardized.front() == out.standardized.back();
  out.normal_deciles = normal_deciles();
  for (int i = 1; i <= 9; ++i) out.empirical_deciles.push_back(sorted_quantile(out.standardized, i / 10.0));
  out.rmse = decile_rmse(out.standardized);
  return out;
}

double calibrate_decile_rmse_threshold(long n, double quantile, std::uint64_t seed, int reps) {
  if (n < 2 || reps < 1) throw ParameterError("calibration needs n >= 2");
  RandomStream rng(seed);
  std::vector<double> draws;
  for (int b = 0; b < reps; ++b) {
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = rng.normal();
    const double m = mean_var(x).first;
    for (auto& v : x) v -= m;
    draws.push_back(decile_rmse(std::move(x)));
  }
  return upper_quantile(std::move(draws), quantile);
}

BallisticityReport ballisticity_report(std::span<const FrontTrace> fronts, double alpha,
                                       double beta, const std::vector<double>& t_grid) {
  BallisticityReport out;
  out.t_grid = t_grid;
  for (double t : t_grid) {
    if (!(t > 0.0)) throw ParameterError("ballisticity_report: grid times must be positive");
    long n = 0;
    long below = 0;
    long above = 0;
    double ratio = 0.0;
    for (const auto& f : fronts) {
      if (f.t_end < t) throw HorizonError("ballisticity_report: grid time beyond a trace");
      if (f.censored) continue;
      ++n;
      bool hit_below = false;
      bool hit_above = false;
      double sup = -kNever;
      // Segments of r: [start, end) with value v; the last one ends at t_end inclusive.
      const std::size_t j0 = f.jumps_until(t);
      double start = t;
      int v = f.position_at(t);
      for (std::size_t j = j0;; ++j) {
        const bool last = j >= f.jumps.size() || f.jumps[j].time > f.t_end;
        const double end = last ? f.t_end : f.jumps[j].time;
        if (last ? v <= alpha * end : v < alpha * end) hit_below = true;
        if (v >= beta * start) hit_above = true;
        sup = std::max(sup, v >= 0 ? v / start : v / end);
        if (last) break;
        start = end;
        v = f.jumps[j].position;
      }
      below += hit_below;
      above += hit_above;
      ratio += sup;
    }
    const double dn = n > 0 ? static_cast<double>(n) : 1.0;
    out.below_alpha_fraction.push_back(static_cast<double>(below) / dn);
    out.above_beta_fraction.push_back(static_cast<double>(above) / dn);
    out.max_ratio.push_back(ratio / dn);
  }
  return out;
}

namespace {

nlohmann::ordered_json estimate_json(const Estimate& e) {
  nlohmann::ordered_json j;
  j["value"] = e.value;
  if (e.ci_defined) {
    j["ci"] = e.ci;
  } else {
    j["ci"] = nullptr;
  }
  j["n"] = e.n;
  return j;
}

}  // namespace

std::string format_report_json(const EstimateReport& report) {
  nlohmann::ordered_json j;
  j["confidence_level"] = report.confidence_level;
  j["v_hat"] = estimate_json(report.speed.v);
  j["n_censored"] = report.speed.n_censored;
  j["sigma2_renewal"] =
      report.sigma2_renewal ? estimate_json(*report.sigma2_renewal) : nlohmann::ordered_json();
  if (report.sigma2_diffusive) {
    auto d = estimate_json(report.sigma2_diffusive->sigma2);
    d["intercept"] = report.sigma2_diffusive->intercept;
    d["linearity_residual"] = report.sigma2_diffusive->linearity_residual;
    d["t_grid"] = report.sigma2_diffusive->t_grid;
    d["variance"] = report.sigma2_diffusive->variance;
    j["sigma2_diffusive"] = d;
  } else {
    j["sigma2_diffusive"] = nullptr;
  }
  j["n_increments"] = report.n_increments;
  nlohmann::ordered_json diag;
  if (report.diagnostics) {
    const auto& d = *report.diagnostics;
    diag["n"] = d.n;
    diag["n_pairs"] = d.n_pairs;
    diag["lag1_d_kappa"] = d.lag1_d_kappa;
    diag["lag1_d_r"] = d.lag1_d_r;
    diag["lag1_threshold"] = d.lag1_threshold;
    diag["two_sample_distance_d_kappa"] = d.ks_d_kappa;
    diag["two_sample_distance_d_r"] = d.ks_d_r;
  }
  if (report.gaussian_quantile_rmse) diag["gaussian_quantile_rmse"] = *report.gaussian_quantile_rmse;
  j["diagnostics"] = diag;
  j["notes"] = report.notes;
  return j.dump(2) + "\n";
}

std::string format_residuals_csv(std::span<const FrontTrace> fronts,
                                 std::span<const std::uint64_t> replica_ids, double t_eval,
                                 double v_hat, double sigma2) {
  if (fronts.size() != replica_ids.size()) {
    throw ParameterError("format_residuals_csv: one replica id per trace");
  }
  std::string out = "replica,t,r,residual,standardized\n";
  const double scale = sigma2 > 0.0 ? std::sqrt(sigma2 * t_eval) : 0.0;
  for (std::size_t i = 0; i < fronts.size(); ++i) {
    const auto& f = fronts[i];
    if (f.t_end < t_eval || censored_by(f, t_eval)) continue;
    const int r = f.position_at(t_eval);
    const double res = r - v_hat * t_eval;
    out += std::to_string(replica_ids[i]) + ',' + format_double(t_eval) + ',' + std::to_string(r) +
           ',' + format_double(res) + ',' + (scale > 0.0 ? format_double(res / scale) : "") + '\n';
  }
  return out;
}

}  // namespace ksfront

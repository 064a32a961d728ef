#include "ksfront/walk.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <optional>
#include <sstream>

#include "ksfront/errors.hpp"

namespace ksfront {

namespace {

void check_steps(const std::vector<int>& val) {
  for (std::size_t i = 1; i < val.size(); ++i) {
    if (std::abs(val[i] - val[i - 1]) != 1) {
      throw ParameterError("path steps must be +1 or -1");
    }
  }
}

void check_ascending(const std::vector<double>& jt) {
  for (std::size_t i = 1; i < jt.size(); ++i) {
    if (!(jt[i] > jt[i - 1])) throw ParameterError("path jump times must be strictly monotone");
  }
}

}  // namespace

ParticlePath ParticlePath::from_jumps(Label label, int x0, double t_back, double t_fwd,
                                      const std::vector<Jump>& bwd,
                                      const std::vector<Jump>& fwd) {
  if (!(t_back <= 0.0 && t_fwd >= 0.0)) throw ParameterError("path horizon must contain 0");
  std::vector<double> jt;
  std::vector<int> val;
  jt.reserve(bwd.size() + fwd.size());
  val.reserve(bwd.size() + fwd.size() + 1);
  // Backward half, most negative time first.
  int pos = x0;
  std::vector<int> bvals;
  bvals.reserve(bwd.size());
  for (const auto& j : bwd) {
    if (!(j.time <= 0.0 && j.time >= t_back)) {
      throw ParameterError("backward jump time outside [t_back, 0]");
    }
    pos += j.step;
    bvals.push_back(pos);
  }
  for (std::size_t i = bwd.size(); i-- > 0;) {
    jt.push_back(bwd[i].time);
    val.push_back(bvals[i]);
  }
  val.push_back(x0);
  pos = x0;
  for (const auto& j : fwd) {
    if (!(j.time > 0.0 && j.time <= t_fwd)) {
      throw ParameterError("forward jump time outside (0, t_fwd]");
    }
    pos += j.step;
    jt.push_back(j.time);
    val.push_back(pos);
  }
  return from_segments(label, t_back, t_fwd, std::move(jt), std::move(val));
}

ParticlePath ParticlePath::from_segments(Label label, double t_back, double t_fwd,
                                         std::vector<double> times, std::vector<int> values) {
  if (values.size() != times.size() + 1) {
    throw ParameterError("path needs one more segment value than jump times");
  }
  if (!(t_back <= 0.0 && t_fwd >= 0.0)) throw ParameterError("path horizon must contain 0");
  check_ascending(times);
  check_steps(values);
  if (!times.empty() && (times.front() < t_back || times.back() > t_fwd)) {
    throw ParameterError("path jump time outside its horizon");
  }
  ParticlePath p;
  p.label_ = label;
  p.t_back_ = t_back;
  p.t_fwd_ = t_fwd;
  p.jt_ = std::move(times);
  p.val_ = std::move(values);
  return p;
}

void ParticlePath::check_time(double t) const {
  if (!(t >= t_back_ && t <= t_fwd_)) {
    throw HorizonError("time " + format_double(t) + " outside path horizon [" +
                       format_double(t_back_) + ", " + format_double(t_fwd_) + "]");
  }
}

std::size_t ParticlePath::segment_index(double t) const {
  return static_cast<std::size_t>(std::upper_bound(jt_.begin(), jt_.end(), t) - jt_.begin());
}

int ParticlePath::position_at(double t) const {
  check_time(t);
  return val_[segment_index(t)];
}

int ParticlePath::position_before(double t) const {
  if (!(t > t_back_ && t <= t_fwd_)) {
    throw HorizonError("left limit at " + format_double(t) + " outside path horizon");
  }
  return val_[static_cast<std::size_t>(std::lower_bound(jt_.begin(), jt_.end(), t) -
                                       jt_.begin())];
}

std::size_t ParticlePath::jumps_in(double a, double b) const {
  if (b <= a) return 0;
  return segment_index(b) - segment_index(a);
}

std::vector<Jump> ParticlePath::fwd_jumps() const {
  std::vector<Jump> out;
  for (std::size_t i = segment_index(0.0); i < jt_.size(); ++i) {
    out.push_back({jt_[i], val_[i + 1] - val_[i]});
  }
  return out;
}

std::vector<Jump> ParticlePath::bwd_jumps() const {
  std::vector<Jump> out;
  for (std::size_t i = segment_index(0.0); i-- > 0;) {
    out.push_back({jt_[i], val_[i] - val_[i + 1]});
  }
  return out;
}

ParticlePath simulate_two_sided_walk(Label label, int x0, double rate, double t_back,
                                     double t_fwd, RandomStream& rng) {
  if (!(rate > 0.0)) throw ParameterError("simulate_two_sided_walk: rate must be positive");
  if (!(t_back <= 0.0 && t_fwd >= 0.0)) {
    throw ParameterError("simulate_two_sided_walk: need t_back <= 0 <= t_fwd");
  }
  std::vector<Jump> fwd;
  fwd.reserve(static_cast<std::size_t>(rate * t_fwd * 1.1) + 8);
  for (double t = rng.exponential(rate); t <= t_fwd; t += rng.exponential(rate)) {
    fwd.push_back({t, rng.sign()});
  }
  std::vector<Jump> bwd;
  bwd.reserve(static_cast<std::size_t>(-rate * t_back * 1.1) + 8);
  for (double s = rng.exponential(rate); -s >= t_back; s += rng.exponential(rate)) {
    bwd.push_back({-s, rng.sign()});
  }
  return ParticlePath::from_jumps(label, x0, t_back, t_fwd, bwd, fwd);
}

ParticlePath extend_forward(const ParticlePath& path, double rate, double new_t_fwd,
                            RandomStream& rng) {
  if (!(rate > 0.0)) throw ParameterError("extend_forward: rate must be positive");
  if (new_t_fwd < path.t_fwd()) throw ParameterError("extend_forward: horizon must not shrink");
  std::vector<double> jt(path.jump_times().begin(), path.jump_times().end());
  std::vector<int> val(path.values().begin(), path.values().end());
  // Memorylessness: restarting the exponential clock at t_fwd is exact.
  for (double t = path.t_fwd() + rng.exponential(rate); t <= new_t_fwd;
       t += rng.exponential(rate)) {
    jt.push_back(t);
    val.push_back(val.back() + rng.sign());
  }
  return ParticlePath::from_segments(path.label(), path.t_back(), new_t_fwd, std::move(jt),
                                     std::move(val));
}

ParticlePath apply_time_change(const ParticlePath& path, double tau, double d_r, double d_b) {
  if (!(d_b > 0.0) || d_r < d_b) throw ParameterError("apply_time_change: need d_r >= d_b > 0");
  if (tau < 0.0 || tau > path.t_fwd()) {
    throw HorizonError("apply_time_change: tau outside [0, t_fwd]");
  }
  if (d_r == d_b) return path;
  const double slow = d_b / d_r;
  std::vector<double> jt(path.jump_times().begin(), path.jump_times().end());
  for (double& t : jt) {
    if (t > tau) t = tau + (t - tau) * slow;
  }
  // Rounding can only merge times that were already within one ulp.
  for (std::size_t i = 1; i < jt.size(); ++i) {
    if (!(jt[i] > jt[i - 1])) jt[i] = std::nextafter(jt[i - 1], INFINITY);
  }
  const double new_fwd = tau + (path.t_fwd() - tau) * slow;
  if (!jt.empty() && jt.back() > new_fwd) jt.back() = new_fwd;
  return ParticlePath::from_segments(path.label(), path.t_back(), new_fwd, std::move(jt),
                                     std::vector<int>(path.values().begin(), path.values().end()));
}

ParticlePath activate_at(const ParticlePath& walk, double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ParameterError("activate_at: bad tau");
  const std::size_t i0 = walk.segment_index(0.0);
  std::vector<double> jt;
  std::vector<int> val{walk.values()[i0]};
  for (std::size_t i = i0; i < walk.jump_count(); ++i) {
    double t = tau + walk.jump_times()[i];
    if (!jt.empty() && !(t > jt.back())) t = std::nextafter(jt.back(), INFINITY);
    jt.push_back(t);
    val.push_back(walk.values()[i + 1]);
  }
  return ParticlePath::from_segments(walk.label(), walk.t_back(), tau + walk.t_fwd(),
                                     std::move(jt), std::move(val));
}

ParticlePath shift_path(const ParticlePath& path, int x, double t0, double clip_back,
                        double clip_fwd) {
  const double lo = std::max(path.t_back() - t0, clip_back);
  const double hi = std::min(path.t_fwd() - t0, clip_fwd);
  if (!(lo <= 0.0 && hi >= 0.0)) throw HorizonError("shift_path: shifted horizon misses 0");
  const auto times = path.jump_times();
  const auto vals = path.values();
  const std::size_t a = path.segment_index(lo + t0);
  std::size_t b = path.segment_index(hi + t0);
  std::vector<double> jt;
  std::vector<int> val;
  jt.reserve(b - a);
  val.reserve(b - a + 1);
  val.push_back(vals[a] - x);
  for (std::size_t i = a; i < b; ++i) {
    double s = times[i] - t0;
    if (!jt.empty() && !(s > jt.back())) s = std::nextafter(jt.back(), INFINITY);
    if (s > hi) break;
    jt.push_back(s);
    val.push_back(vals[i + 1] - x);
  }
  return ParticlePath::from_segments(path.label(), lo, hi, std::move(jt), std::move(val));
}

double mu_of(double alpha, double theta) {
  // 2(cosh θ - 1) = 4 sinh²(θ/2), which keeps full precision for small θ.
  const double s = std::sinh(0.5 * theta);
  return alpha * theta - 4.0 * s * s;
}

double mu_for_rate(double alpha, double theta, double rate) {
  const double s = std::sinh(0.5 * theta);
  return alpha * theta - rate * 2.0 * s * s;
}

BoundReport check_lemma2_bound(int x0, double alpha, double theta, double t, double rate,
                               long n, RandomStream& rng) {
  if (x0 > 0) throw ParameterError("check_lemma2_bound: x0 must be <= 0");
  if (t < 0.0) throw ParameterError("check_lemma2_bound: t must be >= 0");
  if (n < 1) throw ParameterError("check_lemma2_bound: n must be >= 1");
  if (!(rate > 0.0)) throw ParameterError("check_lemma2_bound: rate must be positive");
  const double mu = mu_for_rate(alpha, theta, rate);
  if (!(mu > 0.0)) throw ParameterError("check_lemma2_bound: mu must be positive");

  BoundReport rep;
  rep.n = n;
  rep.bound = std::exp(theta * x0 - mu * t);
  // Residual probability of a first crossing after H is at most
  // e^{θ x0} e^{-μ H}; choose H so that it is 1/(10 n).
  const double h = std::max(t, (std::log(10.0 * static_cast<double>(n)) + theta * x0) / mu);
  rep.horizon = h;
  rep.allowance = std::exp(theta * x0 - mu * h);

  long hits = 0;
  for (long i = 0; i < n; ++i) {
    int pos = x0;
    double next = rng.exponential(rate);
    while (next <= t) {
      pos += rng.sign();
      next += rng.exponential(rate);
    }
    // Between jumps the walk is constant while the line rises, so the
    // event can only start at t itself or at a later jump time.
    bool hit = pos >= alpha * t;
    while (!hit && next <= h) {
      pos += rng.sign();
      if (pos >= alpha * next) {
        hit = true;
      } else {
        next += rng.exponential(rate);
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

ProbabilityReport check_line_avoidance(const Configuration& w, double alpha, double theta,
                                       double rate, double t_fwd, long n, RandomStream& rng) {
  if (!w.sites().empty() && w.sites().rbegin()->first > 0) {
    throw ParameterError("check_line_avoidance: particles must lie at sites <= 0");
  }
  if (n < 1) throw ParameterError("check_line_avoidance: n must be >= 1");
  const double mu = mu_for_rate(alpha, theta, rate);
  if (!(mu > 0.0)) throw ParameterError("check_line_avoidance: mu must be positive");
  ProbabilityReport rep;
  rep.n = n;
  rep.truncation_bound = std::min(1.0, phi_theta(w, theta) * std::exp(-mu * t_fwd));
  long avoid = 0;
  for (long i = 0; i < n; ++i) {
    const std::uint64_t rep_seed = rng.next_u64();
    bool hit = false;
    for (const auto& [x, labels] : w.sites()) {
      for (const Label& u : labels) {
        RandomStream walk(derive_seed(rep_seed, std::bit_cast<std::uint64_t>(u.value),
                                      Stream::paths));
        int pos = x;
        for (double s = walk.exponential(rate); s <= t_fwd; s += walk.exponential(rate)) {
          pos += walk.sign();
          if (pos >= alpha * s) {
            hit = true;
            break;
          }
        }
        if (hit) break;
      }
      if (hit) break;
    }
    if (!hit) ++avoid;
  }
  const double nn = static_cast<double>(n);
  rep.estimate = static_cast<double>(avoid) / nn;
  rep.ci_halfwidth = std::sqrt(rep.estimate * (1.0 - rep.estimate) / nn);
  return rep;
}

std::string format_path(const ParticlePath& path) {
  std::string out = format_double(path.label().value) + " " + std::to_string(path.x0()) + " " +
                    format_double(path.t_back()) + " " + format_double(path.t_fwd()) + "\n";
  const auto jt = path.jump_times();
  const auto val = path.values();
  for (std::size_t i = 0; i < jt.size(); ++i) {
    const int step = jt[i] > 0.0 ? val[i + 1] - val[i] : val[i] - val[i + 1];
    out += format_double(jt[i]);
    out += '\t';
    out += step > 0 ? "1" : "-1";
    out += '\n';
  }
  return out;
}

std::vector<ParticlePath> parse_paths(std::string_view text) {
  struct Pending {
    Label label;
    int x0 = 0;
    double t_back = 0.0;
    double t_fwd = 0.0;
    std::vector<Jump> jumps;
  };
  std::vector<ParticlePath> out;
  std::optional<Pending> cur;
  auto flush = [&] {
    if (!cur) return;
    std::vector<Jump> bwd;
    std::vector<Jump> fwd;
    for (const auto& j : cur->jumps) (j.time > 0.0 ? fwd : bwd).push_back(j);
    std::reverse(bwd.begin(), bwd.end());
    out.push_back(ParticlePath::from_jumps(cur->label, cur->x0, cur->t_back, cur->t_fwd, bwd,
                                           fwd));
    cur.reset();
  };
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    if (line.find('\t') == std::string::npos) {
      flush();
      Pending p;
      if (!(ls >> p.label.value >> p.x0 >> p.t_back >> p.t_fwd)) {
        throw FormatError("path header expected at line " + std::to_string(lineno));
      }
      cur = std::move(p);
    } else {
      if (!cur) throw FormatError("jump line before any path header at line " +
                                  std::to_string(lineno));
      Jump j;
      if (!(ls >> j.time >> j.step) || (j.step != 1 && j.step != -1)) {
        throw FormatError("bad jump line " + std::to_string(lineno));
      }
      if (!cur->jumps.empty() && !(j.time > cur->jumps.back().time)) {
        throw FormatError("jump times must ascend at line " + std::to_string(lineno));
      }
      cur->jumps.push_back(j);
    }
  }
  flush();
  return out;
}

}  // namespace ksfront

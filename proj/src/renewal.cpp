#include "ksfront/renewal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ksfront/errors.hpp"

namespace ksfront {

void HorizonPolicy::validate(double alpha) const {
  if (!(h_back > 0.0) || !(h_fwd > 0.0)) throw ParameterError("h_back and h_fwd must be positive");
  if (!(tail_tol > 0.0)) throw ParameterError("tail_tol must be positive");
  if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
  if (h_fwd < 1.0 / alpha) {
    throw ParameterError("h_fwd must be at least 1/alpha to certify the sitting clauses");
  }
}

RenewalContext::RenewalContext(const ParticleSystem& psi, const FrontRun& run, double alpha)
    : psi_(&psi), run_(&run), alpha_(alpha) {
  if (run.infection_time.size() != psi.particles.size() ||
      run.trace.system_digest != psi.digest()) {
    throw ConsistencyError("front run was not built from this particle system");
  }
  const auto& jumps = run.trace.jumps;
  const std::size_t K = jumps.size();
  by_tau_.resize(psi.particles.size());
  std::iota(by_tau_.begin(), by_tau_.end(), std::size_t{0});
  std::stable_sort(by_tau_.begin(), by_tau_.end(), [&](std::size_t a, std::size_t b) {
    return run.infection_time[a] < run.infection_time[b];
  });
  red_count_.resize(K);
  infected_at_.resize(K);
  prefix_max_.resize(K);
  double best = run.trace.r0;
  auto tau_of = [&](std::size_t p) { return run.infection_time[p]; };
  for (std::size_t k = 0; k < K; ++k) {
    const double t = jumps[k].time;
    const auto first = std::partition_point(by_tau_.begin(), by_tau_.end(),
                                            [&](std::size_t p) { return tau_of(p) < t; });
    red_count_[k] = static_cast<std::size_t>(first - by_tau_.begin());
    for (auto it = first; it != by_tau_.end() && tau_of(*it) == t; ++it) {
      infected_at_[k].push_back(*it);
    }
    prefix_max_[k] = best;
    best = std::max(best, jumps[k].position - alpha * t);
    if (jumps[k].direction == Direction::up) upward_.push_back(k);
  }
}

std::span<const std::size_t> RenewalContext::red_at(std::size_t k) const {
  return {by_tau_.data(), red_count_[k]};
}

std::span<const std::size_t> RenewalContext::blue_at(std::size_t k) const {
  return {by_tau_.data() + red_count_[k], by_tau_.size() - red_count_[k]};
}

namespace {

void require_upward(const RenewalContext& ctx, std::size_t k) {
  const auto& jumps = ctx.front().jumps;
  if (k >= jumps.size() || jumps[k].direction != Direction::up) {
    throw ConsistencyError("predicate evaluated at a time that is not an upward front jump");
  }
}

// Number of jumps of `path` strictly before t.
std::size_t jumps_before(const ParticlePath& path, double t) {
  const auto jt = path.jump_times();
  return static_cast<std::size_t>(std::lower_bound(jt.begin(), jt.end(), t) - jt.begin());
}

// First time in (t, hi] at which a path that sits at or below
// r - 1 + alpha (s - t) at time t rises strictly above that line;
// kNever if it never does. `from` is the first jump time the check
// applies to (segments starting earlier are ignored).
double first_line_escape(const ParticlePath& path, double t, double from, double hi, int r,
                         double alpha) {
  const auto jt = path.jump_times();
  const auto val = path.values();
  std::size_t i = path.segment_index(from);
  const std::size_t end = path.segment_index(hi);
  for (; i < end; ++i) {
    const double a = jt[i];
    const double line = r - 1 + alpha * (a - t);
    const int w = val[i + 1];
    if (w > line) return a;
    // Each later jump adds at most one while the line keeps rising.
    if (w + static_cast<double>(end - i - 1) <= line) return kNever;
  }
  return kNever;
}

// First time s in (t, hi] with r_s < r_t + floor(alpha (s - t)); kNever if
// none. Floor-line step times t + m/alpha are generated from the integer m.
double first_floor_violation(const FrontTrace& front, std::size_t k, double hi, double alpha) {
  const double t = front.jumps[k].time;
  const int r = front.jumps[k].position;
  std::size_t j = k + 1;
  int m = 0;
  int rf = r;
  for (;;) {
    const double tf = j < front.jumps.size() ? front.jumps[j].time : kNever;
    const double ts = t + (m + 1) / alpha;
    const double next = std::min(tf, ts);
    if (!(next <= hi)) return kNever;
    if (tf <= next) rf = front.jumps[j++].position;
    if (ts <= next) ++m;
    if (rf < r + m) return next;
  }
}

// First jump of `path` in (t, hi], or kNever.
double first_jump_after(const ParticlePath& path, double t, double hi) {
  const auto jt = path.jump_times();
  const std::size_t i = path.segment_index(t);
  if (i < jt.size() && jt[i] <= hi) return jt[i];
  return kNever;
}

struct BackwardScan {
  bool holds = true;
  bool truncated = false;
  std::optional<std::size_t> witness;
  int witness_pos = 0;
};

// Blue paths against r_t - alpha (t - s) on [t - h_back, t). With
// `find_witness` every violator is examined and the lexicographically
// smallest (W_t, label) is kept; otherwise stops at the first violator.
BackwardScan scan_backward(const RenewalContext& ctx, std::size_t k, const HorizonPolicy& hp,
                           bool find_witness) {
  const auto& jump = ctx.front().jumps[k];
  const double t = jump.time;
  const int r = jump.position;
  const double alpha = ctx.alpha();
  BackwardScan out;
  double lo = t - hp.h_back;
  if (lo < ctx.system().t_back) {
    out.truncated = true;
    lo = ctx.system().t_back;
  }
  for (std::size_t p : ctx.blue_at(k)) {
    const auto& path = ctx.system().particles[p];
    const auto jt = path.jump_times();
    const auto val = path.values();
    const std::size_t a = path.segment_index(lo);
    const std::size_t b = jumps_before(path, t);
    // Segments a..b cover [lo, t); their minimum is at least val[b] - (b - a).
    if (val[b] - static_cast<long>(b - a) >= r) continue;
    bool bad = false;
    for (std::size_t i = b + 1; i-- > a;) {
      // Segment i ends at jt[i] (or at t for the last one); the line's
      // supremum over the segment is its value at that right end.
      const double right = i == b ? t : jt[i];
      if (val[i] < r - alpha * (t - right)) {
        bad = true;
        break;
      }
    }
    if (!bad) continue;
    out.holds = false;
    if (!find_witness) return out;
    const int wt = path.position_at(t);
    const auto& best = out.witness;
    if (!best || wt < out.witness_pos ||
        (wt == out.witness_pos &&
         path.label() < ctx.system().particles[*best].label())) {
      out.witness = p;
      out.witness_pos = wt;
    }
  }
  return out;
}

}  // namespace

bool is_backward_sub_alpha(const RenewalContext& ctx, std::size_t k) {
  require_upward(ctx, k);
  const auto& jump = ctx.front().jumps[k];
  const double lead = jump.position - ctx.alpha() * jump.time;
  return lead > 0.0 && ctx.prefix_line_max(k) < lead;
}

bool is_backward_sub_alpha(const FrontTrace& front, double t, double alpha) {
  const std::size_t k = front.jump_index_at(t);
  if (front.jumps[k].direction != Direction::up) {
    throw ConsistencyError("backward sub-alpha test needs an upward jump time");
  }
  const double lead = front.jumps[k].position - alpha * t;
  if (!(lead > 0.0)) return false;
  if (!(front.r0 < lead)) return false;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(front.jumps[i].position - alpha * front.jumps[i].time < lead)) return false;
  }
  return true;
}

PredicateResult is_backward_super_alpha(const RenewalContext& ctx, std::size_t k,
                                        const HorizonPolicy& hp) {
  require_upward(ctx, k);
  const auto scan = scan_backward(ctx, k, hp, false);
  PredicateResult res;
  res.holds = scan.holds;
  res.truncated = scan.truncated;
  return res;
}

namespace {

struct ForwardWindow {
  double t;
  int r;
  double hi;
  bool truncated;
};

ForwardWindow forward_window(const RenewalContext& ctx, std::size_t k, const HorizonPolicy& hp) {
  hp.validate(ctx.alpha());
  const auto& jump = ctx.front().jumps[k];
  ForwardWindow w{jump.time, jump.position, jump.time + hp.h_fwd, false};
  if (w.hi > ctx.front().t_end) {
    w.truncated = true;
    w.hi = ctx.front().t_end;
  }
  return w;
}

// Mover clause: sits at r_t on (t, t + 1/alpha], then stays below the line.
bool mover_ok(const RenewalContext& ctx, std::size_t k, const ForwardWindow& w) {
  const auto& mover = ctx.system().particles[ctx.front().jumps[k].mover_index];
  const double sit_end = w.t + 1.0 / ctx.alpha();
  if (first_jump_after(mover, w.t, std::min(sit_end, w.hi)) != kNever) return false;
  if (sit_end >= w.hi) return true;
  return first_line_escape(mover, w.t, sit_end, w.hi, w.r, ctx.alpha()) == kNever;
}

bool blue_sitter_exists(const RenewalContext& ctx, std::size_t k, const ForwardWindow& w) {
  const double sit_end = std::min(w.t + 1.0 / ctx.alpha(), w.hi);
  for (std::size_t p : ctx.infected_at(k)) {
    if (first_jump_after(ctx.system().particles[p], w.t, sit_end) == kNever) return true;
  }
  return false;
}

// Earliest escape above the forward line among the red particles other
// than the mover, searching only before `limit`.
std::pair<double, std::optional<std::size_t>> first_red_escape(const RenewalContext& ctx,
                                                               std::size_t k,
                                                               const ForwardWindow& w,
                                                               double limit) {
  const std::size_t mover = ctx.front().jumps[k].mover_index;
  double best = kNever;
  std::optional<std::size_t> who;
  const double hi = std::min(w.hi, limit);
  for (std::size_t p : ctx.red_at(k)) {
    if (p == mover) continue;
    const auto& path = ctx.system().particles[p];
    const int wt = path.position_at(w.t);
    if (wt > w.r - 1) continue;  // the clause covers reds at or below r_t - 1
    const double e = first_line_escape(path, w.t, w.t, std::min(hi, best), w.r, ctx.alpha());
    if (e < best) {
      best = e;
      who = p;
    }
  }
  return {best, who};
}

}  // namespace

PredicateResult is_forward_sub_alpha(const RenewalContext& ctx, std::size_t k,
                                     const HorizonPolicy& hp) {
  require_upward(ctx, k);
  const auto w = forward_window(ctx, k, hp);
  PredicateResult res;
  res.truncated = w.truncated;
  if (!mover_ok(ctx, k, w)) {
    res.offender = ctx.front().jumps[k].mover;
    return res;
  }
  const auto [esc, who] = first_red_escape(ctx, k, w, kNever);
  if (esc != kNever) {
    res.offender = ctx.system().particles[*who].label();
    return res;
  }
  res.holds = true;
  return res;
}

PredicateResult is_forward_super_alpha(const RenewalContext& ctx, std::size_t k,
                                       const HorizonPolicy& hp) {
  require_upward(ctx, k);
  const auto w = forward_window(ctx, k, hp);
  PredicateResult res;
  res.truncated = w.truncated;
  res.holds = blue_sitter_exists(ctx, k, w) &&
              first_floor_violation(ctx.front(), k, w.hi, ctx.alpha()) == kNever;
  return res;
}

std::vector<double> crossing_times(const FrontTrace& front, double s, double alpha, double lo,
                                   double hi) {
  const int rs = front.position_at(s);
  std::vector<double> out;
  // M is the supremum over [s, current time) of r_v - r_s - alpha (v - s);
  // it is attained at s or at jump times, and equals 0 at s.
  double sup = 0.0;
  for (std::size_t j = front.jumps_until(s); j < front.jumps.size(); ++j) {
    const auto& jump = front.jumps[j];
    if (!(jump.time < hi)) break;
    const double g = (jump.position - rs) - alpha * (jump.time - s);
    if (jump.direction == Direction::up) {
      const double next_level = std::floor(sup) + 1.0;
      if (g >= next_level && jump.time > lo) out.push_back(jump.time);
    }
    sup = std::max(sup, g);
  }
  return out;
}

double exp_norm_below_front(const RenewalContext& ctx, std::size_t k, double theta) {
  require_upward(ctx, k);
  if (!(theta > 0.0)) throw ParameterError("exp_norm_below_front: theta must be positive");
  const auto& jump = ctx.front().jumps[k];
  double sum = 0.0;
  for (std::size_t p : ctx.red_at(k)) {
    if (p == jump.mover_index) continue;
    const int w = ctx.system().particles[p].position_at(jump.time);
    sum += std::exp(-theta * (jump.position - w));
  }
  return sum;
}

namespace {

// First time any of the five failure conditions fires after the upward
// jump k, within the forward window; ties resolve to the lowest condition.
std::pair<double, int> first_failure(const RenewalContext& ctx, std::size_t k,
                                     const ForwardWindow& w) {
  const double alpha = ctx.alpha();
  const double sit_end = w.t + 1.0 / alpha;
  const auto& mover = ctx.system().particles[ctx.front().jumps[k].mover_index];
  std::array<double, 5> when{kNever, kNever, kNever, kNever, kNever};

  when[0] = first_floor_violation(ctx.front(), k, w.hi, alpha);

  // (2): every blue sitter has left by t, with t <= S + 1/alpha.
  double last_leave = 0.0;
  for (std::size_t p : ctx.infected_at(k)) {
    const double f = first_jump_after(ctx.system().particles[p], w.t, w.hi);
    last_leave = std::max(last_leave, f);
  }
  if (last_leave <= sit_end && last_leave <= w.hi) when[1] = last_leave;

  double best = *std::min_element(when.begin(), when.end());
  when[2] = first_red_escape(ctx, k, w, best).first;

  const double mj = first_jump_after(mover, w.t, std::min(sit_end, w.hi));
  if (mj != kNever) {
    when[3] = mj;
  } else if (sit_end < w.hi) {
    when[4] = first_line_escape(mover, w.t, sit_end, w.hi, w.r, alpha);
  }
  best = kNever;
  int cond = 0;
  for (int i = 0; i < 5; ++i) {
    if (when[i] < best) {
      best = when[i];
      cond = i + 1;
    }
  }
  return {best, cond};
}

}  // namespace

AttemptSequence run_attempt_sequence(const RenewalContext& ctx, const AlphaParams& ap,
                                     const HorizonPolicy& hp) {
  ap.validate();
  hp.validate(ap.alpha);
  if (std::abs(ap.alpha - ctx.alpha()) > 0.0) {
    throw ParameterError("run_attempt_sequence: alpha differs from the context's alpha");
  }
  AttemptSequence seq;
  const auto& jumps = ctx.front().jumps;
  const auto& up = ctx.upward();
  const auto C = static_cast<std::size_t>(ap.cap_c);
  auto enough_blues = [&](std::size_t k) { return ctx.infected_at(k).size() >= C; };

  double d_prev = 0.0;
  std::optional<std::size_t> upsilon;
  std::size_t pos = 0;  // position in `up`
  for (int n = 1;; ++n) {
    // S'_n
    while (pos < up.size()) {
      const std::size_t k = up[pos];
      if (jumps[k].time > d_prev && is_backward_sub_alpha(ctx, k) && enough_blues(k) &&
          (!upsilon || ctx.is_red(*upsilon, jumps[k].time))) {
        break;
      }
      ++pos;
    }
    if (pos >= up.size()) {
      seq.censored = true;
      break;
    }
    const std::size_t k1 = up[pos];
    const double s_prime = jumps[k1].time;
    const auto cross = crossing_times(ctx.front(), s_prime, ap.alpha, s_prime, kNever);
    // S_n
    ++pos;
    while (pos < up.size()) {
      const std::size_t k = up[pos];
      const auto n_cross = static_cast<long>(
          std::lower_bound(cross.begin(), cross.end(), jumps[k].time) - cross.begin());
      if (n_cross >= ap.cap_l && is_backward_sub_alpha(ctx, k) && enough_blues(k)) break;
      ++pos;
    }
    if (pos >= up.size()) {
      seq.censored = true;
      break;
    }
    const std::size_t k = up[pos];
    AttemptRecord rec;
    rec.n = n;
    rec.s_prime = s_prime;
    rec.s = jumps[k].time;
    rec.crossings = static_cast<long>(
        std::lower_bound(cross.begin(), cross.end(), rec.s) - cross.begin());
    rec.m_n = exp_norm_below_front(ctx, k, ap.theta);

    const auto back = scan_backward(ctx, k, hp, true);
    if (!back.holds) {
      rec.d = rec.s;
      rec.upsilon = ctx.system().particles[*back.witness].label();
      rec.truncated = back.truncated;
      upsilon = back.witness;
      d_prev = rec.s;
      seq.attempts.push_back(rec);
      continue;
    }
    upsilon.reset();
    const auto w = forward_window(ctx, k, hp);
    const auto [d, cond] = first_failure(ctx, k, w);
    rec.truncated = back.truncated || (d == kNever && w.truncated);
    if (d == kNever) {
      seq.attempts.push_back(rec);
      break;
    }
    rec.d = d;
    rec.failure_condition = cond;
    d_prev = d;
    seq.attempts.push_back(rec);
  }
  return seq;
}

std::vector<RenewalRecord> find_separation_times(const RenewalContext& ctx,
                                                 const HorizonPolicy& hp) {
  hp.validate(ctx.alpha());
  std::vector<RenewalRecord> out;
  const auto& jumps = ctx.front().jumps;
  for (std::size_t k : ctx.upward()) {
    if (!is_backward_sub_alpha(ctx, k)) continue;
    if (ctx.infected_at(k).empty()) continue;
    const auto w = forward_window(ctx, k, hp);
    if (!mover_ok(ctx, k, w)) continue;
    if (!blue_sitter_exists(ctx, k, w)) continue;
    if (first_floor_violation(ctx.front(), k, w.hi, ctx.alpha()) != kNever) continue;
    if (first_red_escape(ctx, k, w, kNever).first != kNever) continue;
    const auto back = scan_backward(ctx, k, hp, false);
    if (!back.holds) continue;
    RenewalRecord rec;
    rec.kappa = jumps[k].time;
    rec.r_kappa = jumps[k].position;
    rec.flags.backward_truncated = back.truncated;
    rec.flags.forward_truncated = w.truncated;
    out.push_back(rec);
  }
  return out;
}

bool verify_record_identity(const std::vector<RenewalRecord>& renewals, const FrontTrace& front) {
  for (const auto& rec : renewals) {
    if (!(rec.kappa >= 0.0 && rec.kappa <= front.t_end)) return false;
    if (rec.r_kappa != front.running_max_at(rec.kappa)) return false;
    if (rec.r_kappa != front.position_at(rec.kappa)) return false;
  }
  return true;
}

namespace {

// Copy of the base path of a particle blue at kappa, translated by
// (x, t0) and restricted to [clip_back, clip_fwd] in the new clock.
ParticlePath shifted_base(const ParticlePath& path, const VariantRates& rates, int x, double t0,
                          double clip_back, double clip_fwd) {
  if (rates.variant != Variant::frog) return shift_path(path, x, t0, clip_back, clip_fwd);
  // Frog walks run on their own activation clock; only space moves.
  const auto jt = path.jump_times();
  const auto val = path.values();
  const std::size_t end = path.segment_index(std::min(clip_fwd, path.t_fwd()));
  std::vector<double> times(jt.begin(), jt.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<int> values;
  values.reserve(end + 1);
  for (std::size_t i = 0; i <= end; ++i) values.push_back(val[i] - x);
  return ParticlePath::from_segments(path.label(), path.t_back(),
                                     std::min(clip_fwd, path.t_fwd()), std::move(times),
                                     std::move(values));
}

bool times_match(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a));
}

}  // namespace

ShiftCheck check_shift_identity(const ParticleSystem& base, const RenewalContext& ctx,
                                const std::vector<RenewalRecord>& renewals, std::size_t index,
                                const HorizonPolicy& hp, const VariantRates& rates) {
  if (index >= renewals.size()) throw ParameterError("check_shift_identity: bad record index");
  if (base.particles.size() != ctx.system().particles.size()) {
    throw ConsistencyError("base system does not match the renewal context");
  }
  const auto& rec = renewals[index];
  const auto& front = ctx.front();
  const std::size_t k = front.jump_index_at(rec.kappa);
  const bool has_next = index + 1 < renewals.size();
  const double gap = has_next ? renewals[index + 1].kappa - rec.kappa : 0.0;
  const double span = std::min(gap + hp.h_fwd, front.t_end - rec.kappa);

  const double slow = rates.variant == Variant::remanent ? rates.d_b / rates.d_r : 1.0;
  // Base-clock time needed to cover `span` of real time.
  const double base_span = rates.variant == Variant::remanent ? span / slow : span;

  ParticleSystem shifted;
  shifted.window = {base.window.lo - rec.r_kappa, base.window.hi - rec.r_kappa};
  shifted.t_back = std::max(base.t_back - rec.kappa, -hp.h_back);
  shifted.t_fwd = rates.variant == Variant::frog ? std::min(span, base.t_fwd)
                                                 : std::min(base_span, base.t_fwd - rec.kappa);
  for (std::size_t p : ctx.blue_at(k)) {
    shifted.particles.push_back(shifted_base(base.particles[p], rates, rec.r_kappa, rec.kappa,
                                             shifted.t_back, shifted.t_fwd));
  }

  FrontRun rebuilt;
  if (rates.variant == Variant::single_rate) {
    rebuilt = build_front_single_rate(shifted);
  } else {
    rebuilt = build_front_remanent(shifted, rates.d_r, rates.d_b);
  }
  ShiftCheck out;
  const double limit = std::min(span, rebuilt.trace.t_end);
  // Compare jump lists on [0, limit].
  std::vector<FrontJump> orig;
  for (std::size_t j = k + 1; j < front.jumps.size(); ++j) {
    const double s = front.jumps[j].time - rec.kappa;
    if (s > limit) break;
    orig.push_back(front.jumps[j]);
  }
  std::vector<FrontJump> again;
  for (const auto& j : rebuilt.trace.jumps) {
    if (j.time > limit) break;
    again.push_back(j);
  }
  out.front_match = rebuilt.trace.r0 == 0;
  const std::size_t m = std::min(orig.size(), again.size());
  for (std::size_t i = 0; i < m && out.front_match; ++i) {
    ++out.n_events;
    const double s = orig[i].time - rec.kappa;
    if (!times_match(s, again[i].time) || orig[i].position - rec.r_kappa != again[i].position ||
        orig[i].direction != again[i].direction) {
      out.front_match = false;
      out.first_mismatch = std::min(s, again[i].time);
    }
  }
  if (out.front_match && orig.size() != again.size()) {
    // A boundary jump within rounding of the limit is not a mismatch.
    const auto& extra = orig.size() > again.size() ? orig[m] : again[m];
    const double s = orig.size() > again.size() ? extra.time - rec.kappa : extra.time;
    if (!times_match(s, limit)) {
      out.front_match = false;
      out.first_mismatch = s;
    }
  }

  if (!has_next) {
    out.next_kappa_match = true;
    return out;
  }
  ParticleSystem eff = rates.variant == Variant::single_rate
                           ? shifted
                           : effective_system(shifted, rebuilt, rates.d_r, rates.d_b);
  RenewalContext sctx(eff, rebuilt, ctx.alpha());
  const auto found = find_separation_times(sctx, hp);
  const auto& next = renewals[index + 1];
  out.next_kappa_match = !found.empty() && times_match(found.front().kappa, gap) &&
                         found.front().r_kappa == next.r_kappa - rec.r_kappa;
  return out;
}

std::string format_attempts_csv(const std::vector<AttemptRecord>& attempts) {
  std::string out = "n,s_prime,s,d,failure_condition,upsilon,m_n,crossings\n";
  for (const auto& a : attempts) {
    out += std::to_string(a.n) + ',' + format_double(a.s_prime) + ',' + format_double(a.s) + ',';
    out += a.d == kNever ? std::string("inf") : format_double(a.d);
    out += ',';
    if (a.failure_condition) out += std::to_string(*a.failure_condition);
    out += ',';
    if (a.upsilon) out += format_double(a.upsilon->value);
    out += ',' + format_double(a.m_n) + ',' + std::to_string(a.crossings) + '\n';
  }
  return out;
}

std::string format_renewals_csv(const std::vector<RenewalRecord>& renewals) {
  std::string out = "kappa,r_kappa,flags\n";
  for (const auto& r : renewals) {
    out += format_double(r.kappa) + ',' + std::to_string(r.r_kappa) + ',';
    std::string flags;
    if (r.flags.backward_truncated) flags += "backward_truncated";
    if (r.flags.forward_truncated) {
      if (!flags.empty()) flags += '|';
      flags += "forward_truncated";
    }
    out += flags + '\n';
  }
  return out;
}

std::vector<RenewalRecord> parse_renewals_csv(std::string_view text) {
  std::vector<RenewalRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      if (line != "kappa,r_kappa,flags") throw FormatError("unexpected renewal CSV header");
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw FormatError("renewal CSV row needs three fields");
    }
    RenewalRecord rec;
    try {
      rec.kappa = std::stod(line.substr(0, c1));
      rec.r_kappa = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
    } catch (const std::exception&) {
      throw FormatError("bad renewal CSV row: " + line);
    }
    const std::string flags = line.substr(c2 + 1);
    rec.flags.backward_truncated = flags.find("backward_truncated") != std::string::npos;
    rec.flags.forward_truncated = flags.find("forward_truncated") != std::string::npos;
    out.push_back(rec);
  }
  return out;
}

}  // namespace ksfront

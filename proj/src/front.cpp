#include "ksfront/front.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <queue>
#include <unordered_map>

#include "json.hpp"

#include "ksfront/errors.hpp"

namespace ksfront {

void ParticleSystem::validate() const {
  if (!(t_back <= 0.0 && t_fwd >= 0.0)) throw ParameterError("system horizon must contain 0");
  std::vector<double> labels;
  labels.reserve(particles.size());
  for (const auto& p : particles) {
    if (p.t_back() > t_back || p.t_fwd() < t_fwd) {
      throw ParameterError("path " + format_double(p.label().value) +
                           " does not cover the system horizon");
    }
    labels.push_back(p.label().value);
  }
  std::sort(labels.begin(), labels.end());
  if (std::adjacent_find(labels.begin(), labels.end()) != labels.end()) {
    throw ParameterError("system labels must be pairwise distinct");
  }
}

std::uint64_t ParticleSystem::digest() const {
  std::vector<std::pair<std::uint64_t, int>> keys;
  keys.reserve(particles.size());
  for (const auto& p : particles) {
    keys.emplace_back(std::bit_cast<std::uint64_t>(p.label().value), p.x0());
  }
  std::sort(keys.begin(), keys.end());
  std::uint64_t h = mix64(keys.size());
  for (const auto& [u, x] : keys) {
    h = mix64(h ^ u);
    h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(x)));
  }
  return h;
}

ParticleSystem sample_system(const Configuration& w, double rate, double t_back, double t_fwd,
                             std::uint64_t seed) {
  ParticleSystem psi;
  psi.window = w.window();
  psi.t_back = t_back;
  psi.t_fwd = t_fwd;
  psi.particles.reserve(w.total_count());
  std::uint64_t i = 0;
  for (const auto& [x, labels] : w.sites()) {
    for (const Label& u : labels) {
      RandomStream rng(derive_seed(seed, i++, Stream::paths));
      psi.particles.push_back(simulate_two_sided_walk(u, x, rate, t_back, t_fwd, rng));
    }
  }
  return psi;
}

int FrontTrace::position_at(double t) const {
  if (!(t >= 0.0 && t <= t_end)) {
    throw HorizonError("front queried at " + format_double(t) + " outside [0, " +
                       format_double(t_end) + "]");
  }
  const std::size_t k = jumps_until(t);
  return k == 0 ? r0 : jumps[k - 1].position;
}

std::size_t FrontTrace::jumps_until(double t) const {
  return static_cast<std::size_t>(
      std::upper_bound(jumps.begin(), jumps.end(), t,
                       [](double v, const FrontJump& j) { return v < j.time; }) -
      jumps.begin());
}

std::size_t FrontTrace::jump_index_at(double t) const {
  const std::size_t k = jumps_until(t);
  if (k == 0 || jumps[k - 1].time != t) {
    throw ConsistencyError("time " + format_double(t) + " is not a front jump time");
  }
  return k - 1;
}

int FrontTrace::running_max_at(double t) const {
  int m = r0;
  const std::size_t k = jumps_until(t);
  for (std::size_t i = 0; i < k; ++i) m = std::max(m, jumps[i].position);
  return m;
}

namespace {

// Pending jump of one particle in the event queue.
struct Event {
  double time;
  double label;
  std::uint32_t particle;
  std::uint32_t index;       // index into the particle's jump list
  std::uint32_t generation;  // stale entries are skipped
};

struct EventLater {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.label > b.label;
  }
};

using EventQueue = std::priority_queue<Event, std::vector<Event>, EventLater>;

// Per-site storage over the range of sites visited after time 0.
template <class T>
class SiteArray {
 public:
  SiteArray(int lo, int hi) : lo_(lo), data_(static_cast<std::size_t>(hi - lo + 1)) {}
  T& operator[](int x) { return data_[static_cast<std::size_t>(x - lo_)]; }

 private:
  int lo_;
  std::vector<T> data_;
};

std::pair<int, int> site_range(const ParticleSystem& psi, int extra_lo, int extra_hi) {
  int lo = std::min(extra_lo, extra_hi);
  int hi = std::max(extra_lo, extra_hi);
  for (const auto& p : psi.particles) {
    const auto vals = p.values();
    for (std::size_t i = p.segment_index(0.0); i < vals.size(); ++i) {
      lo = std::min(lo, vals[i]);
      hi = std::max(hi, vals[i]);
    }
  }
  return {lo - 1, hi + 1};
}

void remove_from(std::vector<std::uint32_t>& v, std::uint32_t p) {
  auto it = std::find(v.begin(), v.end(), p);
  if (it == v.end()) throw ConsistencyError("blue particle missing from its site list");
  *it = v.back();
  v.pop_back();
}

void note_censoring(FrontTrace& tr, const IntInterval& window, int margin, int r, double t) {
  if (!tr.censored && !window.empty() && r >= window.hi - margin) {
    tr.censored = true;
    tr.censor_time = t;
  }
}

FrontRun build_single(const ParticleSystem& psi, bool modified, const FrontOptions& opt) {
  psi.validate();
  const std::size_t n = psi.particles.size();
  int r = 0;
  if (!modified) {
    bool any = false;
    for (const auto& p : psi.particles) {
      const int x = p.x0();
      if (x <= 0 && (!any || x > r)) {
        r = x;
        any = true;
      }
    }
    if (!any) throw ParameterError("no particle at a site <= 0: the front would start at -inf");
  }
  FrontRun run;
  run.trace.r0 = r;
  run.trace.t_end = psi.t_fwd;
  run.trace.system_digest = psi.digest();
  run.infection_time.assign(n, kNever);

  const auto [lo, hi] = site_range(psi, r, r);
  SiteArray<int> count(lo, hi);
  SiteArray<std::vector<std::uint32_t>> blue_at(lo, hi);
  EventQueue queue;
  for (std::uint32_t p = 0; p < n; ++p) {
    const auto& path = psi.particles[p];
    const int x = path.x0();
    ++count[x];
    if (x <= r) {
      run.infection_time[p] = 0.0;
    } else {
      blue_at[x].push_back(p);
    }
    const auto i = static_cast<std::uint32_t>(path.segment_index(0.0));
    if (i < path.jump_count()) queue.push({path.jump_times()[i], path.label().value, p, i, 0});
  }
  note_censoring(run.trace, psi.window, opt.edge_margin, r, 0.0);

  while (!queue.empty()) {
    const Event e = queue.top();
    queue.pop();
    const auto& path = psi.particles[e.particle];
    const double t = e.time;
    const int x = path.values()[e.index];
    const int y = path.values()[e.index + 1];
    const bool blue = run.infection_time[e.particle] == kNever;
    std::optional<Direction> moved;
    if (x == r) {
      if (y == r + 1) {
        moved = Direction::up;
      } else if (count[r] == 1 && !(modified && r == 0)) {
        moved = Direction::down;
      }
    }
    --count[x];
    ++count[y];
    if (moved) {
      r += *moved == Direction::up ? 1 : -1;
      run.trace.jumps.push_back({t, r, *moved, path.label(), e.particle});
      note_censoring(run.trace, psi.window, opt.edge_margin, r, t);
    }
    if (blue) {
      remove_from(blue_at[x], e.particle);
      if (y <= r) {
        run.infection_time[e.particle] = t;
      } else {
        blue_at[y].push_back(e.particle);
      }
    }
    if (moved == Direction::up) {
      for (std::uint32_t q : blue_at[r]) run.infection_time[q] = t;
      blue_at[r].clear();
    }
    if (e.index + 1 < path.jump_count()) {
      queue.push({path.jump_times()[e.index + 1], e.label, e.particle, e.index + 1, 0});
    }
  }
  return run;
}

}  // namespace

FrontRun build_front_single_rate(const ParticleSystem& psi, const FrontOptions& opt) {
  return build_single(psi, false, opt);
}

FrontRun build_front_modified(const ParticleSystem& psi, const FrontOptions& opt) {
  return build_single(psi, true, opt);
}

FrontRun build_front_remanent(const ParticleSystem& psi, double d_r, double d_b,
                              const FrontOptions& opt) {
  if (!(d_r > 0.0) || d_b < 0.0 || d_r < d_b) {
    throw ParameterError("remanent front needs d_r >= d_b >= 0 and d_r > 0");
  }
  psi.validate();
  const bool frog = d_b == 0.0;
  const double slow = frog ? 0.0 : d_b / d_r;
  const double horizon = frog ? psi.t_fwd : psi.t_fwd * slow;
  const std::size_t n = psi.particles.size();

  FrontRun run;
  run.trace.r0 = 0;
  run.trace.t_end = horizon;
  run.trace.system_digest = psi.digest();
  run.infection_time.assign(n, kNever);
  int r = 0;

  const auto [lo, hi] = site_range(psi, 0, 0);
  SiteArray<std::vector<std::uint32_t>> blue_at(lo, hi);
  std::vector<std::uint32_t> generation(n, 0);
  EventQueue queue;

  // Real time of the jump stored at `index`, given the particle's state.
  auto real_time = [&](std::uint32_t p, std::uint32_t index) {
    const double b = psi.particles[p].jump_times()[index];
    const double tau = run.infection_time[p];
    if (tau == kNever) return b;
    if (frog) return tau + b;
    // Jumps at base times <= tau were already performed on the blue clock.
    return tau + (b - tau) * slow;
  };
  auto schedule = [&](std::uint32_t p, std::uint32_t index) {
    const auto& path = psi.particles[p];
    if (index >= path.jump_count()) return;
    if (frog && run.infection_time[p] == kNever) return;
    const double t = real_time(p, index);
    if (t > horizon) return;
    queue.push({t, path.label().value, p, index, generation[p]});
  };
  std::vector<std::uint32_t> next_index(n);
  auto infect = [&](std::uint32_t p, double t) {
    run.infection_time[p] = t;
    ++generation[p];
    schedule(p, next_index[p]);
  };

  for (std::uint32_t p = 0; p < n; ++p) {
    const auto& path = psi.particles[p];
    const int x = path.x0();
    next_index[p] = static_cast<std::uint32_t>(path.segment_index(0.0));
    if (x <= 0) {
      run.infection_time[p] = 0.0;
    } else {
      blue_at[x].push_back(p);
    }
    schedule(p, next_index[p]);
  }
  note_censoring(run.trace, psi.window, opt.edge_margin, r, 0.0);

  while (!queue.empty()) {
    const Event e = queue.top();
    queue.pop();
    if (e.generation != generation[e.particle]) continue;
    const auto& path = psi.particles[e.particle];
    const double t = e.time;
    // Frog walks are read on the activation clock, so positions come from
    // the forward list starting at the x0 segment.
    const int x = path.values()[e.index];
    const int y = path.values()[e.index + 1];
    next_index[e.particle] = e.index + 1;
    if (run.infection_time[e.particle] != kNever) {
      if (x == r && y == r + 1) {
        ++r;
        run.trace.jumps.push_back({t, r, Direction::up, path.label(), e.particle});
        note_censoring(run.trace, psi.window, opt.edge_margin, r, t);
        for (std::uint32_t q : blue_at[r]) infect(q, t);
        blue_at[r].clear();
      }
      schedule(e.particle, e.index + 1);
    } else {
      remove_from(blue_at[x], e.particle);
      if (y <= r) {
        infect(e.particle, t);
      } else {
        blue_at[y].push_back(e.particle);
        schedule(e.particle, e.index + 1);
      }
    }
  }
  return run;
}

ParticleSystem effective_system(const ParticleSystem& psi, const FrontRun& run, double d_r,
                                double d_b) {
  if (run.infection_time.size() != psi.particles.size()) {
    throw ConsistencyError("front run does not match the particle system");
  }
  ParticleSystem out;
  out.window = psi.window;
  out.t_back = psi.t_back;
  out.t_fwd = run.trace.t_end;
  out.particles.reserve(psi.particles.size());
  for (std::size_t p = 0; p < psi.particles.size(); ++p) {
    const auto& path = psi.particles[p];
    const double tau = run.infection_time[p];
    if (d_b == 0.0) {
      if (tau == kNever) {
        out.particles.push_back(ParticlePath::from_segments(path.label(), path.t_back(),
                                                            path.t_fwd(), {}, {path.x0()}));
      } else {
        out.particles.push_back(activate_at(path, tau));
      }
    } else if (tau == kNever || d_r == d_b) {
      out.particles.push_back(path);
    } else {
      out.particles.push_back(apply_time_change(path, tau, d_r, d_b));
    }
  }
  return out;
}

double infection_time_of(const ParticlePath& path, const FrontTrace& front) {
  const auto jt = path.jump_times();
  const auto val = path.values();
  std::size_t i = path.segment_index(0.0);
  std::size_t k = 0;
  int w = val[i];
  int r = front.r0;
  if (w <= r) return 0.0;
  for (;;) {
    double t = kNever;
    if (i < jt.size()) t = jt[i];
    if (k < front.jumps.size()) t = std::min(t, front.jumps[k].time);
    if (!(t <= front.t_end)) return kNever;
    while (i < jt.size() && jt[i] == t) w = val[++i];
    while (k < front.jumps.size() && front.jumps[k].time == t) r = front.jumps[k++].position;
    if (w <= r) return t;
  }
}

SymmetrizeResult symmetrize(const ParticleSystem& psi) {
  SymmetrizeResult out;
  out.system.window = psi.window;
  out.system.t_back = psi.t_back;
  out.system.t_fwd = psi.t_fwd;
  out.system.particles.reserve(psi.particles.size());
  for (const auto& path : psi.particles) {
    const auto jt = path.jump_times();
    const auto val = path.values();
    const std::size_t i0 = path.segment_index(0.0);
    if (val[i0] >= 0) {
      out.system.particles.push_back(path);
      continue;
    }
    // Segments [0, stop) are negated: all of them before the first visit
    // to 0 at a positive time, every segment if there is none.
    std::size_t stop = val.size();
    for (std::size_t i = i0; i < jt.size(); ++i) {
      if (val[i + 1] == 0) {
        stop = i + 1;
        break;
      }
    }
    if (stop == val.size()) out.unresolved.push_back(path.label());
    std::vector<int> nv(val.begin(), val.end());
    for (std::size_t i = 0; i < stop; ++i) nv[i] = -nv[i];
    out.system.particles.push_back(ParticlePath::from_segments(
        path.label(), path.t_back(), path.t_fwd(),
        std::vector<double>(jt.begin(), jt.end()), std::move(nv)));
  }
  return out;
}

RedBlueSnapshot red_blue_at(const ParticleSystem& psi, const FrontTrace& front, double t) {
  if (front.system_digest != psi.digest()) {
    throw ConsistencyError("front trace was not built from this particle system");
  }
  if (!(t >= 0.0 && t <= front.t_end)) throw HorizonError("red_blue_at: t outside the trace");
  RedBlueSnapshot snap;
  snap.t = t;
  for (const auto& p : psi.particles) {
    const bool red = t == 0.0 ? p.x0() < 0 : infection_time_of(p, front) < t;
    (red ? snap.red_labels : snap.blue_labels).push_back(p.label());
  }
  std::sort(snap.red_labels.begin(), snap.red_labels.end());
  std::sort(snap.blue_labels.begin(), snap.blue_labels.end());
  return snap;
}

namespace {

template <class Bad>
CouplingVerdict compare_on_grid(const FrontTrace& a, const FrontTrace& b, Bad bad) {
  CouplingVerdict v;
  const double end = std::min(a.t_end, b.t_end);
  std::size_t i = 0;
  std::size_t k = 0;
  int ra = a.r0;
  int rb = b.r0;
  double t = 0.0;
  for (;;) {
    ++v.n_events;
    if (bad(ra, rb)) {
      v.pass = false;
      v.first_violation = Violation{t, ra, rb};
      return v;
    }
    double next = kNever;
    if (i < a.jumps.size()) next = a.jumps[i].time;
    if (k < b.jumps.size()) next = std::min(next, b.jumps[k].time);
    if (!(next <= end)) return v;
    t = next;
    while (i < a.jumps.size() && a.jumps[i].time == t) ra = a.jumps[i++].position;
    while (k < b.jumps.size() && b.jumps[k].time == t) rb = b.jumps[k++].position;
  }
}

}  // namespace

CouplingVerdict compare_fronts(const FrontTrace& lower, const FrontTrace& upper) {
  return compare_on_grid(lower, upper, [](int a, int b) { return a > b; });
}

CouplingVerdict compare_fronts_equal(const FrontTrace& a, const FrontTrace& b) {
  return compare_on_grid(a, b, [](int x, int y) { return x != y; });
}

CouplingVerdict check_coupling_addition(const ParticleSystem& psi1, const ParticleSystem& psi2,
                                        FrontKind kind) {
  std::unordered_map<double, const ParticlePath*> by_label;
  for (const auto& p : psi2.particles) by_label.emplace(p.label().value, &p);
  for (const auto& p : psi1.particles) {
    auto it = by_label.find(p.label().value);
    if (it == by_label.end() || !(*it->second == p)) {
      throw ParameterError("check_coupling_addition: first system is not a subset of the second");
    }
  }
  auto build = [kind](const ParticleSystem& s) {
    return kind == FrontKind::single_rate ? build_front_single_rate(s).trace
                                          : build_front_modified(s).trace;
  };
  return compare_fronts(build(psi1), build(psi2));
}

CouplingVerdict check_coupling_modified(const ParticleSystem& psi) {
  return compare_fronts(build_front_single_rate(psi).trace, build_front_modified(psi).trace);
}

CouplingVerdict check_coupling_symmetrize(const ParticleSystem& psi) {
  const auto sym = symmetrize(psi);
  auto v = compare_fronts(build_front_modified(psi).trace, build_front_modified(sym.system).trace);
  v.unresolved_warning = !sym.unresolved.empty();
  return v;
}

CouplingVerdict check_lemma6(const ParticleSystem& psi, double d_r, double d_b) {
  if (!(d_b > 0.0)) throw ParameterError("check_lemma6: needs d_b > 0");
  const FrontRun run = build_front_remanent(psi, d_r, d_b);
  CouplingVerdict v;
  for (const auto& jump : run.trace.jumps) {
    ++v.n_events;
    long blue = 0;
    long predicted = 0;
    bool mismatch = false;
    for (std::size_t p = 0; p < psi.particles.size(); ++p) {
      const bool is_blue = run.infection_time[p] >= jump.time;
      const bool above =
          p != jump.mover_index && psi.particles[p].position_at(jump.time) >= jump.position;
      blue += is_blue;
      predicted += above;
      mismatch = mismatch || is_blue != above;
    }
    if (mismatch) {
      v.pass = false;
      v.first_violation = Violation{jump.time, blue, predicted};
      return v;
    }
  }
  return v;
}

CouplingVerdict check_lemma7(const ParticleSystem& psi, double d_r, double d_b) {
  return compare_fronts(build_front_single_rate(psi).trace,
                        build_front_remanent(psi, d_r, d_b).trace);
}

const char* to_string(Direction d) { return d == Direction::up ? "up" : "down"; }

std::string format_front_csv(const FrontTrace& front) {
  std::string out = "T_k,position,direction,mover_label\n";
  out += "0," + std::to_string(front.r0) + ",start,\n";
  for (const auto& j : front.jumps) {
    out += format_double(j.time);
    out += ',';
    out += std::to_string(j.position);
    out += ',';
    out += to_string(j.direction);
    out += ',';
    out += format_double(j.mover.value);
    out += '\n';
  }
  return out;
}

FrontTrace parse_front_csv(std::string_view text, double t_end) {
  FrontTrace front;
  front.t_end = t_end;
  std::size_t pos = 0;
  int line_no = 0;
  bool seen_start = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string line(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++line_no;
    if (line_no == 1) {
      if (line != "T_k,position,direction,mover_label") throw FormatError("bad front CSV header");
      continue;
    }
    std::vector<std::string> f;
    std::size_t a = 0;
    for (;;) {
      const std::size_t c = line.find(',', a);
      f.push_back(line.substr(a, c == std::string::npos ? std::string::npos : c - a));
      if (c == std::string::npos) break;
      a = c + 1;
    }
    if (f.size() != 4) throw FormatError("front CSV row needs 4 fields: " + line);
    try {
      if (f[2] == "start") {
        if (seen_start) throw FormatError("repeated start row in front CSV");
        front.r0 = std::stoi(f[1]);
        seen_start = true;
        continue;
      }
      FrontJump j;
      j.time = std::stod(f[0]);
      j.position = std::stoi(f[1]);
      if (f[2] == "up") {
        j.direction = Direction::up;
      } else if (f[2] == "down") {
        j.direction = Direction::down;
      } else {
        throw FormatError("bad direction in front CSV: " + f[2]);
      }
      j.mover = Label{std::stod(f[3])};
      front.jumps.push_back(j);
    } catch (const std::logic_error&) {
      throw FormatError("bad front CSV row: " + line);
    }
  }
  if (!seen_start) throw FormatError("front CSV lacks the start row");
  return front;
}

std::string format_verdict_json(const CouplingVerdict& v) {
  nlohmann::ordered_json j;
  j["pass"] = v.pass;
  j["n_events"] = v.n_events;
  if (v.first_violation) {
    j["first_violation"] = {{"t", v.first_violation->t},
                            {"r1", v.first_violation->r1},
                            {"r2", v.first_violation->r2}};
  } else {
    j["first_violation"] = nullptr;
  }
  if (v.unresolved_warning) j["unresolved_warning"] = true;
  return j.dump();
}

}  // namespace ksfront

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ksfront/lattice_config.hpp"
#include "ksfront/walk.hpp"

namespace ksfront {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

// A finite set of labelled two-sided paths sharing the horizon [t_back, t_fwd].
struct ParticleSystem {
  std::vector<ParticlePath> particles;
  IntInterval window;
  double t_back = 0.0;
  double t_fwd = 0.0;

  // Distinct labels and every path covering [t_back, t_fwd]; throws
  // ParameterError otherwise.
  void validate() const;
  // Order-independent fingerprint of the labels and starting sites.
  std::uint64_t digest() const;
};

// Samples a configuration with sample_nu on `window` and attaches one
// two-sided walk per particle. Particle i (in ascending site, descending
// label order) uses the substream derive_seed(seed, i, Stream::paths).
ParticleSystem sample_system(const Configuration& w, double rate, double t_back, double t_fwd,
                             std::uint64_t seed);

enum class Direction { up, down };

struct FrontJump {
  double time = 0.0;
  int position = 0;  // front position after the jump
  Direction direction = Direction::up;
  Label mover;
  std::size_t mover_index = 0;  // index into ParticleSystem::particles
  friend bool operator==(const FrontJump&, const FrontJump&) = default;
};

// Piecewise-constant càdlàg front on [0, t_end].
struct FrontTrace {
  int r0 = 0;
  std::vector<FrontJump> jumps;
  double t_end = 0.0;
  bool censored = false;       // front came within the margin of the window edge
  double censor_time = kNever;  // first time it did
  std::uint64_t system_digest = 0;

  // r_t for t in [0, t_end]; HorizonError otherwise.
  int position_at(double t) const;
  // Number of jumps at times <= t.
  std::size_t jumps_until(double t) const;
  // Index of the jump occurring exactly at t; ConsistencyError if none.
  std::size_t jump_index_at(double t) const;
  // sup over [0, t] of r.
  int running_max_at(double t) const;

  friend bool operator==(const FrontTrace&, const FrontTrace&) = default;
};

// A front together with every particle's infection time: the first s >= 0
// with W_s <= r_s (kNever if none within the horizon). A particle is red at
// t > 0 iff its infection time is < t.
struct FrontRun {
  FrontTrace trace;
  std::vector<double> infection_time;
};

struct FrontOptions {
  // Censor once the front reaches window.hi - edge_margin.
  int edge_margin = 0;
};

// Single-rate front from the rightmost occupied site <= 0. Throws
// ParameterError if no particle starts at a site <= 0.
FrontRun build_front_single_rate(const ParticleSystem& psi, const FrontOptions& opt = {});

// As single-rate, but started from 0 and never allowed below 0.
FrontRun build_front_modified(const ParticleSystem& psi, const FrontOptions& opt = {});

// Remanent front (d_r >= d_b > 0) or frog front (d_b = 0). Base paths are
// read on the blue clock; from its infection time tau a particle follows
// its base path at speed d_r/d_b (remanent), or starts its walk at tau on
// the clock t - tau (frog). The returned infection times are the tau's.
// The trace is valid up to t_fwd * d_b / d_r (remanent) or t_fwd (frog).
FrontRun build_front_remanent(const ParticleSystem& psi, double d_r, double d_b,
                              const FrontOptions& opt = {});

// The paths actually followed in a remanent or frog run: time-changed
// (or activated) paths for infected particles, base paths otherwise. The
// horizon is the trace's valid horizon.
ParticleSystem effective_system(const ParticleSystem& psi, const FrontRun& run, double d_r,
                                double d_b);

// First s in [0, t_end] with W_s <= r_s, computed directly from the path and
// the trace; kNever if none.
double infection_time_of(const ParticlePath& path, const FrontTrace& front);

struct SymmetrizeResult {
  ParticleSystem system;
  std::vector<Label> unresolved;  // negative starts that never reached 0
};

// Paths starting at x0 < 0 are negated until their first visit to 0 at a
// time > 0, and left unchanged from then on; other paths are unchanged.
SymmetrizeResult symmetrize(const ParticleSystem& psi);

struct RedBlueSnapshot {
  double t = 0.0;
  std::vector<Label> red_labels;   // ascending
  std::vector<Label> blue_labels;  // ascending
};

// Red/blue partition at time t. At t = 0 red means x0 < 0. Throws
// ConsistencyError if the trace was not built from psi.
RedBlueSnapshot red_blue_at(const ParticleSystem& psi, const FrontTrace& front, double t);

struct Violation {
  double t = 0.0;
  long r1 = 0;
  long r2 = 0;
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct CouplingVerdict {
  bool pass = true;
  std::size_t n_events = 0;
  std::optional<Violation> first_violation;
  bool unresolved_warning = false;
};

// Checks lower_t <= upper_t at t = 0 and at every jump time of either trace
// up to the shorter horizon.
CouplingVerdict compare_fronts(const FrontTrace& lower, const FrontTrace& upper);

// Requires exact equality at every event time instead.
CouplingVerdict compare_fronts_equal(const FrontTrace& a, const FrontTrace& b);

enum class FrontKind { single_rate, modified };

// psi1 must be a subset of psi2 (same label, identical path).
CouplingVerdict check_coupling_addition(const ParticleSystem& psi1, const ParticleSystem& psi2,
                                        FrontKind kind);
// Single-rate front <= modified front.
CouplingVerdict check_coupling_modified(const ParticleSystem& psi);
// Modified front of psi <= modified front of symmetrize(psi).
CouplingVerdict check_coupling_symmetrize(const ParticleSystem& psi);
// At each front jump T_k of the remanent run, blue set equals
// {base position at T_k >= k} minus the mover. In a violation record r1 is
// the blue count and r2 the predicted count.
CouplingVerdict check_lemma6(const ParticleSystem& psi, double d_r, double d_b);
// Rate-d_b single-rate front <= remanent front on the same base paths.
CouplingVerdict check_lemma7(const ParticleSystem& psi, double d_r, double d_b = 2.0);

const char* to_string(Direction d);

// CSV "T_k,position,direction,mover_label" with a header row.
std::string format_front_csv(const FrontTrace& front);
// Inverse of format_front_csv. The horizon is not part of the CSV and is
// supplied by the caller; mover indices are left at 0.
FrontTrace parse_front_csv(std::string_view text, double t_end);
std::string format_verdict_json(const CouplingVerdict& v);

}  // namespace ksfront

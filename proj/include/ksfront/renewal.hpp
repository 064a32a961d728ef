#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ksfront/front.hpp"
#include "ksfront/lattice_config.hpp"

namespace ksfront {

// Finite windows replacing the "for all s < t" / "for all s > t"
// quantifiers of the line predicates.
struct HorizonPolicy {
  double h_back = 100.0;
  double h_fwd = 100.0;
  double tail_tol = 1e-6;

  // Positive windows and tolerance, and h_fwd >= 1/alpha so the sitting
  // clauses can be certified. Throws ParameterError.
  void validate(double alpha) const;
};

// One renewal attempt: S'_n, S_n and the failure time D_n.
struct AttemptRecord {
  int n = 0;
  double s_prime = 0.0;
  double s = 0.0;
  double d = kNever;
  std::optional<int> failure_condition;  // 1..5
  std::optional<Label> upsilon;          // witness when S_n failed the backward clause
  double m_n = 0.0;
  long crossings = 0;  // (S'_n, alpha)-crossing times in ]S'_n, S_n[
  bool truncated = false;
};

struct ApproxFlags {
  bool backward_truncated = false;
  bool forward_truncated = false;
  bool any() const { return backward_truncated || forward_truncated; }
  friend bool operator==(const ApproxFlags&, const ApproxFlags&) = default;
};

struct RenewalRecord {
  double kappa = 0.0;
  int r_kappa = 0;
  ApproxFlags flags;
  friend bool operator==(const RenewalRecord&, const RenewalRecord&) = default;
};

struct PredicateResult {
  bool holds = false;
  bool truncated = false;
  std::optional<Label> offender;
};

// Precomputed views of one front run used by all predicates. `psi` holds
// the paths actually followed (see effective_system) and must outlive the
// context.
class RenewalContext {
 public:
  RenewalContext(const ParticleSystem& psi, const FrontRun& run, double alpha);

  const ParticleSystem& system() const { return *psi_; }
  const FrontTrace& front() const { return run_->trace; }
  const std::vector<double>& infection_time() const { return run_->infection_time; }
  double alpha() const { return alpha_; }

  bool is_red(std::size_t p, double t) const { return run_->infection_time[p] < t; }
  // Upward jump indices in time order.
  const std::vector<std::size_t>& upward() const { return upward_; }
  // Particles infected exactly at jump k: the blue particles sitting at the
  // new front position.
  const std::vector<std::size_t>& infected_at(std::size_t k) const { return infected_at_[k]; }
  // Particles red at jump k (infected strictly before T_k), mover included.
  std::span<const std::size_t> red_at(std::size_t k) const;
  // Particles blue at jump k.
  std::span<const std::size_t> blue_at(std::size_t k) const;
  // max over i < k of r_{T_i} - alpha T_i, with T_0 = 0.
  double prefix_line_max(std::size_t k) const { return prefix_max_[k]; }

 private:
  const ParticleSystem* psi_;
  const FrontRun* run_;
  double alpha_;
  std::vector<std::size_t> upward_;
  std::vector<std::vector<std::size_t>> infected_at_;
  std::vector<std::size_t> by_tau_;     // particle indices sorted by infection time
  std::vector<std::size_t> red_count_;  // per jump: number infected before T_k
  std::vector<double> prefix_max_;
};

// All predicates take the index k of an upward front jump; a
// ConsistencyError is thrown otherwise.
bool is_backward_sub_alpha(const RenewalContext& ctx, std::size_t k);
PredicateResult is_backward_super_alpha(const RenewalContext& ctx, std::size_t k,
                                        const HorizonPolicy& hp);
PredicateResult is_forward_sub_alpha(const RenewalContext& ctx, std::size_t k,
                                     const HorizonPolicy& hp);
PredicateResult is_forward_super_alpha(const RenewalContext& ctx, std::size_t k,
                                       const HorizonPolicy& hp);

// Front-only variant of the backward sub-alpha test at time t.
bool is_backward_sub_alpha(const FrontTrace& front, double t, double alpha);

// (s, alpha)-crossing times inside the open interval (lo, hi): times t at
// which the front first reaches r_s + k + alpha(t - s) for some k >= 1
// while staying strictly below that line on [s, t).
std::vector<double> crossing_times(const FrontTrace& front, double s, double alpha, double lo,
                                   double hi);

// Sum over red particles other than the mover of e^{-theta (r_t - W_t)} at
// the upward jump k.
double exp_norm_below_front(const RenewalContext& ctx, std::size_t k, double theta);

struct AttemptSequence {
  std::vector<AttemptRecord> attempts;
  bool censored = false;  // ran out of horizon before an attempt succeeded
};

AttemptSequence run_attempt_sequence(const RenewalContext& ctx, const AlphaParams& ap,
                                     const HorizonPolicy& hp);

// Every upward jump time satisfying all four finite-window predicates.
std::vector<RenewalRecord> find_separation_times(const RenewalContext& ctx,
                                                 const HorizonPolicy& hp);

// True iff every r_kappa equals the running maximum of the front at kappa.
bool verify_record_identity(const std::vector<RenewalRecord>& renewals, const FrontTrace& front);

struct ShiftCheck {
  bool front_match = false;       // post-kappa increments reproduced
  bool next_kappa_match = false;  // first separation time of the shifted system
  std::size_t n_events = 0;
  double first_mismatch = kNever;
};

// Model used to rebuild fronts from shifted blue systems.
struct VariantRates {
  Variant variant = Variant::single_rate;
  double d_r = 2.0;
  double d_b = 2.0;
};

// Regeneration identity at renewal `index` of `renewals`: rebuild the front
// from the particles blue at kappa, translated so (r_kappa, kappa) goes to
// (0, 0), and compare with the original front's increments on
// [0, next_kappa - kappa + h_fwd] within the horizon. If a next renewal
// exists, the shifted system's first separation time must be the increment.
// `base` is the system of base paths the run was built from.
ShiftCheck check_shift_identity(const ParticleSystem& base, const RenewalContext& ctx,
                                const std::vector<RenewalRecord>& renewals, std::size_t index,
                                const HorizonPolicy& hp, const VariantRates& rates);

// CSVs with header rows.
std::string format_attempts_csv(const std::vector<AttemptRecord>& attempts);
std::string format_renewals_csv(const std::vector<RenewalRecord>& renewals);
std::vector<RenewalRecord> parse_renewals_csv(std::string_view text);

}  // namespace ksfront

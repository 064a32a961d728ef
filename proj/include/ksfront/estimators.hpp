#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ksfront/front.hpp"
#include "ksfront/renewal.hpp"

namespace ksfront {

// Two-sided normal confidence level used for every interval below.
inline constexpr double kConfidenceLevel = 0.95;

// One regeneration increment: (kappa_{i+1} - kappa_i, r_{kappa_{i+1}} -
// r_{kappa_i}), with kappa_0 = 0 and r at time 0 taken as r_0.
struct IncrementSample {
  double d_kappa = 0.0;
  long d_r = 0;
  int index = 0;
  std::uint64_t replica = 0;
  friend bool operator==(const IncrementSample&, const IncrementSample&) = default;
};

// Increments of one replica's record list. Increments touching a record
// with a truncation flag are dropped unless `include_truncated`.
std::vector<IncrementSample> increments_from(const std::vector<RenewalRecord>& renewals, int r0,
                                             std::uint64_t replica,
                                             bool include_truncated = false);

// Estimate with a symmetric confidence half-width. `ci_defined` is false
// when the sample cannot support an interval (e.g. a single replica).
struct Estimate {
  double value = 0.0;
  double ci = 0.0;
  bool ci_defined = false;
  long n = 0;
};

struct SpeedEstimate {
  Estimate v;
  long n_censored = 0;  // traces excluded for boundary censoring
};

// Mean over uncensored replicas of (r_b - r_a)/(b - a). Throws
// HorizonError if a trace ends before b, InsufficientDataError if every
// trace is censored.
SpeedEstimate estimate_speed_between(std::span<const FrontTrace> fronts, double a, double b);

// As above on [t_burn, T] where T is the common end of the traces; each
// trace must reach 2 t_burn.
SpeedEstimate estimate_speed(std::span<const FrontTrace> fronts, double t_burn);

// Var(d_r - v_hat d_kappa) / mean(d_kappa) with the unbiased variance.
// The interval comes from resampling whole replicas; the plan is
// determined by `resample_seed` and by the samples' contents only, so it
// is invariant under relabelling replicas. Throws InsufficientDataError
// if fewer than 30 samples.
Estimate estimate_variance_renewal(std::span<const IncrementSample> samples, double v_hat,
                                   std::uint64_t resample_seed, int n_resamples = 400);

struct DiffusiveEstimate {
  Estimate sigma2;
  double intercept = 0.0;
  double linearity_residual = 0.0;  // RMS residual of the variance-vs-time fit
  std::vector<double> t_grid;
  std::vector<double> variance;  // across-replica Var(r_t - v_hat t) per grid time
};

// Least-squares slope of the across-replica variance of r_t - v_hat t
// against t. Censored traces are skipped. Throws ParameterError for fewer
// than 3 grid points; the interval resamples replicas as above.
DiffusiveEstimate estimate_variance_diffusive(std::span<const FrontTrace> fronts,
                                              const std::vector<double>& t_grid, double v_hat,
                                              std::uint64_t resample_seed,
                                              int n_resamples = 400);

struct IidDiagnostics {
  long n = 0;            // samples used
  long n_pairs = 0;      // consecutive pairs within replicas
  double lag1_d_kappa = 0.0;
  double lag1_d_r = 0.0;
  double lag1_threshold = 0.0;  // 3 / sqrt(n_pairs)
  double ks_d_kappa = 0.0;      // first-half vs second-half sup distance of the ECDFs
  double ks_d_r = 0.0;
  long n_first = 0;
  long n_second = 0;
};

// Lag-1 autocorrelations over consecutive indices within each replica and
// the distance between the empirical distributions of the lower-index and
// upper-index halves of the pool (ordered by index, then replica). Throws
// InsufficientDataError below `min_samples` samples or without pairs.
IidDiagnostics iid_diagnostics(std::span<const IncrementSample> samples, long min_samples = 50);

// Upper `quantile` of the two-sample ECDF distance between i.i.d. samples
// of sizes n1 and n2 from a continuous law, by simulation. For discrete
// laws the true null distance is stochastically smaller, so the threshold
// is conservative.
double calibrate_two_sample_threshold(long n1, long n2, double quantile, std::uint64_t seed,
                                      int reps = 2000);

struct GaussianProfile {
  std::vector<double> standardized;       // sorted
  std::vector<double> empirical_deciles;  // at 0.1, ..., 0.9
  std::vector<double> normal_deciles;
  double rmse = 0.0;
  double location = 0.0;  // centring used
  bool degenerate = false;  // no spread across replicas
};

// Standardizes (r_t - m) / sqrt(sigma2 t) across uncensored replicas and
// compares deciles with the standard normal. The centring m is v_hat t
// unless `centre_on_mean`, in which case the cross-sectional mean is used.
GaussianProfile gaussian_profile_check(std::span<const FrontTrace> fronts, double t_eval,
                                       double v_hat, double sigma2, bool centre_on_mean = false);

// Decile RMSE of an already standardized sample.
double decile_rmse(std::vector<double> standardized);

// Upper `quantile` of the decile RMSE for n standard normals centred on
// their own sample mean (the null law of gaussian_profile_check with
// centre_on_mean and the true sigma2).
double calibrate_decile_rmse_threshold(long n, double quantile, std::uint64_t seed,
                                       int reps = 2000);

struct BallisticityReport {
  std::vector<double> t_grid;
  std::vector<double> below_alpha_fraction;  // replicas with r_s <= alpha s for some s >= t
  std::vector<double> above_beta_fraction;   // replicas with r_s >= beta s for some s >= t
  std::vector<double> max_ratio;             // mean over replicas of sup_{s >= t} r_s / s
};

BallisticityReport ballisticity_report(std::span<const FrontTrace> fronts, double alpha,
                                       double beta, const std::vector<double>& t_grid);

struct EstimateReport {
  double confidence_level = kConfidenceLevel;
  SpeedEstimate speed;
  std::optional<Estimate> sigma2_renewal;
  std::optional<DiffusiveEstimate> sigma2_diffusive;
  std::optional<IidDiagnostics> diagnostics;
  std::optional<double> gaussian_quantile_rmse;
  long n_increments = 0;
  std::vector<std::string> notes;  // reasons for any missing estimate
};

std::string format_report_json(const EstimateReport& report);

// CSV "replica,t,r,residual,standardized" at t_eval for every uncensored
// replica; `replica_ids` labels the rows.
std::string format_residuals_csv(std::span<const FrontTrace> fronts,
                                 std::span<const std::uint64_t> replica_ids, double t_eval,
                                 double v_hat, double sigma2);

}  // namespace ksfront

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ksfront/estimators.hpp"
#include "ksfront/front.hpp"
#include "ksfront/lattice_config.hpp"
#include "ksfront/renewal.hpp"

namespace ksfront {

inline constexpr const char* kToolVersion = "ksfront 1.0.0";

// Environment variable that overrides the configured output directory.
// A command-line --out still takes precedence.
inline constexpr const char* kOutputDirEnv = "KSFRONT_OUT";

// Every free parameter of one ensemble.
//
// Config file keys (one "key = value" per line, '#' starts a comment):
//   rho, d_r, d_b, variant                       model
//   alpha, theta, beta, cap_c, cap_l             line / norm parameters
//   h_back, h_fwd, tail_tol                      detection windows
//   t_fwd, t_back                                simulated horizon
//   window_lo, window_hi                         simulation window (both or neither)
//   pilot_speed, edge_margin                     window auto-sizing and censoring
//   replicas, first_replica, master_seed         ensemble
//   horizon_sweep                                also detect at doubled windows
//   t_eval                                       time of the Gaussian profile
//   include_truncated                            keep truncation-flagged increments
//   output_dir
// Unknown or repeated keys are errors.
struct RunConfig {
  ModelParams model;
  AlphaParams alpha_params;
  HorizonPolicy horizons;
  double t_fwd = 500.0;
  std::optional<double> t_back;  // default -h_back, or -2 h_back with the sweep
  std::optional<IntInterval> window;
  double pilot_speed = 1.0;
  int edge_margin = 0;
  int replicas = 1;
  int first_replica = 0;
  std::uint64_t master_seed = 1;
  bool horizon_sweep = false;
  std::optional<double> t_eval;  // default t_fwd / 2
  bool include_truncated = false;
  std::string output_dir = "ksfront_out";

  // Model, parameter-constraint and horizon checks; throws ParameterError.
  void validate() const;

  double resolved_t_back() const;
  double resolved_t_eval() const;
  // Given window, or [-6 sqrt(rate t_fwd), 2 pilot_speed t_fwd + 6 sqrt(rate t_fwd)]
  // with rate the larger of the two jump rates.
  IntInterval resolved_window() const;
  // Jump rate of the stored base paths and the base-clock horizon they need.
  double base_rate() const;
  double base_t_fwd() const;
};

// Throws FormatError on syntax errors and ParameterError on unknown,
// repeated or invalid keys. The result is validated.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Canonical snapshot with every resolved parameter except output_dir, in a
// fixed key order; parse_config(format_config(c)) reproduces c's physics.
std::string format_config(const RunConfig& config);

// Keys of the canonical snapshot that identify the replica law; replicas,
// first_replica and master_seed are excluded.
std::map<std::string, std::string> model_keys(const RunConfig& config);

// Output directory precedence: explicit flag, then the environment
// variable, then the config value.
std::filesystem::path resolve_output_dir(const RunConfig& config,
                                         const std::optional<std::string>& flag);

std::string sha256_hex(std::string_view data);

// Writes via a temporary file in the same directory and renames it.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

struct ReplicaRecord {
  int index = 0;
  std::uint64_t seed = 0;
  std::size_t n_particles = 0;
  bool censored = false;
  double censor_time = kNever;
  double t_end = 0.0;
  int r0 = 0;
  std::size_t n_renewals = 0;
  std::optional<std::size_t> n_renewals_wide;  // with the horizon sweep
  std::map<std::string, std::string> files;    // name -> sha256
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string ensemble_id;  // hash of the model keys
  std::string config_text;  // canonical snapshot
  std::uint64_t master_seed = 0;
  std::vector<ReplicaRecord> replicas;
  long censored_count = 0;
  std::map<std::string, std::string> files;  // every file under the run directory
  bool complete = false;
};

std::string format_manifest_json(const RunManifest& manifest);
RunManifest parse_manifest_json(std::string_view text);

struct RunOptions {
  bool resume = false;
  int workers = 1;
  // Stop after computing this many new replicas without writing the
  // manifest; emulates an interrupted run in tests.
  std::optional<int> stop_after;
};

// Directory of replica `index` below the run directory.
std::string replica_dir_name(int index);

// Simulates replicas [first_replica, first_replica + replicas): samples the
// configuration, draws the paths, builds the front, detects separation
// times and the attempt sequence, and writes per-replica CSVs plus a
// record.json holding their hashes (written last). Existing completed
// replicas are verified against their records instead of recomputed
// (IntegrityError naming the file on mismatch). A directory holding a
// different configuration is a ConsistencyError; an unfinished run is only
// continued with `resume`.
RunManifest run_ensemble(const RunConfig& config, const std::filesystem::path& out_dir,
                         const RunOptions& options = {});

// One simulated replica, in memory.
struct ReplicaOutput {
  ParticleSystem system;  // base paths
  FrontRun run;
  std::vector<RenewalRecord> renewals;
  std::optional<std::vector<RenewalRecord>> renewals_wide;
  AttemptSequence attempts;
};

ReplicaOutput simulate_replica(const RunConfig& config, int index);

// Detection on an explicit system (base paths), as the renewal subcommand
// does for user-supplied inputs.
ReplicaOutput analyse_system(const RunConfig& config, ParticleSystem system);

struct MergeResult {
  EstimateReport report;
  std::string report_json;
  std::string residuals_csv;
  std::string increments_csv;
  std::string ballisticity_csv;
  std::string speed_csv;  // per-replica speeds
  std::size_t n_replicas = 0;
};

// Pools the replicas of several completed runs (deduplicated by
// (master_seed, replica index)), verifying every file read against its
// manifest hash. Runs must share their model keys (MergeError listing the
// differing keys otherwise). Results depend only on the pooled replica set.
MergeResult merge_and_report(const std::vector<std::filesystem::path>& dirs);

// Writes report.json, residuals.csv, increments.csv, ballisticity.csv and
// speeds.csv into `out_dir`.
void write_merge_outputs(const MergeResult& result, const std::filesystem::path& out_dir);

// Pathwise comparison suite over random single-rate systems.
struct CouplingCheckSummary {
  std::string name;
  long n_systems = 0;
  long n_violations = 0;
  std::size_t n_events = 0;
  long n_unresolved = 0;
  bool has_negative_control = true;
  bool negative_control_detected = false;
};

struct CouplingSuiteSpec {
  long n_systems = 1000;
  double rho = 1.0;
  double rate = 2.0;
  IntInterval window{-50, 50};
  double t_fwd = 50.0;
};

// addition (single-rate and modified, on random subset pairs), single-rate
// below modified, and modified below modified-of-symmetrized. System i
// draws from derive_seed(seed, i, Stream::coupling_suite). Each check also
// runs on a scripted system with the roles of the two fronts swapped, which
// must be flagged.
std::vector<CouplingCheckSummary> run_coupling_suite(const CouplingSuiteSpec& spec,
                                                     std::uint64_t seed);

// The scripted systems used as negative controls: (smaller, larger) pairs
// whose fronts differ strictly at some time.
struct ScriptedPair {
  ParticleSystem lower;
  ParticleSystem upper;
};
ScriptedPair scripted_addition_pair();
ParticleSystem scripted_far_left_system();
ParticleSystem scripted_symmetrize_system();

struct RemanentSuiteSpec {
  long n_systems = 1000;
  double rho = 1.0;
  double d_r = 4.0;
  double d_b = 2.0;
  IntInterval window{-50, 50};
  double t_fwd = 50.0;  // base-clock horizon
};

// Blue-set identity at every remanent front jump and domination of the
// rate-d_b single-rate front by the remanent front, on random systems drawn
// from derive_seed(seed, i, Stream::coupling_suite). The domination check
// also runs swapped on a scripted system where the remanent front is
// strictly ahead, which must be flagged.
std::vector<CouplingCheckSummary> run_remanent_suite(const RemanentSuiteSpec& spec,
                                                     std::uint64_t seed);

// A particle at 0 that steps to 1 at base time 1 and back at base time 2.
ParticleSystem scripted_retreat_system();

std::string format_coupling_suite_json(const std::vector<CouplingCheckSummary>& rows);

}  // namespace ksfront

// Command-line front end: simulate ensembles, detect separation times,
// estimate the front statistics, and run the verification suites.
//
// Exit codes: 0 success, 1 a verification check failed, 2 invalid
// parameters or input, 3 output integrity / consistency error.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ksfront/bounds.hpp"
#include "ksfront/errors.hpp"
#include "ksfront/harness.hpp"
#include "ksfront/random_stream.hpp"

namespace fs = std::filesystem;
using namespace ksfront;

namespace {

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicas;
  std::optional<std::string> out;
  int workers = 1;
  bool resume = false;
  bool horizon_sweep = false;
  std::optional<std::string> init_file;
  std::optional<std::string> script_file;
  std::vector<std::string> runs;
};

void add_run_flags(CLI::App* app, CommonFlags& f, bool need_config) {
  auto* c = app->add_option("--config", f.config, "run configuration (key = value lines)");
  if (need_config) c->required();
  app->add_option("--seed", f.seed, "master seed (overrides master_seed)");
  app->add_option("--out", f.out, "output directory");
}

RunConfig load_with_overrides(const CommonFlags& f) {
  RunConfig c = f.config ? load_config(*f.config) : RunConfig{};
  if (f.seed) c.master_seed = *f.seed;
  if (f.replicas) c.replicas = *f.replicas;
  if (f.horizon_sweep) c.horizon_sweep = true;
  c.validate();
  return c;
}

int cmd_simulate(const CommonFlags& f) {
  const RunConfig c = load_with_overrides(f);
  const fs::path out = resolve_output_dir(c, f.out);
  RunOptions opt;
  opt.resume = f.resume;
  opt.workers = f.workers;
  const RunManifest m = run_ensemble(c, out, opt);
  std::size_t renewals = 0;
  for (const auto& r : m.replicas) renewals += r.n_renewals;
  std::cout << "simulated " << m.replicas.size() << " replicas into " << out.string()
            << " (ensemble " << m.ensemble_id << ", censored " << m.censored_count
            << ", separation times " << renewals << ")\n";
  return 0;
}

ParticleSystem system_from_script(const std::string& path) {
  ParticleSystem psi;
  psi.particles = parse_paths(read_file(path));
  if (psi.particles.empty()) throw FormatError(path + ": no paths");
  psi.t_back = -kNever;
  psi.t_fwd = kNever;
  int lo = 0;
  int hi = 0;
  for (const auto& p : psi.particles) {
    psi.t_back = std::max(psi.t_back, p.t_back());
    psi.t_fwd = std::min(psi.t_fwd, p.t_fwd());
    for (int v : p.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  psi.window = {lo, hi + 1};
  psi.validate();
  return psi;
}

int cmd_renewal(const CommonFlags& f) {
  const RunConfig c = load_with_overrides(f);
  if (f.init_file && f.script_file) {
    throw ParameterError("--init-file and --script-file are mutually exclusive");
  }
  const fs::path out = resolve_output_dir(c, f.out);
  ReplicaOutput r;
  if (f.script_file) {
    r = analyse_system(c, system_from_script(*f.script_file));
  } else if (f.init_file) {
    const Configuration w = parse_configuration(read_file(*f.init_file));
    const std::uint64_t seed = derive_seed(c.master_seed, 0, Stream::initial_config);
    r = analyse_system(c, sample_system(w, c.base_rate(), c.resolved_t_back(), c.base_t_fwd(), seed));
  } else {
    r = simulate_replica(c, c.first_replica);
  }
  write_file_atomic(out / "front.csv", format_front_csv(r.run.trace));
  write_file_atomic(out / "renewals.csv", format_renewals_csv(r.renewals));
  write_file_atomic(out / "attempts.csv", format_attempts_csv(r.attempts.attempts));
  if (r.renewals_wide) {
    write_file_atomic(out / "renewals_wide.csv", format_renewals_csv(*r.renewals_wide));
  }
  std::cout << "front jumps " << r.run.trace.jumps.size() << ", separation times "
            << r.renewals.size() << ", attempts " << r.attempts.attempts.size()
            << (r.attempts.censored ? " (attempt sequence censored)" : "") << " -> "
            << out.string() << '\n';
  return 0;
}

std::vector<fs::path> run_dirs(const CommonFlags& f) {
  std::vector<fs::path> dirs(f.runs.begin(), f.runs.end());
  if (dirs.empty()) throw ParameterError("no run directories given");
  return dirs;
}

fs::path merge_out(const CommonFlags& f, const std::vector<fs::path>& dirs) {
  if (f.out) return *f.out;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return dirs.front() / "report";
}

int cmd_estimate(const CommonFlags& f) {
  const auto dirs = run_dirs(f);
  const MergeResult res = merge_and_report(dirs);
  const fs::path out = merge_out(f, dirs);
  write_merge_outputs(res, out);
  std::cout << res.report_json;
  return 0;
}

int cmd_report(const CommonFlags& f) {
  const auto dirs = run_dirs(f);
  const MergeResult res = merge_and_report(dirs);
  const fs::path out = merge_out(f, dirs);
  write_merge_outputs(res, out);
  const EstimateReport& r = res.report;
  std::ostringstream s;
  s << "replicas          " << res.n_replicas << " (" << r.speed.n_censored << " censored)\n";
  s << "speed             " << format_double(r.speed.v.value) << " +- "
    << format_double(r.speed.v.ci) << '\n';
  if (r.sigma2_renewal) {
    s << "sigma2 renewal    " << format_double(r.sigma2_renewal->value) << " +- "
      << format_double(r.sigma2_renewal->ci) << '\n';
  }
  if (r.sigma2_diffusive) {
    s << "sigma2 diffusive  " << format_double(r.sigma2_diffusive->sigma2.value) << " +- "
      << format_double(r.sigma2_diffusive->sigma2.ci) << '\n';
  }
  s << "increments        " << r.n_increments << '\n';
  if (r.diagnostics) {
    s << "lag-1             " << format_double(r.diagnostics->lag1_d_kappa) << ", "
      << format_double(r.diagnostics->lag1_d_r) << " (threshold "
      << format_double(r.diagnostics->lag1_threshold) << ")\n";
  }
  if (r.gaussian_quantile_rmse) {
    s << "decile rmse       " << format_double(*r.gaussian_quantile_rmse) << '\n';
  }
  for (const auto& n : r.notes) s << "note: " << n << '\n';
  write_file_atomic(out / "report.txt", s.str());
  std::cout << s.str();
  return 0;
}

int cmd_verify_couplings(const CommonFlags& f) {
  const RunConfig c = load_with_overrides(f);
  CouplingSuiteSpec cs;
  cs.rho = c.model.rho;
  if (f.replicas) cs.n_systems = *f.replicas;
  RemanentSuiteSpec rs;
  rs.rho = c.model.rho;
  rs.n_systems = cs.n_systems;
  if (c.model.variant == Variant::remanent) {
    rs.d_r = c.model.d_r;
    rs.d_b = c.model.d_b;
  }
  auto rows = run_coupling_suite(cs, c.master_seed);
  const auto rem = run_remanent_suite(rs, c.master_seed);
  rows.insert(rows.end(), rem.begin(), rem.end());
  const std::string json = format_coupling_suite_json(rows);
  if (f.out || std::getenv(kOutputDirEnv) != nullptr) {
    write_file_atomic(resolve_output_dir(c, f.out) / "couplings.json", json);
  }
  bool ok = true;
  for (const auto& r : rows) {
    const bool pass =
        r.n_violations == 0 && (!r.has_negative_control || r.negative_control_detected);
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << r.name << ": " << r.n_violations << " violations in "
              << r.n_systems << " systems, " << r.n_events << " events";
    if (r.has_negative_control) {
      std::cout << ", negative control " << (r.negative_control_detected ? "flagged" : "missed");
    }
    std::cout << '\n';
  }
  return ok ? 0 : 1;
}

int cmd_verify_bounds(const CommonFlags& f) {
  const RunConfig c = load_with_overrides(f);
  BoundGridSpec spec;
  spec.x_values = {0, -1, -2, -3};
  spec.t_values = {1, 2, 5};
  if (f.config) {
    spec.alpha = c.alpha_params.alpha;
    spec.theta = c.alpha_params.theta;
    spec.rate = c.base_rate();
  }
  if (f.replicas) spec.n_per_cell = *f.replicas;
  spec.validate();
  const auto cells = run_bound_grid(spec, c.master_seed);
  const std::string csv = format_bound_table_csv(cells);
  const std::string json = format_bound_summary_json(spec, cells);
  if (f.out || std::getenv(kOutputDirEnv) != nullptr) {
    const fs::path out = resolve_output_dir(c, f.out);
    write_file_atomic(out / "bounds.csv", csv);
    write_file_atomic(out / "bounds.json", json);
  }
  std::cout << csv;
  const bool ok = std::all_of(cells.begin(), cells.end(),
                              [](const BoundCell& cell) { return cell.report.pass; });
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo simulator and verification harness for one-dimensional infection fronts"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  CommonFlags f;

  auto* sim = app.add_subcommand("simulate", "simulate an ensemble of replicas");
  add_run_flags(sim, f, true);
  sim->add_option("--replicas", f.replicas, "number of replicas (overrides replicas)");
  sim->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
  sim->add_flag("--resume", f.resume, "continue an interrupted run in --out");
  sim->add_flag("--horizon-sweep", f.horizon_sweep, "also detect at doubled windows");

  auto* ren = app.add_subcommand("renewal", "detect separation times on one system");
  add_run_flags(ren, f, true);
  ren->add_flag("--horizon-sweep", f.horizon_sweep, "also detect at doubled windows");
  auto* init = ren->add_option("--init-file", f.init_file, "initial configuration file");
  ren->add_option("--script-file", f.script_file, "explicit path trace file")->excludes(init);

  auto* est = app.add_subcommand("estimate", "pool completed runs and estimate speed and variance");
  est->add_option("--out", f.out, "destination of the report files");
  est->add_option("runs", f.runs, "completed run directories")->required();

  auto* rep = app.add_subcommand("report", "estimate and print a readable summary");
  rep->add_option("--out", f.out, "destination of the report files");
  rep->add_option("runs", f.runs, "completed run directories")->required();

  auto* cpl = app.add_subcommand("verify-couplings", "pathwise comparison suites");
  add_run_flags(cpl, f, false);
  cpl->add_option("--replicas", f.replicas, "systems per check");

  auto* bnd = app.add_subcommand("verify-bounds", "line-hitting bound grid");
  add_run_flags(bnd, f, false);
  bnd->add_option("--replicas", f.replicas, "walks per grid cell");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(f);
    if (ren->parsed()) return cmd_renewal(f);
    if (est->parsed()) return cmd_estimate(f);
    if (rep->parsed()) return cmd_report(f);
    if (cpl->parsed()) return cmd_verify_couplings(f);
    if (bnd->parsed()) return cmd_verify_bounds(f);
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const InsufficientDataError& e) {
    std::cerr << "insufficient data: " << e.what() << '\n';
    return 2;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << '\n';
    return 3;
  } catch (const ConsistencyError& e) {
    std::cerr << "consistency error: " << e.what() << '\n';
    return 3;
  } catch (const MergeError& e) {
    std::cerr << "merge error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

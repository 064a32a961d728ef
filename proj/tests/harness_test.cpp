#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"
#include "ksfront/errors.hpp"
#include "ksfront/harness.hpp"

namespace ksfront {
namespace {

namespace fs = std::filesystem;

constexpr const char* kSmallConfig =
    "# a short ensemble\n"
    "rho = 1\n"
    "alpha = 0.9\n"
    "theta = 0.5\n"
    "beta = 1.5\n"
    "h_back = 5\n"
    "h_fwd = 5\n"
    "t_fwd = 20\n"
    "replicas = 6\n"
    "master_seed = 77\n";

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("ksfront_test_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Relative path -> content for every regular file below `root`.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

RunConfig small_config() { return parse_config(kSmallConfig); }

TEST(Config, ParsesKeysAndComments) {
  const RunConfig c = small_config();
  EXPECT_DOUBLE_EQ(c.model.rho, 1.0);
  EXPECT_DOUBLE_EQ(c.alpha_params.alpha, 0.9);
  EXPECT_DOUBLE_EQ(c.t_fwd, 20.0);
  EXPECT_EQ(c.replicas, 6);
  EXPECT_EQ(c.master_seed, 77u);
  EXPECT_DOUBLE_EQ(c.resolved_t_back(), -5.0);
  EXPECT_DOUBLE_EQ(c.resolved_t_eval(), 10.0);
}

TEST(Config, RejectsUnknownRepeatedAndMalformedKeys) {
  EXPECT_THROW(parse_config("rho = 1\nspeed = 2\n"), ParameterError);
  EXPECT_THROW(parse_config("rho = 1\nrho = 2\n"), ParameterError);
  EXPECT_THROW(parse_config("rho 1\n"), FormatError);
  EXPECT_THROW(parse_config("rho =\n"), FormatError);
  EXPECT_THROW(parse_config("window_lo = -5\n"), ParameterError);
  EXPECT_THROW(parse_config("rho = -1\n"), ParameterError);
}

TEST(Config, HorizonMustCoverDetectionWindows) {
  EXPECT_THROW(parse_config("alpha = 1\nbeta = 1.5\nh_fwd = 50\nt_fwd = 20\n"), ParameterError);
  EXPECT_NO_THROW(parse_config("alpha = 1\nbeta = 1.5\nh_fwd = 10\nh_back = 10\nt_fwd = 20\n"));
  EXPECT_DOUBLE_EQ(
      parse_config("alpha = 1\nbeta = 1.5\nh_fwd = 10\nh_back = 10\nt_fwd = 20\nhorizon_sweep = true\n")
          .resolved_t_back(),
      -20.0);
  EXPECT_THROW(parse_config("alpha = 1\nbeta = 1.5\nh_fwd = 15\nh_back = 10\nt_fwd = 20\nhorizon_sweep = true\n"),
               ParameterError);
}

TEST(Config, CanonicalFormRoundTrips) {
  const RunConfig c = small_config();
  const std::string text = format_config(c);
  const RunConfig d = parse_config(text);
  EXPECT_EQ(format_config(d), text);
  EXPECT_EQ(model_keys(c), model_keys(d));
  RunConfig e = c;
  e.master_seed = 5;
  e.replicas = 100;
  EXPECT_EQ(model_keys(c), model_keys(e));
  e.model.rho = 2.0;
  EXPECT_NE(model_keys(c), model_keys(e));
}

TEST(OutputDir, FlagThenEnvironmentThenConfig) {
  RunConfig c = small_config();
  c.output_dir = "from_config";
  unsetenv(kOutputDirEnv);
  EXPECT_EQ(resolve_output_dir(c, std::nullopt), fs::path("from_config"));
  setenv(kOutputDirEnv, "from_env", 1);
  EXPECT_EQ(resolve_output_dir(c, std::nullopt), fs::path("from_env"));
  EXPECT_EQ(resolve_output_dir(c, std::string("from_flag")), fs::path("from_flag"));
  unsetenv(kOutputDirEnv);
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(AtomicWrite, LeavesNoTemporary) {
  TempDir tmp("atomic");
  write_file_atomic(tmp.path() / "a.txt", "hello");
  write_file_atomic(tmp.path() / "a.txt", "world");
  EXPECT_EQ(read_file(tmp.path() / "a.txt"), "world");
  EXPECT_EQ(snapshot(tmp.path()).size(), 1u);
}

TEST(Ensemble, ByteIdenticalAcrossRunsAndWorkerCounts) {
  TempDir a("det_a");
  TempDir b("det_b");
  const RunConfig c = small_config();
  const RunManifest ma = run_ensemble(c, a.path());
  RunOptions two;
  two.workers = 2;
  const RunManifest mb = run_ensemble(c, b.path(), two);
  EXPECT_EQ(snapshot(a.path()), snapshot(b.path()));
  EXPECT_EQ(ma.replicas.size(), 6u);
  EXPECT_TRUE(fs::exists(a.path() / "manifest.json"));
  EXPECT_TRUE(fs::exists(a.path() / replica_dir_name(5) / "record.json"));
  // A finished run is verified, not recomputed.
  const RunManifest again = run_ensemble(c, a.path());
  EXPECT_EQ(format_manifest_json(again), format_manifest_json(ma));
}

TEST(Ensemble, ManifestRecordsEveryFile) {
  TempDir a("manifest");
  const RunManifest m = run_ensemble(small_config(), a.path());
  const auto files = snapshot(a.path());
  ASSERT_EQ(m.files.size() + 1, files.size());  // all but the manifest itself
  for (const auto& [name, hash] : m.files) {
    ASSERT_EQ(files.count(name), 1u) << name;
    EXPECT_EQ(sha256_hex(files.at(name)), hash) << name;
  }
  EXPECT_EQ(parse_manifest_json(format_manifest_json(m)).files, m.files);
}

TEST(Ensemble, InterruptedRunResumesToIdenticalTree) {
  TempDir full("resume_full");
  TempDir part("resume_part");
  const RunConfig c = small_config();
  run_ensemble(c, full.path());
  RunOptions stop;
  stop.stop_after = 2;
  run_ensemble(c, part.path(), stop);
  EXPECT_FALSE(fs::exists(part.path() / "manifest.json"));
  EXPECT_THROW(run_ensemble(c, part.path()), ConsistencyError);
  // A stale temporary from the interruption is cleaned up.
  write_file_atomic(part.path() / "keep.txt", "x");
  fs::rename(part.path() / "keep.txt", part.path() / "stale.tmp");
  RunOptions resume;
  resume.resume = true;
  run_ensemble(c, part.path(), resume);
  EXPECT_EQ(snapshot(full.path()), snapshot(part.path()));
}

TEST(Ensemble, DifferentConfigurationInSameDirectoryIsRejected) {
  TempDir a("other_cfg");
  RunConfig c = small_config();
  run_ensemble(c, a.path());
  c.model.rho = 2.0;
  EXPECT_THROW(run_ensemble(c, a.path()), ConsistencyError);
}

TEST(Ensemble, CorruptedFileIsNamed) {
  TempDir a("corrupt");
  const RunConfig c = small_config();
  run_ensemble(c, a.path());
  const fs::path victim = a.path() / replica_dir_name(3) / "front.csv";
  std::ofstream(victim, std::ios::app) << "0.5,1\n";
  try {
    run_ensemble(c, a.path());
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find(victim.string()), std::string::npos) << e.what();
  }
  EXPECT_THROW(merge_and_report({a.path()}), IntegrityError);
}

TEST(Ensemble, CorruptedReplicaIsCaughtOnResume) {
  TempDir a("corrupt_resume");
  const RunConfig c = small_config();
  RunOptions stop;
  stop.stop_after = 2;
  run_ensemble(c, a.path(), stop);
  const fs::path victim = a.path() / replica_dir_name(0) / "renewals.csv";
  std::ofstream(victim, std::ios::app) << "junk\n";
  RunOptions resume;
  resume.resume = true;
  EXPECT_THROW(run_ensemble(c, a.path(), resume), IntegrityError);
}

TEST(Merge, CommutativeIdempotentAndSplitInvariant) {
  TempDir whole("merge_whole");
  TempDir left("merge_left");
  TempDir right("merge_right");
  RunConfig c = small_config();
  run_ensemble(c, whole.path());
  c.replicas = 3;
  run_ensemble(c, left.path());
  c.first_replica = 3;
  run_ensemble(c, right.path());

  const MergeResult w = merge_and_report({whole.path()});
  const MergeResult lr = merge_and_report({left.path(), right.path()});
  const MergeResult rl = merge_and_report({right.path(), left.path()});
  const MergeResult ww = merge_and_report({whole.path(), whole.path()});
  const MergeResult all = merge_and_report({left.path(), whole.path(), right.path()});
  EXPECT_EQ(w.n_replicas, 6u);
  for (const MergeResult* m : {&lr, &rl, &ww, &all}) {
    EXPECT_EQ(m->n_replicas, w.n_replicas);
    EXPECT_EQ(m->report_json, w.report_json);
    EXPECT_EQ(m->residuals_csv, w.residuals_csv);
    EXPECT_EQ(m->increments_csv, w.increments_csv);
    EXPECT_EQ(m->ballisticity_csv, w.ballisticity_csv);
    EXPECT_EQ(m->speed_csv, w.speed_csv);
  }
  const auto j = nlohmann::json::parse(w.report_json);
  EXPECT_TRUE(j.contains("v_hat"));

  TempDir out("merge_out");
  write_merge_outputs(w, out.path());
  for (const char* name :
       {"report.json", "residuals.csv", "increments.csv", "ballisticity.csv", "speeds.csv"}) {
    EXPECT_TRUE(fs::exists(out.path() / name)) << name;
  }
}

TEST(Merge, IncompatibleRunsListDifferingKeys) {
  TempDir a("incompat_a");
  TempDir b("incompat_b");
  RunConfig c = small_config();
  c.replicas = 2;
  run_ensemble(c, a.path());
  c.model.rho = 2.0;
  c.alpha_params.beta = 1.6;
  run_ensemble(c, b.path());
  try {
    merge_and_report({a.path(), b.path()});
    FAIL() << "expected MergeError";
  } catch (const MergeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rho"), std::string::npos) << msg;
    EXPECT_NE(msg.find("beta"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("alpha"), std::string::npos) << msg;
  }
}

TEST(Merge, UnfinishedRunIsRejected) {
  TempDir a("merge_unfinished");
  RunOptions stop;
  stop.stop_after = 1;
  run_ensemble(small_config(), a.path(), stop);
  EXPECT_THROW(merge_and_report({a.path()}), MergeError);
}

TEST(Replica, SimulationIsAFunctionOfSeedAndIndex) {
  const RunConfig c = small_config();
  const ReplicaOutput a = simulate_replica(c, 4);
  const ReplicaOutput b = simulate_replica(c, 4);
  const ReplicaOutput other = simulate_replica(c, 5);
  EXPECT_EQ(a.run.trace.jumps, b.run.trace.jumps);
  EXPECT_EQ(a.renewals, b.renewals);
  EXPECT_NE(a.system.particles, other.system.particles);
}

TEST(CouplingSuite, SmallSuitePassesAndControlsAreDetected) {
  CouplingSuiteSpec spec;
  spec.n_systems = 30;
  const auto rows = run_coupling_suite(spec, 3);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.n_systems, 30);
    EXPECT_EQ(r.n_violations, 0) << r.name;
    EXPECT_TRUE(r.negative_control_detected) << r.name;
    EXPECT_GT(r.n_events, 0u) << r.name;
  }
  const auto j = nlohmann::json::parse(format_coupling_suite_json(rows));
  ASSERT_EQ(j.size(), 4u);
  for (const auto& row : j) EXPECT_TRUE(row.at("pass").get<bool>());
}

TEST(RemanentSuite, SmallSuitePasses) {
  RemanentSuiteSpec spec;
  spec.n_systems = 20;
  const auto rows = run_remanent_suite(spec, 4);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_EQ(r.n_violations, 0) << r.name;
  EXPECT_FALSE(rows[0].has_negative_control);
  EXPECT_TRUE(rows[1].negative_control_detected);
  const auto j = nlohmann::json::parse(format_coupling_suite_json(rows));
  EXPECT_TRUE(j[0].at("negative_control_detected").is_null());
}

}  // namespace
}  // namespace ksfront

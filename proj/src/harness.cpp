#include "ksfront/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "json.hpp"
#include "ksfront/errors.hpp"

namespace ksfront {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
  model.validate();
  alpha_params.validate();
  horizons.validate(alpha_params.alpha);
  if (!(t_fwd > 0.0)) throw ParameterError("t_fwd must be positive");
  const double tb = resolved_t_back();
  if (tb > 0.0) throw ParameterError("t_back must be <= 0");
  const double need_back = horizons.h_back * (horizon_sweep ? 2.0 : 1.0);
  if (-tb < need_back) {
    throw ParameterError("t_back must reach back at least h_back (twice that with the sweep)");
  }
  const double need_fwd = horizons.h_fwd * (horizon_sweep ? 2.0 : 1.0);
  if (t_fwd < need_fwd) throw ParameterError("t_fwd must cover h_fwd (twice that with the sweep)");
  if (replicas < 1) throw ParameterError("replicas must be >= 1");
  if (first_replica < 0) throw ParameterError("first_replica must be >= 0");
  if (!(pilot_speed > 0.0)) throw ParameterError("pilot_speed must be positive");
  if (edge_margin < 0) throw ParameterError("edge_margin must be >= 0");
  if (window && window->lo > window->hi) throw ParameterError("window is empty");
  const double te = resolved_t_eval();
  if (!(te > 0.0) || te > t_fwd) throw ParameterError("t_eval must lie in (0, t_fwd]");
}

double RunConfig::resolved_t_back() const {
  return t_back ? *t_back : -horizons.h_back * (horizon_sweep ? 2.0 : 1.0);
}

double RunConfig::resolved_t_eval() const { return t_eval ? *t_eval : t_fwd / 2.0; }

IntInterval RunConfig::resolved_window() const {
  if (window) return *window;
  const double rate = std::max(model.d_r, model.d_b);
  const double spread = 6.0 * std::sqrt(rate * t_fwd);
  return {-static_cast<int>(std::ceil(spread)),
          static_cast<int>(std::ceil(2.0 * pilot_speed * t_fwd + spread))};
}

double RunConfig::base_rate() const {
  switch (model.variant) {
    case Variant::single_rate:
      return model.d_r;
    case Variant::remanent:
      return model.d_b;
    case Variant::frog:
      return model.d_r;
  }
  return model.d_r;
}

double RunConfig::base_t_fwd() const {
  // Remanent base paths are read on the blue clock, which a red particle
  // runs through d_r/d_b times faster.
  if (model.variant == Variant::remanent) return t_fwd * model.d_r / model.d_b;
  return t_fwd;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw ParameterError("config key '" + key + "': not a real number: " + v);
  }
}

long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::logic_error&) {
    throw ParameterError("config key '" + key + "': not an integer: " + v);
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &used, 0);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::logic_error&) {
    throw ParameterError("config key '" + key + "': not an unsigned 64-bit integer: " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParameterError("config key '" + key + "': expected true or false, got " + v);
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < -2147483647LL || x > 2147483647LL) {
    throw ParameterError("config key '" + key + "': out of range");
  }
  return static_cast<int>(x);
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  RunConfig c;
  std::set<std::string> seen;
  std::optional<int> wlo;
  std::optional<int> whi;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) {
      throw FormatError("config line " + std::to_string(line_no) + ": empty key or value");
    }
    if (!seen.insert(key).second) throw ParameterError("config key '" + key + "' repeated");
    if (key == "rho") {
      c.model.rho = to_real(key, val);
    } else if (key == "d_r") {
      c.model.d_r = to_real(key, val);
    } else if (key == "d_b") {
      c.model.d_b = to_real(key, val);
    } else if (key == "variant") {
      c.model.variant = parse_variant(val);
    } else if (key == "alpha") {
      c.alpha_params.alpha = to_real(key, val);
    } else if (key == "theta") {
      c.alpha_params.theta = to_real(key, val);
    } else if (key == "beta") {
      c.alpha_params.beta = to_real(key, val);
    } else if (key == "cap_c") {
      c.alpha_params.cap_c = to_int(key, val);
    } else if (key == "cap_l") {
      c.alpha_params.cap_l = to_int(key, val);
    } else if (key == "h_back") {
      c.horizons.h_back = to_real(key, val);
    } else if (key == "h_fwd") {
      c.horizons.h_fwd = to_real(key, val);
    } else if (key == "tail_tol") {
      c.horizons.tail_tol = to_real(key, val);
    } else if (key == "t_fwd") {
      c.t_fwd = to_real(key, val);
    } else if (key == "t_back") {
      c.t_back = to_real(key, val);
    } else if (key == "window_lo") {
      wlo = to_int(key, val);
    } else if (key == "window_hi") {
      whi = to_int(key, val);
    } else if (key == "pilot_speed") {
      c.pilot_speed = to_real(key, val);
    } else if (key == "edge_margin") {
      c.edge_margin = to_int(key, val);
    } else if (key == "replicas") {
      c.replicas = to_int(key, val);
    } else if (key == "first_replica") {
      c.first_replica = to_int(key, val);
    } else if (key == "master_seed") {
      c.master_seed = to_u64(key, val);
    } else if (key == "horizon_sweep") {
      c.horizon_sweep = to_bool(key, val);
    } else if (key == "t_eval") {
      c.t_eval = to_real(key, val);
    } else if (key == "include_truncated") {
      c.include_truncated = to_bool(key, val);
    } else if (key == "output_dir") {
      c.output_dir = val;
    } else {
      throw ParameterError("unknown config key '" + key + "' on line " + std::to_string(line_no));
    }
  }
  if (wlo.has_value() != whi.has_value()) {
    throw ParameterError("window_lo and window_hi must be given together");
  }
  if (wlo) c.window = IntInterval{*wlo, *whi};
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) { return parse_config(read_file(path)); }

std::map<std::string, std::string> model_keys(const RunConfig& c) {
  const IntInterval w = c.resolved_window();
  return {
      {"rho", format_double(c.model.rho)},
      {"d_r", format_double(c.model.d_r)},
      {"d_b", format_double(c.model.d_b)},
      {"variant", to_string(c.model.variant)},
      {"alpha", format_double(c.alpha_params.alpha)},
      {"theta", format_double(c.alpha_params.theta)},
      {"beta", format_double(c.alpha_params.beta)},
      {"cap_c", std::to_string(c.alpha_params.cap_c)},
      {"cap_l", std::to_string(c.alpha_params.cap_l)},
      {"h_back", format_double(c.horizons.h_back)},
      {"h_fwd", format_double(c.horizons.h_fwd)},
      {"tail_tol", format_double(c.horizons.tail_tol)},
      {"t_fwd", format_double(c.t_fwd)},
      {"t_back", format_double(c.resolved_t_back())},
      {"window_lo", std::to_string(w.lo)},
      {"window_hi", std::to_string(w.hi)},
      {"pilot_speed", format_double(c.pilot_speed)},
      {"edge_margin", std::to_string(c.edge_margin)},
      {"horizon_sweep", c.horizon_sweep ? "true" : "false"},
      {"t_eval", format_double(c.resolved_t_eval())},
      {"include_truncated", c.include_truncated ? "true" : "false"},
  };
}

std::string format_config(const RunConfig& c) {
  static const char* const kOrder[] = {
      "rho",      "d_r",         "d_b",        "variant",   "alpha",     "theta",
      "beta",     "cap_c",       "cap_l",      "h_back",    "h_fwd",     "tail_tol",
      "t_fwd",    "t_back",      "window_lo",  "window_hi", "pilot_speed", "edge_margin",
      "horizon_sweep", "t_eval", "include_truncated"};
  const auto keys = model_keys(c);
  std::string out;
  for (const char* k : kOrder) out += std::string(k) + " = " + keys.at(k) + "\n";
  out += "replicas = " + std::to_string(c.replicas) + "\n";
  out += "first_replica = " + std::to_string(c.first_replica) + "\n";
  out += "master_seed = " + std::to_string(c.master_seed) + "\n";
  return out;
}

fs::path resolve_output_dir(const RunConfig& config, const std::optional<std::string>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

// ---------------------------------------------------------------- files

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- manifest

namespace {

ojson record_json(const ReplicaRecord& r) {
  ojson j;
  j["index"] = r.index;
  j["seed"] = r.seed;
  j["n_particles"] = r.n_particles;
  j["censored"] = r.censored;
  if (r.censor_time == kNever) {
    j["censor_time"] = nullptr;
  } else {
    j["censor_time"] = r.censor_time;
  }
  j["t_end"] = r.t_end;
  j["r0"] = r.r0;
  j["n_renewals"] = r.n_renewals;
  if (r.n_renewals_wide) {
    j["n_renewals_wide"] = *r.n_renewals_wide;
  } else {
    j["n_renewals_wide"] = nullptr;
  }
  ojson files = ojson::object();
  for (const auto& [name, hash] : r.files) files[name] = hash;
  j["files"] = files;
  return j;
}

ReplicaRecord record_from_json(const nlohmann::json& j) {
  ReplicaRecord r;
  try {
    r.index = j.at("index").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n_particles = j.at("n_particles").get<std::size_t>();
    r.censored = j.at("censored").get<bool>();
    r.censor_time = j.at("censor_time").is_null() ? kNever : j.at("censor_time").get<double>();
    r.t_end = j.at("t_end").get<double>();
    r.r0 = j.at("r0").get<int>();
    r.n_renewals = j.at("n_renewals").get<std::size_t>();
    if (!j.at("n_renewals_wide").is_null()) {
      r.n_renewals_wide = j.at("n_renewals_wide").get<std::size_t>();
    }
    for (const auto& [name, hash] : j.at("files").items()) r.files[name] = hash.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed replica record: ") + e.what());
  }
  return r;
}

}  // namespace

std::string format_manifest_json(const RunManifest& m) {
  ojson j;
  j["tool_version"] = m.tool_version;
  j["ensemble_id"] = m.ensemble_id;
  j["master_seed"] = m.master_seed;
  j["config"] = m.config_text;
  j["censored_count"] = m.censored_count;
  ojson reps = ojson::array();
  for (const auto& r : m.replicas) reps.push_back(record_json(r));
  j["replicas"] = reps;
  ojson files = ojson::object();
  for (const auto& [name, hash] : m.files) files[name] = hash;
  j["files"] = files;
  return j.dump(2) + "\n";
}

RunManifest parse_manifest_json(std::string_view text) {
  RunManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.tool_version = j.at("tool_version").get<std::string>();
    m.ensemble_id = j.at("ensemble_id").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.config_text = j.at("config").get<std::string>();
    m.censored_count = j.at("censored_count").get<long>();
    for (const auto& r : j.at("replicas")) m.replicas.push_back(record_from_json(r));
    for (const auto& [name, hash] : j.at("files").items()) m.files[name] = hash.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  m.complete = true;
  return m;
}

std::string replica_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "replica_%06d", index);
  return buf;
}

// ---------------------------------------------------------------- replicas

ReplicaOutput analyse_system(const RunConfig& config, ParticleSystem system) {
  ReplicaOutput out;
  out.system = std::move(system);
  FrontOptions opt;
  opt.edge_margin = config.edge_margin;
  const auto& m = config.model;
  ParticleSystem eff;
  if (m.variant == Variant::single_rate) {
    out.run = build_front_single_rate(out.system, opt);
  } else {
    out.run = build_front_remanent(out.system, m.d_r, m.d_b, opt);
    eff = effective_system(out.system, out.run, m.d_r, m.d_b);
  }
  const ParticleSystem& followed = m.variant == Variant::single_rate ? out.system : eff;
  const RenewalContext ctx(followed, out.run, config.alpha_params.alpha);
  out.renewals = find_separation_times(ctx, config.horizons);
  if (config.horizon_sweep) {
    HorizonPolicy wide = config.horizons;
    wide.h_back *= 2.0;
    wide.h_fwd *= 2.0;
    out.renewals_wide = find_separation_times(ctx, wide);
  }
  out.attempts = run_attempt_sequence(ctx, config.alpha_params, config.horizons);
  return out;
}

ReplicaOutput simulate_replica(const RunConfig& config, int index) {
  const std::uint64_t seed =
      derive_seed(config.master_seed, static_cast<std::uint64_t>(index), Stream::initial_config);
  RandomStream rng(seed);
  const Configuration w = sample_nu(config.model.rho, config.resolved_window(), rng);
  return analyse_system(config, sample_system(w, config.base_rate(), config.resolved_t_back(),
                                              config.base_t_fwd(), seed));
}

namespace {

void remove_temporaries(const fs::path& dir) {
  std::vector<fs::path> stale;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".tmp") stale.push_back(e.path());
  }
  for (const auto& p : stale) fs::remove(p);
}

void verify_hash(const fs::path& path, const std::string& expected) {
  if (!fs::exists(path)) throw IntegrityError("missing output file " + path.string());
  if (sha256_hex(read_file(path)) != expected) {
    throw IntegrityError("content hash mismatch for " + path.string());
  }
}

ReplicaRecord verify_replica(const fs::path& dir) {
  const ReplicaRecord rec = record_from_json(nlohmann::json::parse(read_file(dir / "record.json")));
  for (const auto& [name, hash] : rec.files) verify_hash(dir / name, hash);
  return rec;
}

ReplicaRecord compute_replica(const RunConfig& config, int index, const fs::path& dir) {
  const ReplicaOutput out = simulate_replica(config, index);
  std::vector<std::pair<std::string, std::string>> files = {
      {"front.csv", format_front_csv(out.run.trace)},
      {"renewals.csv", format_renewals_csv(out.renewals)},
      {"attempts.csv", format_attempts_csv(out.attempts.attempts)},
  };
  if (out.renewals_wide) files.emplace_back("renewals_wide.csv", format_renewals_csv(*out.renewals_wide));
  ReplicaRecord rec;
  rec.index = index;
  rec.seed =
      derive_seed(config.master_seed, static_cast<std::uint64_t>(index), Stream::initial_config);
  rec.n_particles = out.system.particles.size();
  rec.censored = out.run.trace.censored;
  rec.censor_time = out.run.trace.censor_time;
  rec.t_end = out.run.trace.t_end;
  rec.r0 = out.run.trace.r0;
  rec.n_renewals = out.renewals.size();
  if (out.renewals_wide) rec.n_renewals_wide = out.renewals_wide->size();
  for (const auto& [name, content] : files) {
    write_file_atomic(dir / name, content);
    rec.files[name] = sha256_hex(content);
  }
  // The record goes last: its presence marks the replica as complete.
  write_file_atomic(dir / "record.json", record_json(rec).dump(2) + "\n");
  return rec;
}

}  // namespace

RunManifest run_ensemble(const RunConfig& config, const fs::path& out_dir,
                         const RunOptions& options) {
  config.validate();
  if (options.workers < 1) throw ParameterError("workers must be >= 1");
  fs::create_directories(out_dir);
  remove_temporaries(out_dir);

  const std::string config_text = format_config(config);
  const fs::path config_path = out_dir / "config.txt";
  if (fs::exists(config_path)) {
    if (read_file(config_path) != config_text) {
      throw ConsistencyError("output directory " + out_dir.string() +
                             " holds a run with a different configuration");
    }
  } else {
    write_file_atomic(config_path, config_text);
  }

  const fs::path manifest_path = out_dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    RunManifest m = parse_manifest_json(read_file(manifest_path));
    for (const auto& [name, hash] : m.files) verify_hash(out_dir / name, hash);
    return m;
  }

  std::vector<int> indices;
  bool any_done = false;
  for (int i = 0; i < config.replicas; ++i) {
    const int index = config.first_replica + i;
    indices.push_back(index);
    if (fs::exists(out_dir / replica_dir_name(index) / "record.json")) any_done = true;
  }
  if (any_done && !options.resume) {
    throw ConsistencyError("output directory " + out_dir.string() +
                           " holds an unfinished run; continue it with resume");
  }

  std::vector<std::optional<ReplicaRecord>> records(indices.size());
  std::atomic<std::size_t> next{0};
  std::atomic<int> computed{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (;;) {
      if (stop.load()) return;
      const std::size_t k = next.fetch_add(1);
      if (k >= indices.size()) return;
      const fs::path dir = out_dir / replica_dir_name(indices[k]);
      try {
        if (fs::exists(dir / "record.json")) {
          records[k] = verify_replica(dir);
          continue;
        }
        if (options.stop_after && computed.fetch_add(1) >= *options.stop_after) {
          stop.store(true);
          return;
        }
        records[k] = compute_replica(config, indices[k], dir);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };
  if (options.workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < options.workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  RunManifest m;
  m.ensemble_id = sha256_hex(nlohmann::json(model_keys(config)).dump()).substr(0, 16);
  m.config_text = config_text;
  m.master_seed = config.master_seed;
  for (const auto& r : records) {
    if (!r) return m;  // interrupted: no manifest
    m.replicas.push_back(*r);
    if (r->censored) ++m.censored_count;
  }
  m.files["config.txt"] = sha256_hex(config_text);
  for (const auto& r : m.replicas) {
    const std::string base = replica_dir_name(r.index) + "/";
    for (const auto& [name, hash] : r.files) m.files[base + name] = hash;
    m.files[base + "record.json"] = sha256_hex(record_json(r).dump(2) + "\n");
  }
  m.complete = true;
  write_file_atomic(manifest_path, format_manifest_json(m));
  return m;
}

// ---------------------------------------------------------------- merge

namespace {

struct LoadedReplica {
  std::uint64_t seed = 0;
  FrontTrace front;
  std::vector<RenewalRecord> renewals;
};

std::vector<std::string> differing_keys(const std::map<std::string, std::string>& a,
                                        const std::map<std::string, std::string>& b) {
  std::set<std::string> keys;
  for (const auto& [k, v] : a) keys.insert(k);
  for (const auto& [k, v] : b) keys.insert(k);
  std::vector<std::string> out;
  for (const auto& k : keys) {
    const auto ia = a.find(k);
    const auto ib = b.find(k);
    if (ia == a.end() || ib == b.end() || ia->second != ib->second) out.push_back(k);
  }
  return out;
}

std::string read_verified(const fs::path& path, const std::string& expected) {
  std::string text = read_file(path);
  if (sha256_hex(text) != expected) throw IntegrityError("content hash mismatch for " + path.string());
  return text;
}

}  // namespace

MergeResult merge_and_report(const std::vector<fs::path>& dirs) {
  if (dirs.empty()) throw ParameterError("merge_and_report: no run directories");
  std::optional<RunConfig> base;
  std::map<std::pair<std::uint64_t, int>, LoadedReplica> pool;
  for (const auto& dir : dirs) {
    const fs::path mpath = dir / "manifest.json";
    if (!fs::exists(mpath)) throw MergeError(dir.string() + " has no manifest (unfinished run?)");
    const RunManifest m = parse_manifest_json(read_file(mpath));
    const RunConfig cfg = parse_config(read_verified(dir / "config.txt", m.files.at("config.txt")));
    if (!base) {
      base = cfg;
    } else {
      const auto diff = differing_keys(model_keys(*base), model_keys(cfg));
      if (!diff.empty()) {
        std::string list;
        for (const auto& k : diff) list += (list.empty() ? "" : ", ") + k;
        throw MergeError("incompatible runs " + dirs.front().string() + " and " + dir.string() +
                         " differ in: " + list);
      }
    }
    for (const auto& rec : m.replicas) {
      const auto key = std::make_pair(m.master_seed, rec.index);
      if (pool.count(key) != 0) continue;
      const fs::path rdir = dir / replica_dir_name(rec.index);
      LoadedReplica lr;
      lr.seed = rec.seed;
      lr.front = parse_front_csv(read_verified(rdir / "front.csv", rec.files.at("front.csv")),
                                 rec.t_end);
      lr.front.censored = rec.censored;
      lr.front.censor_time = rec.censor_time;
      lr.renewals =
          parse_renewals_csv(read_verified(rdir / "renewals.csv", rec.files.at("renewals.csv")));
      pool.emplace(key, std::move(lr));
    }
  }
  const RunConfig& cfg = *base;

  std::vector<FrontTrace> fronts;
  std::vector<std::uint64_t> ids;
  std::vector<IncrementSample> samples;
  long n_index0 = 0;
  for (const auto& [key, lr] : pool) {
    fronts.push_back(lr.front);
    ids.push_back(lr.seed);
    for (const auto& s : increments_from(lr.renewals, lr.front.r0, lr.seed, cfg.include_truncated)) {
      if (s.index >= 1) {
        samples.push_back(s);
      } else {
        ++n_index0;
      }
    }
  }
  const std::uint64_t resample_seed = derive_seed(pool.begin()->first.first, 0, Stream::resample);
  const double T = cfg.t_fwd;

  MergeResult res;
  res.n_replicas = pool.size();
  EstimateReport& rep = res.report;
  rep.speed = estimate_speed(fronts, T / 2.0);
  rep.n_increments = static_cast<long>(samples.size());
  try {
    rep.sigma2_renewal = estimate_variance_renewal(samples, rep.speed.v.value, resample_seed);
  } catch (const InsufficientDataError& e) {
    rep.notes.push_back(std::string("sigma2_renewal: ") + e.what());
  }
  std::vector<double> grid;
  for (int i = 1; i <= 10; ++i) grid.push_back(T * i / 10.0);
  try {
    rep.sigma2_diffusive = estimate_variance_diffusive(fronts, grid, rep.speed.v.value, resample_seed);
  } catch (const InsufficientDataError& e) {
    rep.notes.push_back(std::string("sigma2_diffusive: ") + e.what());
  }
  try {
    rep.diagnostics = iid_diagnostics(samples);
  } catch (const InsufficientDataError& e) {
    rep.notes.push_back(std::string("iid_diagnostics: ") + e.what());
  }
  std::optional<double> sigma2;
  if (rep.sigma2_renewal && rep.sigma2_renewal->value > 0.0) {
    sigma2 = rep.sigma2_renewal->value;
  } else if (rep.sigma2_diffusive && rep.sigma2_diffusive->sigma2.value > 0.0) {
    sigma2 = rep.sigma2_diffusive->sigma2.value;
  }
  const double t_eval = cfg.resolved_t_eval();
  if (sigma2) {
    try {
      rep.gaussian_quantile_rmse =
          gaussian_profile_check(fronts, t_eval, rep.speed.v.value, *sigma2, true).rmse;
    } catch (const InsufficientDataError& e) {
      rep.notes.push_back(std::string("gaussian_profile: ") + e.what());
    }
  } else {
    rep.notes.push_back("gaussian_profile: no positive variance estimate");
  }
  if (n_index0 > 0) {
    rep.notes.push_back("excluded " + std::to_string(n_index0) +
                        " first increments (index 0) from the identically distributed pool");
  }
  res.report_json = format_report_json(rep);
  res.residuals_csv =
      format_residuals_csv(fronts, ids, t_eval, rep.speed.v.value, sigma2 ? *sigma2 : 0.0);

  res.increments_csv = "replica,index,d_kappa,d_r\n";
  for (const auto& [key, lr] : pool) {
    for (const auto& s : increments_from(lr.renewals, lr.front.r0, lr.seed, cfg.include_truncated)) {
      res.increments_csv += std::to_string(s.replica) + ',' + std::to_string(s.index) + ',' +
                            format_double(s.d_kappa) + ',' + std::to_string(s.d_r) + '\n';
    }
  }
  const auto ball = ballisticity_report(fronts, cfg.alpha_params.alpha, cfg.alpha_params.beta, grid);
  res.ballisticity_csv = "t,below_alpha_fraction,above_beta_fraction,max_ratio\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    res.ballisticity_csv += format_double(grid[i]) + ',' + format_double(ball.below_alpha_fraction[i]) +
                            ',' + format_double(ball.above_beta_fraction[i]) + ',' +
                            format_double(ball.max_ratio[i]) + '\n';
  }
  res.speed_csv = "replica,censored,v_late,v_early\n";
  for (std::size_t i = 0; i < fronts.size(); ++i) {
    const auto& f = fronts[i];
    res.speed_csv += std::to_string(ids[i]) + ',' + (f.censored ? "true" : "false") + ',' +
                     format_double((f.position_at(T) - f.position_at(T / 2)) / (T / 2)) + ',' +
                     format_double((f.position_at(T / 2) - f.position_at(T / 4)) / (T / 4)) + '\n';
  }
  return res;
}

void write_merge_outputs(const MergeResult& result, const fs::path& out_dir) {
  write_file_atomic(out_dir / "report.json", result.report_json);
  write_file_atomic(out_dir / "residuals.csv", result.residuals_csv);
  write_file_atomic(out_dir / "increments.csv", result.increments_csv);
  write_file_atomic(out_dir / "ballisticity.csv", result.ballisticity_csv);
  write_file_atomic(out_dir / "speeds.csv", result.speed_csv);
}

// ---------------------------------------------------------------- couplings

namespace {

ParticlePath scripted_path(double label, std::vector<double> times, std::vector<int> values) {
  return ParticlePath::from_segments(Label{label}, 0.0, 5.0, std::move(times), std::move(values));
}

ParticleSystem scripted_system(std::vector<ParticlePath> paths) {
  ParticleSystem s;
  s.window = {-5, 5};
  s.t_back = 0.0;
  s.t_fwd = 5.0;
  s.particles = std::move(paths);
  return s;
}

// Must stay a valid input for the single-rate builder: keeps the rightmost
// particle starting at or below 0.
ParticleSystem random_subset(const ParticleSystem& psi, RandomStream& rng) {
  ParticleSystem sub;
  sub.window = psi.window;
  sub.t_back = psi.t_back;
  sub.t_fwd = psi.t_fwd;
  std::optional<std::size_t> anchor;
  for (std::size_t i = 0; i < psi.particles.size(); ++i) {
    if (psi.particles[i].x0() <= 0 &&
        (!anchor || psi.particles[i].x0() >= psi.particles[*anchor].x0())) {
      anchor = i;
    }
  }
  for (std::size_t i = 0; i < psi.particles.size(); ++i) {
    const bool keep = rng.uniform() < 0.5;
    if (keep || (anchor && i == *anchor)) sub.particles.push_back(psi.particles[i]);
  }
  return sub;
}

}  // namespace

ScriptedPair scripted_addition_pair() {
  // lower: one particle parked at -1. upper adds one at 0 stepping to 1 at t = 1.
  ScriptedPair p;
  p.lower = scripted_system({scripted_path(0.5, {}, {-1})});
  p.upper = scripted_system({scripted_path(0.5, {}, {-1}), scripted_path(0.25, {1.0}, {0, 1})});
  return p;
}

ParticleSystem scripted_far_left_system() {
  // A single parked particle at -3: the unmodified front sits at -3, the
  // modified one at 0.
  return scripted_system({scripted_path(0.5, {}, {-3})});
}

ParticleSystem scripted_symmetrize_system() {
  // A particle at 0 stepping to 1 at t = 0.5 and one at -1 stepping down at
  // t = 1; mirrored, the second one is picked up at 1 and carries the
  // modified front to 2.
  return scripted_system(
      {scripted_path(0.5, {0.5}, {0, 1}), scripted_path(0.25, {1.0}, {-1, -2})});
}

std::vector<CouplingCheckSummary> run_coupling_suite(const CouplingSuiteSpec& spec,
                                                     std::uint64_t seed) {
  if (spec.n_systems < 1) throw ParameterError("coupling suite needs at least one system");
  std::vector<CouplingCheckSummary> rows(4);
  rows[0].name = "addition_single_rate";
  rows[1].name = "addition_modified";
  rows[2].name = "single_rate_below_modified";
  rows[3].name = "modified_below_symmetrized";
  auto tally = [](CouplingCheckSummary& row, const CouplingVerdict& v) {
    ++row.n_systems;
    row.n_events += v.n_events;
    if (!v.pass) ++row.n_violations;
    if (v.unresolved_warning) ++row.n_unresolved;
  };
  for (long i = 0; i < spec.n_systems; ++i) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i), Stream::coupling_suite);
    RandomStream rng(s);
    Configuration w = sample_nu(spec.rho, spec.window, rng);
    if (w.total_count() == 0 || w.sites().begin()->first > 0) {
      // The unmodified front needs a particle at or below 0.
      w.add(spec.window.lo, Label{0.5});
    }
    const ParticleSystem psi = sample_system(w, spec.rate, 0.0, spec.t_fwd, s);
    const ParticleSystem sub = random_subset(psi, rng);
    tally(rows[0], check_coupling_addition(sub, psi, FrontKind::single_rate));
    tally(rows[1], check_coupling_addition(sub, psi, FrontKind::modified));
    tally(rows[2], check_coupling_modified(psi));
    tally(rows[3], check_coupling_symmetrize(psi));
  }
  // Negative controls: the same comparisons with the roles swapped on
  // systems where the inequality is strict must be flagged.
  const auto pair = scripted_addition_pair();
  rows[0].negative_control_detected = !compare_fronts(build_front_single_rate(pair.upper).trace,
                                                      build_front_single_rate(pair.lower).trace)
                                           .pass;
  rows[1].negative_control_detected = !compare_fronts(build_front_modified(pair.upper).trace,
                                                      build_front_modified(pair.lower).trace)
                                           .pass;
  const auto far = scripted_far_left_system();
  rows[2].negative_control_detected =
      !compare_fronts(build_front_modified(far).trace, build_front_single_rate(far).trace).pass;
  const auto sym = scripted_symmetrize_system();
  rows[3].negative_control_detected =
      !compare_fronts(build_front_modified(symmetrize(sym).system).trace,
                      build_front_modified(sym).trace)
           .pass;
  return rows;
}

ParticleSystem scripted_retreat_system() {
  return scripted_system({scripted_path(0.5, {1.0, 2.0}, {0, 1, 0})});
}

std::vector<CouplingCheckSummary> run_remanent_suite(const RemanentSuiteSpec& spec,
                                                     std::uint64_t seed) {
  if (spec.n_systems < 1) throw ParameterError("remanent suite needs at least one system");
  if (!(spec.d_r >= spec.d_b && spec.d_b > 0.0)) {
    throw ParameterError("remanent suite needs d_r >= d_b > 0");
  }
  std::vector<CouplingCheckSummary> rows(2);
  rows[0].name = "remanent_blue_set";
  rows[0].has_negative_control = false;
  rows[1].name = "single_rate_below_remanent";
  for (long i = 0; i < spec.n_systems; ++i) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i), Stream::coupling_suite);
    RandomStream rng(s);
    Configuration w = sample_nu(spec.rho, spec.window, rng);
    if (w.total_count() == 0 || w.sites().begin()->first > 0) w.add(spec.window.lo, Label{0.5});
    const ParticleSystem psi = sample_system(w, spec.d_b, 0.0, spec.t_fwd, s);
    const CouplingVerdict blue = check_lemma6(psi, spec.d_r, spec.d_b);
    const CouplingVerdict dom = check_lemma7(psi, spec.d_r, spec.d_b);
    for (auto [row, v] : {std::pair{&rows[0], &blue}, std::pair{&rows[1], &dom}}) {
      ++row->n_systems;
      row->n_events += v->n_events;
      if (!v->pass) ++row->n_violations;
    }
  }
  const auto retreat = scripted_retreat_system();
  rows[1].negative_control_detected =
      !compare_fronts(build_front_remanent(retreat, spec.d_r, spec.d_b).trace,
                      build_front_single_rate(retreat).trace)
           .pass;
  return rows;
}

std::string format_coupling_suite_json(const std::vector<CouplingCheckSummary>& rows) {
  ojson arr = ojson::array();
  for (const auto& r : rows) {
    ojson j;
    j["name"] = r.name;
    j["n_systems"] = r.n_systems;
    j["n_violations"] = r.n_violations;
    j["n_events"] = r.n_events;
    j["n_unresolved"] = r.n_unresolved;
    if (r.has_negative_control) {
      j["negative_control_detected"] = r.negative_control_detected;
    } else {
      j["negative_control_detected"] = nullptr;
    }
    j["pass"] = r.n_violations == 0 && (!r.has_negative_control || r.negative_control_detected);
    arr.push_back(j);
  }
  return arr.dump(2) + "\n";
}

}  // namespace ksfront

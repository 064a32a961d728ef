#include "ksfront/lattice_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

#include "ksfront/errors.hpp"
#include "ksfront/walk.hpp"

namespace ksfront {

void Configuration::add(int x, Label u) {
  if (!window_.contains(x)) {
    throw ParameterError("Configuration::add: site " + std::to_string(x) + " outside window");
  }
  if (!(u.value >= 0.0 && u.value <= 1.0)) {
    throw ParameterError("Configuration::add: label outside [0, 1]");
  }
  if (!labels_.insert(u.value).second) {
    throw ParameterError("Configuration::add: duplicate label " + format_double(u.value));
  }
  auto& v = sites_[x];
  v.insert(std::upper_bound(v.begin(), v.end(), u, std::greater<>{}), u);
}

std::span<const Label> Configuration::at(int x) const {
  auto it = sites_.find(x);
  if (it == sites_.end()) return {};
  return it->second;
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::single_rate: return "single_rate";
    case Variant::remanent: return "remanent";
    case Variant::frog: return "frog";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  if (s == "single_rate") return Variant::single_rate;
  if (s == "remanent") return Variant::remanent;
  if (s == "frog") return Variant::frog;
  throw ParameterError("unknown variant '" + std::string(s) + "'");
}

void ModelParams::validate() const {
  if (!(rho > 0.0)) throw ParameterError("rho must be positive");
  switch (variant) {
    case Variant::single_rate:
      if (!(d_r > 0.0) || d_r != d_b) {
        throw ParameterError("single_rate requires d_r = d_b > 0");
      }
      break;
    case Variant::remanent:
      if (!(d_b > 0.0) || !(d_r >= d_b)) {
        throw ParameterError("remanent requires d_r >= d_b > 0");
      }
      break;
    case Variant::frog:
      if (d_b != 0.0 || !(d_r > 0.0)) throw ParameterError("frog requires d_b = 0 < d_r");
      break;
  }
}

double AlphaParams::mu() const { return mu_of(alpha, theta); }

void AlphaParams::validate() const {
  if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
  if (!(beta > alpha)) throw ParameterError("beta must exceed alpha");
  if (!(theta > 0.0)) throw ParameterError("theta must be positive");
  if (cap_c < 1) throw ParameterError("cap_c must be >= 1");
  if (cap_l < 1) throw ParameterError("cap_l must be >= 1");
  if (!(mu() > 0.0)) {
    throw ParameterError("alpha*theta - 2(cosh(theta) - 1) must be positive (got " +
                         format_double(mu()) + ")");
  }
}

namespace {

Label fresh_label(const Configuration& w, RandomStream& rng) {
  // Collisions have probability ~0 but the construction needs distinct
  // labels, so redraw.
  for (;;) {
    Label u{rng.uniform()};
    if (!w.contains_label(u)) return u;
  }
}

void fill_site(Configuration& w, int x, unsigned count, RandomStream& rng) {
  for (unsigned i = 0; i < count; ++i) w.add(x, fresh_label(w, rng));
}

}  // namespace

Configuration sample_nu(double rho, IntInterval window, RandomStream& rng) {
  if (!(rho > 0.0)) throw ParameterError("sample_nu: rho must be positive");
  if (window.empty()) throw ParameterError("sample_nu: empty window");
  Configuration w(window);
  for (int x = window.lo; x <= window.hi; ++x) fill_site(w, x, rng.poisson(rho), rng);
  return w;
}

Configuration sample_nu_plus(double rho, IntInterval window, RandomStream& rng) {
  if (window.lo < 0) throw ParameterError("sample_nu_plus: window must lie in [0, inf)");
  return sample_nu(rho, window, rng);
}

Configuration sample_nu_c_plus(double rho, int cap_c, IntInterval window, RandomStream& rng,
                               std::size_t max_rejections) {
  if (!(rho > 0.0)) throw ParameterError("sample_nu_c_plus: rho must be positive");
  if (cap_c < 1) throw ParameterError("sample_nu_c_plus: cap_c must be >= 1");
  if (window.empty() || window.lo != 0) {
    throw ParameterError("sample_nu_c_plus: window must be [0, x_max]");
  }
  Configuration w(window);
  unsigned n0 = 0;
  std::size_t tries = 0;
  for (;;) {
    n0 = rng.poisson(rho);
    if (n0 >= static_cast<unsigned>(cap_c)) break;
    if (++tries >= max_rejections) {
      throw ParameterError("sample_nu_c_plus: rejection budget exhausted for cap_c=" +
                           std::to_string(cap_c));
    }
  }
  fill_site(w, 0, n0, rng);
  for (int x = 1; x <= window.hi; ++x) fill_site(w, x, rng.poisson(rho), rng);
  return w;
}

double phi_theta(const Configuration& w, double theta) {
  if (!(theta > 0.0)) throw ParameterError("phi_theta: theta must be positive");
  double s = 0.0;
  for (const auto& [x, labels] : w.sites()) {
    if (x > 0) break;
    s += static_cast<double>(labels.size()) * std::exp(theta * x);
  }
  return s;
}

namespace {

double site_distance(std::span<const Label> a, std::span<const Label> b) {
  const std::size_t p = a.size();
  const std::size_t q = b.size();
  double d = static_cast<double>(p > q ? p - q : q - p);
  for (std::size_t i = 0; i < std::max(p, q); ++i) {
    const double ai = i < p ? a[i].value : 0.0;
    const double bi = i < q ? b[i].value : 0.0;
    d += std::abs(bi - ai);
  }
  return d;
}

}  // namespace

double config_distance(const Configuration& w1, const Configuration& w2, double theta) {
  if (!(theta > 0.0)) throw ParameterError("config_distance: theta must be positive");
  double total = 0.0;
  auto i1 = w1.sites().begin();
  auto i2 = w2.sites().begin();
  const auto e1 = w1.sites().end();
  const auto e2 = w2.sites().end();
  while (i1 != e1 || i2 != e2) {
    int x = 0;
    std::span<const Label> a;
    std::span<const Label> b;
    if (i2 == e2 || (i1 != e1 && i1->first < i2->first)) {
      x = i1->first;
      a = i1->second;
      ++i1;
    } else if (i1 == e1 || i2->first < i1->first) {
      x = i2->first;
      b = i2->second;
      ++i2;
    } else {
      x = i1->first;
      a = i1->second;
      b = i2->second;
      ++i1;
      ++i2;
    }
    total += site_distance(a, b) * std::exp(-theta * std::abs(x));
  }
  return total;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_configuration(const Configuration& w) {
  std::string out;
  out += "# window " + std::to_string(w.window().lo) + " " + std::to_string(w.window().hi) + "\n";
  for (const auto& [x, labels] : w.sites()) {
    if (labels.empty()) continue;
    out += std::to_string(x);
    out += '\t';
    out += std::to_string(labels.size());
    out += '\t';
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i) out += ',';
      out += format_double(labels[i].value);
    }
    out += '\n';
  }
  return out;
}

namespace {

int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw FormatError("bad integer for " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return v;
}

double parse_double(std::string_view s, std::string_view what) {
  try {
    std::size_t used = 0;
    const std::string str(s);
    double v = std::stod(str, &used);
    if (used != str.size()) throw FormatError("");
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad number for " + std::string(what) + ": '" + std::string(s) + "'");
  }
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Configuration parse_configuration(std::string_view text) {
  struct Row {
    int x;
    std::vector<double> labels;
  };
  std::vector<Row> rows;
  std::optional<IntInterval> window;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      int lo = 0;
      int hi = 0;
      if (hs >> key && key == "window" && hs >> lo >> hi) window = IntInterval{lo, hi};
      continue;
    }
    const auto fields = split(line, '\t');
    if (fields.size() != 3) throw FormatError("configuration line needs 3 tab-separated fields");
    Row row{parse_int(fields[0], "site"), {}};
    const int count = parse_int(fields[1], "count");
    if (count > 0) {
      for (auto f : split(fields[2], ',')) row.labels.push_back(parse_double(f, "label"));
    }
    if (static_cast<int>(row.labels.size()) != count) {
      throw FormatError("label count mismatch at site " + std::to_string(row.x));
    }
    rows.push_back(std::move(row));
  }
  if (!window) {
    IntInterval w{0, -1};
    for (const auto& r : rows) {
      if (w.empty()) {
        w = {r.x, r.x};
      } else {
        w.lo = std::min(w.lo, r.x);
        w.hi = std::max(w.hi, r.x);
      }
    }
    window = w;
  }
  Configuration cfg(*window);
  for (const auto& r : rows) {
    for (double u : r.labels) cfg.add(r.x, Label{u});
  }
  return cfg;
}

}  // namespace ksfront

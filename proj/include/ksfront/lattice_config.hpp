#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ksfront/random_stream.hpp"

namespace ksfront {

// Particle label in [0, 1]. Labels are unique within a system.
struct Label {
  double value = 0.0;
  friend auto operator<=>(const Label&, const Label&) = default;
};

// Closed integer interval [lo, hi].
struct IntInterval {
  int lo = 0;
  int hi = -1;

  bool empty() const { return hi < lo; }
  bool contains(int x) const { return lo <= x && x <= hi; }
  std::size_t size() const { return empty() ? 0 : static_cast<std::size_t>(hi - lo) + 1; }
  friend bool operator==(const IntInterval&, const IntInterval&) = default;
};

// Finite labelled configuration: for each occupied site, a strictly
// descending list of labels. Sites outside the window are empty.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(IntInterval window) : window_(window) {}

  const IntInterval& window() const { return window_; }

  // Throws ParameterError if x is outside the window or the label is
  // already present somewhere in the configuration.
  void add(int x, Label u);
  bool contains_label(Label u) const { return labels_.contains(u.value); }

  std::span<const Label> at(int x) const;
  std::size_t count_at(int x) const { return at(x).size(); }
  std::size_t total_count() const { return labels_.size(); }
  const std::map<int, std::vector<Label>>& sites() const { return sites_; }

  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.window_ == b.window_ && a.sites_ == b.sites_;
  }

 private:
  IntInterval window_;
  std::map<int, std::vector<Label>> sites_;
  std::unordered_set<double> labels_;
};

enum class Variant { single_rate, remanent, frog };

const char* to_string(Variant v);
Variant parse_variant(std::string_view s);

struct ModelParams {
  double rho = 1.0;
  double d_r = 2.0;
  double d_b = 2.0;
  Variant variant = Variant::single_rate;

  void validate() const;
};

// Slope and exponential-norm parameters of the renewal construction.
struct AlphaParams {
  double alpha = 0.5;
  double theta = 0.2;
  double beta = 0.75;
  int cap_c = 3;
  int cap_l = 5;

  double mu() const;
  // Requires 0 < alpha < beta, theta > 0, cap_c, cap_l >= 1 and mu() > 0.
  void validate() const;
};

// Poisson(rho) labels at every site of the window.
Configuration sample_nu(double rho, IntInterval window, RandomStream& rng);

// sample_nu restricted to sites >= 0.
Configuration sample_nu_plus(double rho, IntInterval window, RandomStream& rng);

// Sites >= 1 as in sample_nu; site 0 holds a Poisson(rho) count conditioned
// on being >= cap_c, drawn by rejection. Throws ParameterError when the
// window has negative sites, cap_c < 1, or the rejection budget runs out.
Configuration sample_nu_c_plus(double rho, int cap_c, IntInterval window, RandomStream& rng,
                               std::size_t max_rejections = 1'000'000);

// Sum over sites x <= 0 of |w(x)| exp(theta x).
double phi_theta(const Configuration& w, double theta);

// Two-level label metric d_theta(w1, w2) = sum_x d(w1(x), w2(x)) exp(-theta |x|),
// with d(a, b) = |q - p| + sum_i |b_i - a_i| on zero-padded descending tuples.
double config_distance(const Configuration& w1, const Configuration& w2, double theta);

// Text format: optional "# window lo hi" line, then one line per occupied
// site "x<TAB>count<TAB>label,label,..." in ascending site order, labels
// at 17 significant digits.
std::string format_configuration(const Configuration& w);
Configuration parse_configuration(std::string_view text);

// "%.17g"
std::string format_double(double v);

}  // namespace ksfront

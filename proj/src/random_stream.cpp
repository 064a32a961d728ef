#include "ksfront/random_stream.hpp"

#include <cmath>

#include "ksfront/errors.hpp"

namespace ksfront {

double RandomStream::exponential(double rate) {
  if (!(rate > 0.0)) throw ParameterError("exponential: rate must be positive");
  return -std::log(uniform_open_low()) / rate;
}

double RandomStream::normal() {
  const double u = uniform_open_low();
  const double v = uniform();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

unsigned RandomStream::poisson(double mean) {
  if (!(mean >= 0.0)) throw ParameterError("poisson: mean must be nonnegative");
  constexpr double kChunk = 30.0;
  unsigned total = 0;
  double remaining = mean;
  while (remaining > 0.0) {
    const double m = remaining > kChunk ? kChunk : remaining;
    remaining -= m;
    const double u = uniform();
    double p = std::exp(-m);
    double cdf = p;
    unsigned k = 0;
    // cdf reaches 1 up to rounding well before k = 400 for m <= 30.
    while (u >= cdf && k < 400) {
      ++k;
      p *= m / k;
      cdf += p;
    }
    total += k;
  }
  return total;
}

}  // namespace ksfront

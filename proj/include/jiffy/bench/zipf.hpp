#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <random>

namespace jiffy::bench {

// Zipf ranks over [0, n): rank r has weight 1 / (r + 1)^theta. Exact
// inverse-CDF sampling; the table is shared between copies.
class ZipfGenerator {
  using Dist = std::discrete_distribution<std::size_t>;

 public:
  ZipfGenerator(std::size_t n, double theta)
      : param_(std::make_shared<Dist::param_type>(
            n, 0.0, double(n),
            [theta](double x) { return 1.0 / std::pow(std::floor(x) + 1.0, theta); })) {}

  template <class Rng>
  std::size_t operator()(Rng& rng) {
    return dist_(rng, *param_);
  }

  // Analytic probability of `rank`.
  static double probability(std::size_t n, double theta, std::size_t rank) {
    double z = 0;
    for (std::size_t i = 1; i <= n; ++i) z += 1.0 / std::pow(double(i), theta);
    return 1.0 / std::pow(double(rank + 1), theta) / z;
  }

 private:
  std::shared_ptr<const Dist::param_type> param_;
  Dist dist_;
};

}  // namespace jiffy::bench

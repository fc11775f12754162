#pragma once

#include <cstdint>
#include <random>

namespace clover {

inline constexpr double kSqrt2 = 1.4142135623730950488;
inline constexpr double kSqrt2Pi = 2.5066282746310005024;

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal density.
double normal_pdf(double x);

/// Inverse of the standard normal CDF, accurate to full double precision
/// (rational initial guess refined by Newton steps on erfc).
double normal_quantile(double p);

/// x * ln(x) with the 0 * ln(0) := 0 convention. Requires x >= 0.
double xlnx(double x);

/// Seeded random stream. Distribution algorithms are fixed here (not
/// delegated to std:: distribution objects) so that traces reproduce
/// bit-identically for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal();

  /// Derive an independent stream for (seed, stream) without consuming
  /// state from this engine.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace clover

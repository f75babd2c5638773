#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

namespace racl {

// Parameters of the underlying normal: X = e^N(mu, var). var = 0 is the
// degenerate point mass at e^mu.
struct LogNormalParams {
  double mu = 0.0;
  double var = 0.0;
};

double implied_mean(const LogNormalParams& p);      // E[X] = e^(mu + var/2)
double implied_variance(const LogNormalParams& p);  // e^(2mu+var)(e^var - 1)

// c * X for c > 0. Zero-Lipschitz terms must be dropped by the caller.
LogNormalParams ln_scale(const LogNormalParams& p, double c);

// X * Y for independent log-normals; exact.
LogNormalParams ln_product(const LogNormalParams& a, const LogNormalParams& b);

// Moment-matching (Fenton-Wilkinson) log-normal approximation of the sum of
// independent log-normals. Implied mean/variance of the result equal the sums
// of the terms' implied means/variances exactly.
LogNormalParams fw_sum(std::span<const LogNormalParams> terms);

double normal_cdf(double z);
double normal_quantile(double p);  // p in (0,1)

double ln_mean(const LogNormalParams& p);
double ln_quantile(const LogNormalParams& p, double q);  // q in (0,1)
double ln_cdf(const LogNormalParams& p, double x);       // x <= 0 -> 0

enum class McCombine { Sum, Product };

struct McStats {
  double mean = 0.0;
  double variance = 0.0;
  double se_mean = 0.0;      // sd / sqrt(n)
  double se_variance = 0.0;  // sqrt((m4 - var^2)/n), empirical 4th moment
  double log_mean = 0.0;
  double log_variance = 0.0;
  double ks = std::numeric_limits<double>::quiet_NaN();  // set iff ks_reference
};

// Direct-sampling oracle, independent of fw_sum/ln_product code paths.
// Deterministic per (seed, tag). KS is computed between the log of the
// combined samples and the normal implied by *ks_reference.
McStats mc_oracle(std::span<const LogNormalParams> terms, McCombine combine,
                  std::size_t n, std::uint64_t seed,
                  const LogNormalParams* ks_reference = nullptr,
                  std::string_view tag = "mc");

inline double ks_sampling_error(std::size_t n) {
  return 1.0 / std::sqrt(static_cast<double>(n));
}

}  // namespace racl

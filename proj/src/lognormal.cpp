#include "racl/lognormal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "racl/rng.hpp"

namespace racl {

double implied_mean(const LogNormalParams& p) {
  return std::exp(p.mu + 0.5 * p.var);
}

double implied_variance(const LogNormalParams& p) {
  // m^2 * (e^var - 1), expm1 keeps small-variance terms accurate
  const double m = implied_mean(p);
  return m * m * std::expm1(p.var);
}

LogNormalParams ln_scale(const LogNormalParams& p, double c) {
  if (!(c > 0.0)) {
    throw std::domain_error("ln_scale: scale must be > 0 (zero-Lipschitz terms are dropped by callers)");
  }
  return {p.mu + std::log(c), p.var};
}

LogNormalParams ln_product(const LogNormalParams& a, const LogNormalParams& b) {
  return {a.mu + b.mu, a.var + b.var};
}

LogNormalParams fw_sum(std::span<const LogNormalParams> terms) {
  if (terms.empty()) {
    throw std::domain_error("fw_sum: empty term list");
  }
  if (terms.size() == 1) return terms[0];  // sum of one, exact
  double m = 0.0, v = 0.0;
  for (const auto& t : terms) {
    const double mi = std::exp(t.mu + 0.5 * t.var);
    m += mi;
    v += mi * mi * std::expm1(t.var);
  }
  const double s = std::log1p(v / (m * m));
  return {std::log(m) - 0.5 * s, s};
}

double normal_cdf(double z) {
  return 0.5 * std::erfc(-z * 0.7071067811865475244);
}

namespace {

// Acklam's rational approximation of the probit function.
double quantile_initial(double p) {
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double normal_pdf(double z) {
  return 0.3989422804014326779 * std::exp(-0.5 * z * z);
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("normal_quantile: p must lie in (0,1)");
  }
  double x = quantile_initial(p);
  // two Newton refinements against the erfc-based cdf
  for (int i = 0; i < 2; ++i) {
    const double err = normal_cdf(x) - p;
    const double pdf = normal_pdf(x);
    if (pdf <= 0.0) break;
    x -= err / pdf;
  }
  return x;
}

double ln_mean(const LogNormalParams& p) { return implied_mean(p); }

double ln_quantile(const LogNormalParams& p, double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw std::domain_error("ln_quantile: q must lie in (0,1)");
  }
  if (p.var == 0.0) return std::exp(p.mu);
  return std::exp(p.mu + std::sqrt(p.var) * normal_quantile(q));
}

double ln_cdf(const LogNormalParams& p, double x) {
  if (x <= 0.0) return 0.0;
  const double lx = std::log(x);
  if (p.var == 0.0) return lx < p.mu ? 0.0 : 1.0;
  return normal_cdf((lx - p.mu) / std::sqrt(p.var));
}

McStats mc_oracle(std::span<const LogNormalParams> terms, McCombine combine,
                  std::size_t n, std::uint64_t seed,
                  const LogNormalParams* ks_reference, std::string_view tag) {
  if (terms.empty()) throw std::domain_error("mc_oracle: empty term list");
  if (n < 2) throw std::domain_error("mc_oracle: need n >= 2");
  Rng rng(Rng::derive(seed, tag));

  std::vector<double> vals(n);
  std::vector<double> logs(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = combine == McCombine::Sum ? 0.0 : 1.0;
    for (const auto& t : terms) {
      const double draw = std::exp(t.mu + std::sqrt(t.var) * rng.normal());
      if (combine == McCombine::Sum) {
        acc += draw;
      } else {
        acc *= draw;
      }
    }
    vals[i] = acc;
    logs[i] = std::log(acc);
  }

  McStats st;
  const double dn = static_cast<double>(n);
  double sum = 0.0, lsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += vals[i];
    lsum += logs[i];
  }
  st.mean = sum / dn;
  st.log_mean = lsum / dn;
  double m2 = 0.0, m4 = 0.0, lm2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = vals[i] - st.mean;
    const double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
    const double ld = logs[i] - st.log_mean;
    lm2 += ld * ld;
  }
  st.variance = m2 / (dn - 1.0);
  m4 /= dn;
  st.log_variance = lm2 / (dn - 1.0);
  st.se_mean = std::sqrt(st.variance / dn);
  st.se_variance = std::sqrt(std::max(0.0, m4 - st.variance * st.variance) / dn);

  if (ks_reference != nullptr) {
    std::sort(logs.begin(), logs.end());
    const LogNormalParams ref = *ks_reference;
    const double sd = std::sqrt(ref.var);
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = ref.var == 0.0 ? (logs[i] < ref.mu ? 0.0 : 1.0)
                                      : normal_cdf((logs[i] - ref.mu) / sd);
      d = std::max(d, std::abs(f - static_cast<double>(i + 1) / dn));
      d = std::max(d, std::abs(f - static_cast<double>(i) / dn));
    }
    st.ks = d;
  }
  return st;
}

}  // namespace racl

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "racl/search.hpp"
#include "racl/supernet.hpp"

namespace racl::verify {

struct CaseResult {
  std::string name;
  bool pass = false;
  double value = 0.0;  // observed statistic
  double limit = 0.0;  // tolerance it is compared against
  std::string detail;
};

bool all_pass(const std::vector<CaseResult>& cases);
void print_cases(const std::vector<CaseResult>& cases, bool verbose = false);

// Moment-matched sums: |implied - empirical| <= 3 SE for mean and variance,
// and KS(log sum, matched normal) <= 0.05. Terms: <= 8 per case,
// mu in [-1,1], var in [0.0025, 0.09].
std::vector<CaseResult> fw_suite(int cases, std::size_t n, std::uint64_t seed);

// Product law is exact: KS <= 3/sqrt(n) for random pairs.
std::vector<CaseResult> product_suite(int pairs, std::size_t n, std::uint64_t seed);

// Desk-scale supernet checks: probe pairs never exceed the sampled bound,
// closed-form network distribution matches the fold of edge/node helpers,
// and matches the statistics of sampled_bound draws.
struct BoundSuiteOptions {
  int n_samples = 20;
  int n_probes = 100;
  std::size_t n_draws = 100000;
  std::uint64_t seed = 11;
};
std::vector<CaseResult> bound_suite(const SearchConfig& cfg,
                                    const BoundSuiteOptions& opts);

// Constraint surface: graph c equals the numeric path, quantile round trip,
// Pr[bound <= x] from the closed form vs Monte Carlo.
std::vector<CaseResult> constraint_suite(const SearchConfig& cfg, std::size_t n_draws,
                                         std::uint64_t seed);

// Finite-difference oracles for the requested target
// (diffgraph | arch | lagrangian | all).
std::vector<CaseResult> gradcheck_suite(const std::string& target, std::uint64_t seed);

}  // namespace racl::verify

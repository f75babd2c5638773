#include "racl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>

#include "racl/parallel.hpp"

namespace racl::verify {

using Eigen::MatrixXd;
using Eigen::VectorXi;

bool all_pass(const std::vector<CaseResult>& cases) {
  return std::all_of(cases.begin(), cases.end(),
                     [](const CaseResult& c) { return c.pass; });
}

void print_cases(const std::vector<CaseResult>& cases, bool verbose) {
  int failed = 0;
  for (const CaseResult& c : cases) {
    if (!c.pass) ++failed;
    if (verbose || !c.pass) {
      std::printf("  [%s] %-40s value=%.6g limit=%.6g %s\n",
                  c.pass ? "ok" : "FAIL", c.name.c_str(), c.value, c.limit,
                  c.detail.c_str());
    }
  }
  std::printf("%d/%zu cases within tolerance\n",
              static_cast<int>(cases.size()) - failed, cases.size());
}

std::vector<CaseResult> fw_suite(int cases, std::size_t n, std::uint64_t seed) {
  std::vector<std::vector<CaseResult>> per_case(cases);
  parallel_for(cases, [&](std::size_t ci) {
    Rng rng(Rng::derive(seed, "fw-case-" + std::to_string(ci)));
    const int k = 1 + static_cast<int>(rng.index(8));
    std::vector<LogNormalParams> terms(k);
    for (auto& t : terms) {
      t.mu = rng.uniform(-1.0, 1.0);
      t.var = rng.uniform(0.0025, 0.09);
    }
    const LogNormalParams fw = fw_sum(terms);
    const McStats st =
        mc_oracle(terms, McCombine::Sum, n, seed, &fw, "fw-mc-" + std::to_string(ci));
    const double mean_dev = std::abs(implied_mean(fw) - st.mean);
    const double var_dev = std::abs(implied_variance(fw) - st.variance);
    std::vector<CaseResult>& out = per_case[ci];
    out.push_back({"fw/mean/" + std::to_string(ci), mean_dev <= 3.0 * st.se_mean,
                   mean_dev, 3.0 * st.se_mean,
                   "terms=" + std::to_string(k)});
    out.push_back({"fw/variance/" + std::to_string(ci),
                   var_dev <= 3.0 * st.se_variance, var_dev, 3.0 * st.se_variance,
                   ""});
    out.push_back({"fw/ks/" + std::to_string(ci), st.ks <= 0.05, st.ks, 0.05, ""});
  });
  std::vector<CaseResult> out;
  for (auto& v : per_case) {
    for (auto& c : v) out.push_back(std::move(c));
  }
  return out;
}

std::vector<CaseResult> product_suite(int pairs, std::size_t n, std::uint64_t seed) {
  std::vector<CaseResult> out(pairs);
  const double limit = 3.0 * ks_sampling_error(n);
  parallel_for(pairs, [&](std::size_t ci) {
    Rng rng(Rng::derive(seed, "prod-case-" + std::to_string(ci)));
    const LogNormalParams a{rng.uniform(-1.0, 1.0), rng.uniform(0.01, 0.5)};
    const LogNormalParams b{rng.uniform(-1.0, 1.0), rng.uniform(0.01, 0.5)};
    const LogNormalParams prod = ln_product(a, b);
    const std::vector<LogNormalParams> terms{a, b};
    const McStats st = mc_oracle(terms, McCombine::Product, n, seed, &prod,
                                 "prod-mc-" + std::to_string(ci));
    out[ci] = {"product/ks/" + std::to_string(ci), st.ks <= limit, st.ks, limit, ""};
  });
  return out;
}

namespace {

// fold of the per-edge/per-node helpers, the second route of the consistency check
BoundDist fold_network_bound(const SupernetModel& model, const ArchDistribution& dist,
                             double c_const) {
  const SupernetSpec& spec = model.spec;
  const auto lambdas = op_lipschitz_table(model);
  LogNormalParams acc{std::log(c_const), 0.0};
  for (int k = 0; k < spec.n_cells; ++k) {
    const int t = spec.table_of(k);
    std::vector<BoundDist> edges(spec.n_edges());
    for (int e = 0; e < spec.n_edges(); ++e) {
      edges[e] = edge_bound_dist(dist, t, e, lambdas[k].row(e).transpose());
    }
    for (int j = 2; j < spec.n_nodes(); ++j) {
      std::vector<BoundDist> preds(j);
      for (int i = 0; i < j; ++i) preds[i] = edges[spec.edge_index(i, j)];
      const BoundDist nb = node_bound_dist(spec, dist, t, j, preds);
      if (!nb.has_value()) return std::nullopt;
      acc = ln_product(acc, *nb);
    }
  }
  return acc;
}

}  // namespace

std::vector<CaseResult> bound_suite(const SearchConfig& cfg,
                                    const BoundSuiteOptions& opts) {
  std::vector<CaseResult> out;
  const SupernetSpec spec = cfg.supernet_spec();
  Rng rng_init(Rng::derive(opts.seed, "bound-init"));
  SupernetModel model = SupernetModel::init(spec, rng_init);
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, cfg.init_sigma);
  const double c_const = constant_C(model);

  // probe pairs against the sampled bound (network-only, so / sqrt(2))
  int violations = 0;
  double worst_margin = 0.0;  // max probe ratio / bound
  Rng rng_probe(Rng::derive(opts.seed, "bound-probe"));
  for (int s = 0; s < opts.n_samples; ++s) {
    const ArchSample sample = sample_arch(spec, dist, rng_probe);
    const double bound = sampled_bound(model, sample, c_const) / std::sqrt(2.0);
    MatrixXd x(opts.n_probes, spec.input_dim), xd(opts.n_probes, spec.input_dim);
    for (int p = 0; p < opts.n_probes; ++p) {
      for (int jj = 0; jj < spec.input_dim; ++jj) {
        x(p, jj) = rng_probe.uniform();
        xd(p, jj) = x(p, jj) + 0.05 * rng_probe.normal();
      }
    }
    SupernetClassifier clf(model, sample);
    const MatrixXd z0 = clf.logits(x);
    const MatrixXd z1 = clf.logits(xd);
    for (int p = 0; p < opts.n_probes; ++p) {
      const double dz = (z1.row(p) - z0.row(p)).norm();
      const double dx = (xd.row(p) - x.row(p)).norm();
      if (dx == 0.0) continue;
      const double ratio = dz / dx;
      worst_margin = std::max(worst_margin, ratio / bound);
      if (ratio > bound) ++violations;
    }
  }
  out.push_back({"bound/validity", violations == 0, static_cast<double>(violations),
                 0.0, "worst ratio/bound = " + std::to_string(worst_margin)});

  // closed form vs fold of the edge/node helpers
  const BoundDist direct = network_bound_dist(model, dist, c_const);
  const BoundDist fold = fold_network_bound(model, dist, c_const);
  const double mu_dev = std::abs(direct->mu - fold->mu);
  const double var_dev = std::abs(direct->var - fold->var);
  out.push_back({"bound/consistency-mu", mu_dev <= 1e-10, mu_dev, 1e-10, ""});
  out.push_back({"bound/consistency-var", var_dev <= 1e-10, var_dev, 1e-10, ""});

  // closed form vs Monte Carlo over full architecture draws
  Rng rng_mc(Rng::derive(opts.seed, "bound-mc"));
  std::vector<double> logs(opts.n_draws);
  for (std::size_t d = 0; d < opts.n_draws; ++d) {
    const ArchSample s = sample_arch(spec, dist, rng_mc);
    logs[d] = std::log(sampled_bound(model, s, c_const));
  }
  const double dn = static_cast<double>(opts.n_draws);
  double lmean = 0.0;
  for (double v : logs) lmean += v;
  lmean /= dn;
  double lvar = 0.0;
  for (double v : logs) lvar += (v - lmean) * (v - lmean);
  lvar /= dn - 1.0;
  const double se = std::sqrt(lvar / dn);
  const double mean_dev_mc = std::abs(direct->mu - lmean);
  out.push_back({"bound/mc-mean", mean_dev_mc <= 3.0 * se, mean_dev_mc, 3.0 * se,
                 "mu=" + std::to_string(direct->mu)});
  std::sort(logs.begin(), logs.end());
  const double sd = std::sqrt(direct->var);
  double ks = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const double f = normal_cdf((logs[i] - direct->mu) / sd);
    ks = std::max(ks, std::abs(f - static_cast<double>(i + 1) / dn));
    ks = std::max(ks, std::abs(f - static_cast<double>(i) / dn));
  }
  out.push_back({"bound/mc-ks", ks <= 0.05, ks, 0.05, ""});

  // monotonicity: raising any mu_alpha raises the network mu
  ArchDistribution bumped = ArchDistribution::init(spec, 0.0, cfg.init_sigma);
  bumped.mu_alpha[0].value(0, 0) += 0.1;
  const BoundDist after = network_bound_dist(model, bumped, c_const);
  out.push_back({"bound/monotonic-mu", after->mu > direct->mu,
                 after->mu - direct->mu, 0.0, ""});

  // Pr[bound <= x] from the closed form vs the empirical draw fraction
  const double x_q = std::exp(direct->mu);  // near the median
  double frac = 0.0;
  for (double v : logs) {
    if (v <= std::log(x_q)) frac += 1.0;
  }
  frac /= dn;
  const double p_closed = ln_cdf(*direct, x_q);
  const double p_dev = std::abs(p_closed - frac);
  out.push_back({"bound/prob-vs-mc", p_dev <= 0.01, p_dev, 0.01, ""});
  return out;
}

std::vector<CaseResult> constraint_suite(const SearchConfig& cfg, std::size_t n_draws,
                                         std::uint64_t seed) {
  std::vector<CaseResult> out;
  const SupernetSpec spec = cfg.supernet_spec();
  Rng rng_init(Rng::derive(seed, "con-init"));
  SupernetModel model = SupernetModel::init(spec, rng_init);
  // nudge the distribution off the symmetric init so the check has texture
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, cfg.init_sigma);
  Rng rng_jit(Rng::derive(seed, "con-jitter"));
  for (graph::Parameter* p : dist.params()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      p->value.data()[i] += 0.05 * rng_jit.normal();
    }
  }
  const double c_const = constant_C(model);
  const auto lambdas = op_lipschitz_table(model);
  const double lambda_star = std::exp(network_bound_dist(model, dist, c_const)->mu);

  // graph path equals the numeric path
  graph::Tape tape;
  const ConstraintGraph cg =
      build_constraint_graph(tape, spec, dist, lambdas, c_const, cfg.eta, lambda_star);
  const BoundDist numeric = network_bound_dist(model, dist, c_const);
  const double c_numeric = constraint_value(numeric, cfg.eta, lambda_star);
  const double mu_dev = std::abs(cg.mu.scalar() - numeric->mu);
  const double var_dev = std::abs(cg.var.scalar() - numeric->var);
  const double c_dev = std::abs(cg.c.scalar() - c_numeric);
  out.push_back({"constraint/graph-mu", mu_dev <= 1e-10, mu_dev, 1e-10, ""});
  out.push_back({"constraint/graph-var", var_dev <= 1e-10, var_dev, 1e-10, ""});
  out.push_back({"constraint/graph-c", c_dev <= 1e-10, c_dev, 1e-10, ""});

  // quantile round trip
  double worst_rt = 0.0;
  for (double z = -6.0; z <= 6.0; z += 0.125) {
    worst_rt = std::max(worst_rt, std::abs(normal_quantile(normal_cdf(z)) - z));
  }
  out.push_back({"constraint/quantile-roundtrip", worst_rt <= 1e-10, worst_rt, 1e-10, ""});

  // Pr[bound <= lambda*] closed form vs Monte Carlo draws of the bound
  Rng rng_mc(Rng::derive(seed, "con-mc"));
  double frac = 0.0;
  for (std::size_t d = 0; d < n_draws; ++d) {
    const ArchSample s = sample_arch(spec, dist, rng_mc);
    if (sampled_bound(model, s, c_const) <= lambda_star) frac += 1.0;
  }
  frac /= static_cast<double>(n_draws);
  const double closed = ln_cdf(*numeric, lambda_star);
  const double dev = std::abs(closed - frac);
  out.push_back({"constraint/prob-vs-mc", dev <= 0.01, dev, 0.01,
                 "closed=" + std::to_string(closed)});
  return out;
}

namespace {

CaseResult gc_case(const std::string& name, double err, double tol) {
  return {name, err <= tol, err, tol, ""};
}

double composite_gradcheck(std::uint64_t seed) {
  Rng rng(Rng::derive(seed, "gc-comp"));
  graph::Parameter w1(MatrixXd::NullaryExpr(6, 5, [&](Eigen::Index, Eigen::Index) {
    return 0.4 * rng.normal();
  }));
  graph::Parameter w2(MatrixXd::NullaryExpr(4, 6, [&](Eigen::Index, Eigen::Index) {
    return 0.4 * rng.normal();
  }));
  graph::Parameter b(MatrixXd::NullaryExpr(1, 4, [&](Eigen::Index, Eigen::Index) {
    return 0.1 * rng.normal();
  }));
  MatrixXd x = MatrixXd::NullaryExpr(3, 5, [&](Eigen::Index, Eigen::Index) {
    return rng.normal();
  });
  MatrixXd y = one_hot((VectorXi(3) << 0, 2, 1).finished(), 4);
  std::vector<graph::Parameter*> params{&w1, &w2, &b};
  const auto eval = [&](bool want_grad) {
    graph::Tape tape;
    graph::Var h = relu(matmul(tape.constant(x), transpose(tape.param(w1))));
    graph::Var z = add_rowvec(matmul(h, transpose(tape.param(w2))), tape.param(b));
    graph::Var loss = softmax_cross_entropy(z, y);
    if (want_grad) {
      for (auto* p : params) p->zero_grad();
      tape.backward(loss);
    }
    return loss.scalar();
  };
  return graph::grad_check(eval, params, 1e-5, 64, seed);
}

double arch_gradcheck(std::uint64_t seed, bool with_lagrangian, double* ce_only_err) {
  SearchConfig cfg;
  cfg.n_cells = 2;
  cfg.n_intermediate = 2;
  cfg.width = 8;
  cfg.reduce_cells = {1};
  cfg.data.input_dim = 8;
  cfg.data.n_classes = 4;
  cfg.data.n_train = 64;
  cfg.data.n_test = 32;
  const SupernetSpec spec = cfg.supernet_spec();
  Rng rng_init(Rng::derive(seed, "gc-arch-init"));
  SupernetModel model = SupernetModel::init(spec, rng_init);
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, cfg.init_sigma);
  Rng rng_s(Rng::derive(seed, "gc-arch-sample"));
  const ArchSample sample = sample_arch(spec, dist, rng_s);
  const auto lambdas = op_lipschitz_table(model);
  const double c_const = constant_C(model);
  const double lambda_star = std::exp(network_bound_dist(model, dist, c_const)->mu);
  AdmmState admm{0.35, 0.01};

  MatrixXd x(8, spec.input_dim);
  Rng rng_x(Rng::derive(seed, "gc-arch-x"));
  VectorXi yl(8);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < spec.input_dim; ++c) x(r, c) = rng_x.uniform();
    yl(r) = static_cast<int>(rng_x.index(spec.n_classes));
  }
  const MatrixXd y = one_hot(yl, spec.n_classes);

  std::vector<graph::Parameter*> params = dist.params();
  for (graph::Parameter* p : model.weight_params()) params.push_back(p);
  const auto eval = [&](bool want_grad) {
    graph::Tape tape;
    graph::Var logits = mixture_forward(tape, model, &dist, sample,
                                        tape.constant(x), {.arch_grad = true});
    graph::Var loss = softmax_cross_entropy(logits, y);
    if (with_lagrangian) {
      const ConstraintGraph cg = build_constraint_graph(tape, spec, dist, lambdas,
                                                        c_const, 0.9, lambda_star);
      loss = augmented_lagrangian(tape, loss, cg.c, admm);
    }
    if (want_grad) {
      for (auto* p : params) p->zero_grad();
      tape.backward(loss);
    }
    return loss.scalar();
  };
  const double err = graph::grad_check(eval, params, 1e-5, 24, seed);
  if (ce_only_err != nullptr) *ce_only_err = err;
  return err;
}

}  // namespace

std::vector<CaseResult> gradcheck_suite(const std::string& target, std::uint64_t seed) {
  std::vector<CaseResult> out;
  const bool all = target == "all";
  if (all || target == "diffgraph") {
    out.push_back(gc_case("gradcheck/diffgraph-composite", composite_gradcheck(seed), 1e-5));
  }
  if (all || target == "arch") {
    out.push_back(gc_case("gradcheck/supernet-forward",
                          arch_gradcheck(seed, false, nullptr), 1e-4));
  }
  if (all || target == "lagrangian") {
    out.push_back(gc_case("gradcheck/augmented-lagrangian",
                          arch_gradcheck(seed, true, nullptr), 1e-4));
  }
  if (out.empty()) {
    throw std::invalid_argument("gradcheck target must be all|diffgraph|arch|lagrangian");
  }
  return out;
}

}  // namespace racl::verify

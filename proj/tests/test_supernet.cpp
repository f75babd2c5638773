#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "racl/dataio.hpp"
#include "racl/supernet.hpp"

using namespace racl;
using graph::Matrix;
using graph::Tape;
using graph::Var;

namespace {

SupernetSpec tiny_spec() {
  SupernetSpec s;
  s.n_cells = 2;
  s.n_intermediate = 2;
  s.width = 8;
  s.input_dim = 8;
  s.n_classes = 4;
  s.reduce_cells = {1};
  return s;
}

}  // namespace

TEST_CASE("operation constants match the rule table") {
  CHECK(op_constant(OpKind::AvgPool, 2) == doctest::Approx(0.70710678118654752));
  CHECK(op_constant(OpKind::MaxPool) == 1.0);
  CHECK(op_constant(OpKind::Skip) == 1.0);
  CHECK(op_constant(OpKind::Zero) == 0.0);
  CHECK_THROWS_AS(op_constant(OpKind::SepLinA), std::domain_error);
}

TEST_CASE("power iteration on easy matrices") {
  CHECK(power_iteration(Matrix::Identity(4, 4)).sigma == doctest::Approx(1.0));
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 5.0, 2.0, 1.0;
  CHECK(power_iteration(d).sigma == doctest::Approx(5.0).epsilon(1e-10));
  Matrix d2 = Matrix::Zero(2, 2);
  d2.diagonal() << 3.0, 1.0;
  CHECK(power_iteration(d2).sigma == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(power_iteration(Matrix::Zero(4, 6)).sigma == 0.0);
  CHECK_THROWS_AS(power_iteration(Matrix::Identity(2, 2), 0), std::invalid_argument);
}

TEST_CASE("power iteration matches the Jacobi SVD oracle") {
  Rng rng(3);
  int done = 0;
  while (done < 12) {
    const int r = 2 + static_cast<int>(rng.index(15));
    const int c = 2 + static_cast<int>(rng.index(15));
    Matrix w(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) w(i, j) = rng.normal();
    }
    const auto sv = oracles::jacobi_singular_values(w);
    if (sv.size() >= 2 && (sv[0] - sv[1]) / sv[0] < 0.05) continue;  // need a gap
    const SpectralEstimate est = power_iteration(w, 1000, 1e-14);
    CHECK(std::abs(est.sigma - sv[0]) <= 1e-8 * sv[0]);
    // u' W v reproduces sigma (the gradient-form identity)
    CHECK(est.u.dot(w * est.v) == doctest::Approx(est.sigma).epsilon(1e-10));
    ++done;
  }
}

TEST_CASE("op_lipschitz uses the spectral norm for weighted kinds") {
  SupernetSpec spec = tiny_spec();
  Rng rng(9);
  SupernetModel model = SupernetModel::init(spec, rng);
  for (int o = 0; o < kNumOps; ++o) {
    const OpWeights& op = model.cells[0][0][o];
    const double lam = op_lipschitz(op);
    if (op_has_weights(op.kind)) {
      CHECK(lam == doctest::Approx(oracles::jacobi_sigma_max(op.effective()))
                       .epsilon(1e-8));
    } else {
      CHECK(lam == op_constant(op.kind));
    }
  }
}

TEST_CASE("sampling is deterministic per seed and reparameterization-consistent") {
  const SupernetSpec spec = tiny_spec();
  ArchDistribution dist = ArchDistribution::init(spec, 0.2, 0.3);
  Rng r1(77), r2(77);
  const ArchSample a = sample_arch(spec, dist, r1);
  const ArchSample b = sample_arch(spec, dist, r2);
  for (int k = 0; k < spec.n_cells; ++k) {
    CHECK((a.alpha[k] - b.alpha[k]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.beta[k] - b.beta[k]).cwiseAbs().maxCoeff() == 0.0);
    // alpha = exp(mu + e^ls eps) elementwise
    const Matrix expect =
        (dist.mu_alpha[spec.table_of(k)].value +
         dist.log_sigma_alpha[spec.table_of(k)].value.array().exp().matrix().cwiseProduct(
             a.eps_alpha[k]))
            .array()
            .exp()
            .matrix();
    CHECK((a.alpha[k] - expect).cwiseAbs().maxCoeff() == 0.0);
  }

  // sigma -> 0 surrogate gives a deterministic sample at e^mu
  ArchDistribution tight = ArchDistribution::init(spec, 0.2, 1e-8);
  Rng r3(5);
  const ArchSample t = sample_arch(spec, tight, r3);
  CHECK(t.alpha[0].maxCoeff() == doctest::Approx(std::exp(0.2)).epsilon(1e-6));
  CHECK(t.alpha[0].minCoeff() == doctest::Approx(std::exp(0.2)).epsilon(1e-6));
}

TEST_CASE("mean of log alpha matches mu over many draws") {
  const SupernetSpec spec = tiny_spec();
  ArchDistribution dist = ArchDistribution::init(spec, 0.2, 0.3);
  Rng rng(123);
  double sum = 0.0;
  int count = 0;
  for (int rep = 0; rep < 2000; ++rep) {
    const ArchSample s = sample_arch(spec, dist, rng);
    sum += s.alpha[0].array().log().sum();
    count += static_cast<int>(s.alpha[0].size());
  }
  const double se = 0.3 / std::sqrt(static_cast<double>(count));
  CHECK(std::abs(sum / count - 0.2) <= 3.0 * se);
}

TEST_CASE("skip-only degenerate sample composes to the identity") {
  SupernetSpec spec;
  spec.n_cells = 1;
  spec.n_intermediate = 1;  // single node 2 with edges from 0 and 1
  spec.width = 6;
  spec.input_dim = 6;
  spec.n_classes = 6;
  spec.reduce_cells = {};
  Rng rng(2);
  SupernetModel model = SupernetModel::init(spec, rng);
  model.classifier_w.value = Matrix::Identity(6, 6);
  model.classifier_b.value.setZero();

  ArchSample s;
  s.alpha = {Matrix::Zero(spec.n_edges(), kNumOps)};
  s.beta = {Eigen::VectorXd::Zero(spec.n_edges())};
  s.eps_alpha = {Matrix::Zero(spec.n_edges(), kNumOps)};
  s.eps_beta = {Eigen::VectorXd::Zero(spec.n_edges())};
  s.alpha[0](spec.edge_index(0, 2), static_cast<int>(OpKind::Skip)) = 1.0;
  s.beta[0](spec.edge_index(0, 2)) = 1.0;

  Matrix x(3, 6);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = 0.1 * (i + 1);
  Tape tape;
  Var logits = mixture_forward(tape, model, nullptr, s, tape.constant(x),
                               {.arch_grad = false});
  CHECK((logits.value() - x).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("all-Zero alpha produces zero features") {
  const SupernetSpec spec = tiny_spec();
  Rng rng(4);
  SupernetModel model = SupernetModel::init(spec, rng);
  ArchSample s;
  for (int k = 0; k < spec.n_cells; ++k) {
    s.alpha.push_back(Matrix::Zero(spec.n_edges(), kNumOps));
    s.beta.push_back(Eigen::VectorXd::Ones(spec.n_edges()));
    s.eps_alpha.push_back(Matrix::Zero(spec.n_edges(), kNumOps));
    s.eps_beta.push_back(Eigen::VectorXd::Zero(spec.n_edges()));
  }
  model.classifier_b.value.setZero();
  Matrix x = Matrix::Constant(2, spec.input_dim, 0.5);
  Tape tape;
  Var logits = mixture_forward(tape, model, nullptr, s, tape.constant(x),
                               {.arch_grad = false});
  CHECK(logits.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mixture forward passes the gradient check") {
  const SupernetSpec spec = tiny_spec();
  Rng rng(6);
  SupernetModel model = SupernetModel::init(spec, rng);
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
  Rng rs(7);
  const ArchSample sample = sample_arch(spec, dist, rs);
  Matrix x(5, spec.input_dim);
  Eigen::VectorXi yl(5);
  Rng rx(8);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < spec.input_dim; ++c) x(r, c) = rx.uniform();
    yl(r) = static_cast<int>(rx.index(spec.n_classes));
  }
  const Matrix y = one_hot(yl, spec.n_classes);

  std::vector<graph::Parameter*> params = dist.params();
  for (auto* p : model.weight_params()) params.push_back(p);
  const auto eval = [&](bool want) {
    Tape tape;
    Var logits = mixture_forward(tape, model, &dist, sample, tape.constant(x),
                                 {.arch_grad = true});
    Var loss = graph::softmax_cross_entropy(logits, y);
    if (want) {
      for (auto* p : params) p->zero_grad();
      tape.backward(loss);
    }
    return loss.scalar();
  };
  CHECK(graph::grad_check(eval, params, 1e-5, 16, 11) <= 1e-4);
}

TEST_CASE("edge and node bound distributions") {
  const SupernetSpec spec = tiny_spec();
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, 1e-9);

  SUBCASE("skip-only edge with a point-mass alpha is the unit bound") {
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(kNumOps);
    lam(static_cast<int>(OpKind::Skip)) = 1.0;
    const BoundDist b = edge_bound_dist(dist, kTableNormal, 0, lam);
    REQUIRE(b.has_value());
    CHECK(b->mu == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b->var == doctest::Approx(0.0));
  }

  SUBCASE("all-zero lambdas give the zero-bound marker") {
    const Eigen::VectorXd lam = Eigen::VectorXd::Zero(kNumOps);
    CHECK(!edge_bound_dist(dist, kTableNormal, 0, lam).has_value());
  }

  SUBCASE("two unit-lambda ops with iid LN(0,0.25) weights") {
    ArchDistribution d2 = ArchDistribution::init(spec, 0.0, 0.5);  // var 0.25
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(kNumOps);
    lam(static_cast<int>(OpKind::Skip)) = 1.0;
    lam(static_cast<int>(OpKind::MaxPool)) = 1.0;
    const BoundDist b = edge_bound_dist(d2, kTableNormal, 0, lam);
    REQUIRE(b.has_value());
    CHECK(b->mu == doctest::Approx(0.75175106090049618).epsilon(1e-12));
    CHECK(b->var == doctest::Approx(0.13279223931889825).epsilon(1e-12));
  }

  SUBCASE("single predecessor with point-mass beta passes the edge through") {
    ArchDistribution d3 = ArchDistribution::init(spec, 0.0, 1e-9);
    std::vector<BoundDist> edges(2);
    edges[0] = LogNormalParams{0.4, 0.02};
    edges[1] = std::nullopt;
    const BoundDist nb = node_bound_dist(spec, d3, kTableNormal, 2, edges);
    REQUIRE(nb.has_value());
    CHECK(nb->mu == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(nb->var == doctest::Approx(0.02).epsilon(1e-6));
  }

  SUBCASE("degenerate beta and edges give the deterministic sum") {
    ArchDistribution d4 = ArchDistribution::init(spec, std::log(2.0), 1e-12);
    std::vector<BoundDist> edges(2);
    edges[0] = LogNormalParams{std::log(3.0), 0.0};
    edges[1] = LogNormalParams{std::log(5.0), 0.0};
    // both beta ~ point mass 2 -> node = 2*3 + 2*5 = 16
    const BoundDist nb = node_bound_dist(spec, d4, kTableNormal, 2, edges);
    REQUIRE(nb.has_value());
    CHECK(std::exp(nb->mu) == doctest::Approx(16.0).epsilon(1e-9));
    CHECK(nb->var <= 1e-10);
  }
}

TEST_CASE("network bound equals the explicit fold and scales with duplication") {
  SupernetSpec one;
  one.n_cells = 1;
  one.n_intermediate = 1;
  one.width = 8;
  one.input_dim = 8;
  one.n_classes = 4;
  one.reduce_cells = {};
  Rng rng(13);
  SupernetModel m1 = SupernetModel::init(one, rng);
  ArchDistribution dist = ArchDistribution::init(one, 0.1, 0.2);

  // single cell, single node, C = 1: equals the node bound itself
  const auto lambdas = op_lipschitz_table(m1);
  std::vector<BoundDist> edges(one.n_edges());
  for (int e = 0; e < one.n_edges(); ++e) {
    edges[e] = edge_bound_dist(dist, kTableNormal, e, lambdas[0].row(e).transpose());
  }
  std::vector<BoundDist> preds{edges[one.edge_index(0, 2)], edges[one.edge_index(1, 2)]};
  const BoundDist node = node_bound_dist(one, dist, kTableNormal, 2, preds);
  const BoundDist net = network_bound_dist(m1, dist, 1.0);
  REQUIRE(net.has_value());
  CHECK(net->mu == doctest::Approx(node->mu).epsilon(1e-12));
  CHECK(net->var == doctest::Approx(node->var).epsilon(1e-12));

  // duplicating the cell doubles both sums
  SupernetSpec two = one;
  two.n_cells = 2;
  SupernetModel m2 = SupernetModel::init(two, rng);
  // same weights in both cells so the per-cell lambdas match cell 0 of m1
  m2.cells[0] = m1.cells[0];
  m2.cells[1] = m1.cells[0];
  const BoundDist net2 = network_bound_dist(m2, dist, 1.0);
  CHECK(net2->mu == doctest::Approx(2.0 * node->mu).epsilon(1e-10));
  CHECK(net2->var == doctest::Approx(2.0 * node->var).epsilon(1e-10));
}

TEST_CASE("network bound mu is strictly increasing in any mu_alpha") {
  const SupernetSpec spec = tiny_spec();
  Rng rng(19);
  SupernetModel model = SupernetModel::init(spec, rng);
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
  const double c_const = constant_C(model);
  const double base = network_bound_dist(model, dist, c_const)->mu;
  Rng pick(23);
  for (int rep = 0; rep < 10; ++rep) {
    ArchDistribution bumped = ArchDistribution::init(spec, 0.0, 0.15);
    const int t = static_cast<int>(pick.index(2));
    const int e = static_cast<int>(pick.index(spec.n_edges()));
    int o = static_cast<int>(pick.index(kNumOps));
    if (static_cast<OpKind>(o) == OpKind::Zero) o = static_cast<int>(OpKind::Skip);
    bumped.mu_alpha[t].value(e, o) += 0.05;
    CHECK(network_bound_dist(model, bumped, c_const)->mu > base);
  }
}

TEST_CASE("sampled bound trivia") {
  SupernetSpec spec;
  spec.n_cells = 1;
  spec.n_intermediate = 2;
  spec.width = 8;
  spec.input_dim = 8;
  spec.n_classes = 4;
  spec.reduce_cells = {};
  Rng rng(29);
  SupernetModel model = SupernetModel::init(spec, rng);

  // skip-only sample, beta 1, one predecessor per node: per-node sums are 1
  ArchSample s;
  s.alpha = {Matrix::Zero(spec.n_edges(), kNumOps)};
  s.beta = {Eigen::VectorXd::Zero(spec.n_edges())};
  s.eps_alpha = {Matrix::Zero(spec.n_edges(), kNumOps)};
  s.eps_beta = {Eigen::VectorXd::Zero(spec.n_edges())};
  s.alpha[0](spec.edge_index(0, 2), static_cast<int>(OpKind::Skip)) = 1.0;
  s.beta[0](spec.edge_index(0, 2)) = 1.0;
  s.alpha[0](spec.edge_index(1, 3), static_cast<int>(OpKind::Skip)) = 1.0;
  s.beta[0](spec.edge_index(1, 3)) = 1.0;
  CHECK(sampled_bound(model, s, 1.0) == doctest::Approx(1.0));

  // a Zero-only edge on every path kills the bound
  ArchSample z = s;
  z.alpha[0].setZero();
  z.alpha[0](spec.edge_index(0, 2), static_cast<int>(OpKind::Zero)) = 1.0;
  CHECK(sampled_bound(model, z, 1.0) == 0.0);
}

TEST_CASE("constant_C is sqrt(2) times the classifier spectral norm") {
  const SupernetSpec spec = tiny_spec();
  Rng rng(31);
  SupernetModel model = SupernetModel::init(spec, rng);
  model.classifier_w.value = Matrix::Identity(spec.n_classes, spec.final_width());
  CHECK(constant_C(model) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  Matrix d = Matrix::Zero(spec.n_classes, spec.final_width());
  d(0, 0) = 2.0;
  d(1, 1) = 1.0;
  model.classifier_w.value = d;
  CHECK(constant_C(model) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-10));
  Rng rng2(37);
  for (int i = 0; i < model.classifier_w.value.size(); ++i) {
    model.classifier_w.value.data()[i] = rng2.normal();
  }
  CHECK(constant_C(model) ==
        doctest::Approx(std::sqrt(2.0) *
                        oracles::jacobi_sigma_max(model.classifier_w.value))
            .epsilon(1e-8));
}

TEST_CASE("discretize picks dominant ops, honors ties, matches brute force") {
  const SupernetSpec spec = tiny_spec();

  SUBCASE("dominant mean wins") {
    ArchDistribution dist = ArchDistribution::init(spec, -5.0, 0.1);
    for (int e = 0; e < spec.n_edges(); ++e) {
      dist.mu_alpha[0].value(e, static_cast<int>(OpKind::DilLinB)) = 5.0;
      dist.mu_alpha[1].value(e, static_cast<int>(OpKind::DilLinB)) = 5.0;
    }
    const Genotype g = discretize(spec, dist);
    for (const auto& node : g.normal) {
      CHECK(node[0].op == OpKind::DilLinB);
      CHECK(node[1].op == OpKind::DilLinB);
    }
  }

  SUBCASE("symmetric scores pick the lower-index predecessors and op") {
    ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.1);
    const Genotype g = discretize(spec, dist);
    for (const auto& node : g.normal) {
      CHECK(node[0].pred == 0);
      CHECK(node[1].pred == 1);
      CHECK(node[0].op == OpKind::SepLinA);  // lowest op index on ties
    }
    CHECK(g == oracles::discretize_bruteforce(spec, dist));
  }

  SUBCASE("random distributions match exhaustive enumeration") {
    Rng rng(41);
    for (int rep = 0; rep < 25; ++rep) {
      ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
      for (graph::Parameter* p : dist.params()) {
        for (int i = 0; i < p->value.size(); ++i) {
          p->value.data()[i] += rng.normal();
        }
      }
      const Genotype g = discretize(spec, dist);
      g.validate(spec);
      CHECK(g == oracles::discretize_bruteforce(spec, dist));
    }
  }

  SUBCASE("per-edge argmax is invariant under a common mu shift on the edge") {
    Rng rng(43);
    ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
    for (graph::Parameter* p : dist.params()) {
      for (int i = 0; i < p->value.size(); ++i) p->value.data()[i] += rng.normal();
    }
    const Genotype before = discretize(spec, dist);
    dist.mu_alpha[0].value.row(0).array() += 0.7;  // same shift for every op
    const Genotype after = discretize(spec, dist);
    // the op chosen on edge 0 (if selected) must be unchanged
    for (std::size_t n = 0; n < before.normal.size(); ++n) {
      for (int s = 0; s < 2; ++s) {
        if (spec.edge_index(before.normal[n][s].pred, static_cast<int>(n) + 2) == 0) {
          bool found = false;
          for (int s2 = 0; s2 < 2; ++s2) {
            if (after.normal[n][s2].pred == before.normal[n][s].pred) {
              CHECK(after.normal[n][s2].op == before.normal[n][s].op);
              found = true;
            }
          }
          CHECK(found);  // a uniformly raised edge can only become more attractive
        }
      }
    }
  }
}

TEST_CASE("genotype JSON round trip is lossless") {
  const SupernetSpec spec = tiny_spec();
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
  Rng rng(47);
  for (graph::Parameter* p : dist.params()) {
    for (int i = 0; i < p->value.size(); ++i) p->value.data()[i] += rng.normal();
  }
  const Genotype g = discretize(spec, dist);
  const auto j = genotype_to_json(g, spec, 123);
  const Genotype back = genotype_from_json(j);
  CHECK(g == back);
  CHECK(j.at("meta").at("seed").get<std::uint64_t>() == 123);
  CHECK(j.at("meta").at("spec_hash").get<std::uint64_t>() == spec.hash());
  CHECK(j.at("widths").size() == 2);
}

TEST_CASE("discrete forward equals the mixture forward at the degenerate sample") {
  const SupernetSpec spec = tiny_spec();
  Rng rng(53);
  SupernetModel model = SupernetModel::init(spec, rng);
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
  Rng rj(59);
  for (graph::Parameter* p : dist.params()) {
    for (int i = 0; i < p->value.size(); ++i) p->value.data()[i] += 0.3 * rj.normal();
  }
  const Genotype geno = discretize(spec, dist);
  const ArchSample degenerate = genotype_sample(spec, geno);
  DiscreteModel dm = DiscreteModel::from_supernet(model, geno);

  Matrix x(4, spec.input_dim);
  Rng rx(61);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rx.uniform();

  Tape t1, t2;
  Var mixture = mixture_forward(t1, model, nullptr, degenerate, t1.constant(x),
                                {.arch_grad = false});
  Var discrete = discrete_forward(t2, dm, t2.constant(x));
  CHECK((mixture.value() - discrete.value()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("bound validity on random probes") {
  const SupernetSpec spec = tiny_spec();
  Rng rng(67);
  SupernetModel model = SupernetModel::init(spec, rng);
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
  const double c_const = constant_C(model);
  Rng rp(71);
  for (int s = 0; s < 5; ++s) {
    const ArchSample sample = sample_arch(spec, dist, rp);
    const double bound = sampled_bound(model, sample, c_const) / std::sqrt(2.0);
    SupernetClassifier clf(model, sample);
    for (int p = 0; p < 20; ++p) {
      Matrix x(1, spec.input_dim), xd(1, spec.input_dim);
      for (int c = 0; c < spec.input_dim; ++c) {
        x(0, c) = rp.uniform();
        xd(0, c) = x(0, c) + 0.02 * rp.normal();
      }
      const double dz = (clf.logits(xd) - clf.logits(x)).norm();
      const double dx = (xd - x).norm();
      if (dx == 0.0) continue;
      CHECK(dz / dx <= bound);
    }
  }
}

TEST_CASE("forward rejects mismatched input width") {
  const SupernetSpec spec = tiny_spec();
  Rng rng(73);
  SupernetModel model = SupernetModel::init(spec, rng);
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
  Rng rs(74);
  const ArchSample s = sample_arch(spec, dist, rs);
  Tape tape;
  CHECK_THROWS_AS(mixture_forward(tape, model, nullptr, s,
                                  tape.constant(Matrix::Zero(2, spec.input_dim + 1)),
                                  {.arch_grad = false}),
                  std::invalid_argument);
}

TEST_CASE("genotype validation rejects malformed tables") {
  const SupernetSpec spec = tiny_spec();
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
  Genotype g = discretize(spec, dist);
  Genotype bad = g;
  bad.normal[0][0].pred = bad.normal[0][1].pred;
  CHECK_THROWS_AS(bad.validate(spec), std::invalid_argument);
  Genotype bad2 = g;
  bad2.reduce[1][0].pred = 5;
  CHECK_THROWS_AS(bad2.validate(spec), std::invalid_argument);
  Genotype bad3 = g;
  bad3.normal[0][0].op = OpKind::Zero;
  CHECK_THROWS_AS(bad3.validate(spec), std::invalid_argument);
}

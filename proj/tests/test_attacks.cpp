#include <doctest.h>

#include <cmath>

#include "racl/attacks.hpp"
#include "racl/dataio.hpp"
#include "racl/search.hpp"
#include "racl/supernet.hpp"

using namespace racl;
using Eigen::MatrixXd;
using Eigen::VectorXi;

namespace {

struct Fixture {
  SearchConfig cfg;
  DiscreteModel model;
  Dataset data;

  static Fixture make(std::uint64_t seed = 3, int retrain_epochs = 6) {
    SearchConfig cfg;
    cfg.n_cells = 2;
    cfg.n_intermediate = 2;
    cfg.width = 8;
    cfg.reduce_cells = {1};
    cfg.data.input_dim = 8;
    cfg.data.n_classes = 4;
    cfg.data.n_train = 512;
    cfg.data.n_test = 128;
    cfg.seed = seed;
    cfg.retrain_epochs = retrain_epochs;
    const SupernetSpec spec = cfg.supernet_spec();
    ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
    Rng rj(Rng::derive(seed, "fixture-jitter"));
    for (graph::Parameter* p : dist.params()) {
      for (int i = 0; i < p->value.size(); ++i) p->value.data()[i] += 0.2 * rj.normal();
    }
    const Genotype geno = discretize(spec, dist);
    Fixture f{cfg, retrain(geno, cfg, false, nullptr), load_dataset(cfg.data)};
    return f;
  }
};

MatrixXd head_x(const Dataset& d, int n) { return d.x_test.topRows(n); }
VectorXi head_y(const Dataset& d, int n) { return d.y_test.head(n); }

}  // namespace

TEST_CASE("fgsm with eps 0 is the identity; negated loss flips the step") {
  Fixture f = Fixture::make();
  DiscreteClassifier clf(f.model);
  const MatrixXd x = head_x(f.data, 16);
  const VectorXi y = head_y(f.data, 16);
  const MatrixXd same = fgsm(clf, x, y, 0.0);
  CHECK((same - x).cwiseAbs().maxCoeff() == 0.0);

  // sign antisymmetry before clipping: compare the raw deltas
  const MatrixXd g = clf.loss_input_grad(x, y).second;
  const MatrixXd dpos = g.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
  const MatrixXd dneg = (-g).unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
  CHECK((dpos + dneg).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(fgsm(clf, x, y, -0.1), std::invalid_argument);
}

TEST_CASE("fgsm is bitwise identical to one-step pgd without random start") {
  Fixture f = Fixture::make();
  DiscreteClassifier clf(f.model);
  const MatrixXd x = head_x(f.data, 32);
  const VectorXi y = head_y(f.data, 32);
  AttackConfig cfg;
  cfg.kind = AttackConfig::Kind::PGD;
  cfg.epsilon = 8.0 / 255.0;
  cfg.steps = 1;
  cfg.step_size = cfg.epsilon;
  cfg.random_start = false;
  Rng rng(1);
  const MatrixXd a = fgsm(clf, x, y, cfg.epsilon);
  const MatrixXd b = pgd(clf, x, y, cfg, rng);
  REQUIRE(a.rows() == b.rows());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    CHECK(a.data()[i] == b.data()[i]);  // bitwise
  }
}

TEST_CASE("pgd with zero step size stays at the start point") {
  Fixture f = Fixture::make();
  DiscreteClassifier clf(f.model);
  const MatrixXd x = head_x(f.data, 8);
  const VectorXi y = head_y(f.data, 8);
  AttackConfig cfg;
  cfg.steps = 5;
  cfg.step_size = 0.0;
  cfg.random_start = false;
  Rng rng(2);
  const MatrixXd out = pgd(clf, x, y, cfg, rng);
  CHECK((out - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ball and box containment holds for every attack") {
  Fixture f = Fixture::make();
  DiscreteClassifier clf(f.model);
  const MatrixXd x = head_x(f.data, 64);
  const VectorXi y = head_y(f.data, 64);
  Rng rng(5);
  Rng cfg_rng(6);
  for (int rep = 0; rep < 12; ++rep) {
    AttackConfig cfg;
    cfg.kind = rep % 3 == 0 ? AttackConfig::Kind::FGSM
                            : (rep % 3 == 1 ? AttackConfig::Kind::PGD
                                            : AttackConfig::Kind::MIM);
    cfg.epsilon = cfg_rng.uniform(0.0, 0.2);
    cfg.steps = 1 + static_cast<int>(cfg_rng.index(8));
    cfg.step_size = cfg_rng.uniform(0.001, 0.1);
    cfg.random_start = rep % 2 == 0;
    const MatrixXd adv = generate_attack(clf, x, y, cfg, rng);
    CHECK((adv - x).cwiseAbs().maxCoeff() <= cfg.epsilon + 1e-9);
    CHECK(adv.minCoeff() >= 0.0);
    CHECK(adv.maxCoeff() <= 1.0);
  }
}

TEST_CASE("attacks are deterministic per seed including random start") {
  Fixture f = Fixture::make();
  DiscreteClassifier clf(f.model);
  const MatrixXd x = head_x(f.data, 16);
  const VectorXi y = head_y(f.data, 16);
  AttackConfig cfg;
  cfg.random_start = true;
  Rng r1(9), r2(9);
  const MatrixXd a = pgd(clf, x, y, cfg, r1);
  const MatrixXd b = pgd(clf, x, y, cfg, r2);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mim with zero decay steps like pgd; one step follows the fgsm direction") {
  Fixture f = Fixture::make();
  DiscreteClassifier clf(f.model);
  const MatrixXd x = head_x(f.data, 24);
  const VectorXi y = head_y(f.data, 24);
  AttackConfig cfg;
  cfg.steps = 4;
  cfg.step_size = 0.01;
  cfg.random_start = false;
  cfg.momentum_decay = 0.0;
  Rng r1(3), r2(3);
  const MatrixXd via_mim = mim(clf, x, y, cfg, r1);
  const MatrixXd via_pgd = pgd(clf, x, y, cfg, r2);
  CHECK((via_mim - via_pgd).cwiseAbs().maxCoeff() == 0.0);

  AttackConfig one = cfg;
  one.steps = 1;
  one.step_size = one.epsilon;
  one.momentum_decay = 1.0;
  Rng r3(4);
  const MatrixXd m1 = mim(clf, x, y, one, r3);
  const MatrixXd direct = fgsm(clf, x, y, one.epsilon);
  CHECK((m1 - direct).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero gradient leaves the mim accumulator untouched") {
  Fixture f = Fixture::make();
  // zero out the whole network so the input gradient vanishes
  for (graph::Parameter* p : f.model.params()) p->value.setZero();
  DiscreteClassifier clf(f.model);
  const MatrixXd x = head_x(f.data, 4);
  const VectorXi y = head_y(f.data, 4);
  AttackConfig cfg;
  cfg.kind = AttackConfig::Kind::MIM;
  cfg.steps = 3;
  cfg.random_start = false;
  Rng rng(7);
  const MatrixXd out = mim(clf, x, y, cfg, rng);
  CHECK((out - x).cwiseAbs().maxCoeff() == 0.0);  // sign of a zero accumulator is 0
}

TEST_CASE("pgd maximizes the loss at least as well as fgsm on most examples") {
  Fixture f = Fixture::make(11, 10);
  DiscreteClassifier clf(f.model);
  const int n = 64;
  const MatrixXd x = head_x(f.data, n);
  const VectorXi y = head_y(f.data, n);
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.steps = 7;
  cfg.step_size = 0.015;
  cfg.random_start = false;
  Rng rng(13);
  const MatrixXd via_pgd = pgd(clf, x, y, cfg, rng);
  const MatrixXd via_fgsm = fgsm(clf, x, y, cfg.epsilon);
  int pgd_wins = 0;
  for (int i = 0; i < n; ++i) {
    const double lp = clf.loss_input_grad(via_pgd.row(i), y.segment(i, 1)).first;
    const double lf = clf.loss_input_grad(via_fgsm.row(i), y.segment(i, 1)).first;
    if (lp >= lf - 1e-12) ++pgd_wins;
  }
  CHECK(pgd_wins >= static_cast<int>(0.9 * n));
}

TEST_CASE("adversarial train step raises the loss it trains on") {
  Fixture f = Fixture::make(17, 4);
  DiscreteClassifier clf(f.model);
  AttackConfig cfg;
  cfg.epsilon = 8.0 / 255.0;
  cfg.steps = 7;
  cfg.step_size = 2.0 / 255.0;
  Rng rng(19);
  int raised = 0, batches = 0;
  for (int start = 0; start + 32 <= f.data.x_test.rows(); start += 32) {
    const MatrixXd xb = f.data.x_test.middleRows(start, 32);
    const VectorXi yb = f.data.y_test.segment(start, 32);
    const double clean_loss = clf.loss_input_grad(xb, yb).first;
    const MatrixXd xadv = generate_attack(clf, xb, yb, cfg, rng);
    const double adv_loss = clf.loss_input_grad(xadv, yb).first;
    if (adv_loss >= clean_loss) ++raised;
    ++batches;
  }
  CHECK(raised >= static_cast<int>(0.95 * batches));

  // eps = 0 reduces to a clean training step
  AttackConfig zero = cfg;
  zero.epsilon = 0.0;
  zero.random_start = false;
  const MatrixXd xb = head_x(f.data, 32);
  const VectorXi yb = head_y(f.data, 32);
  f.model.zero_grads();
  const double adv_step_loss = adv_train_step(clf, xb, yb, zero, rng);
  f.model.zero_grads();
  const double clean_step_loss = clf.loss_backward(xb, yb);
  CHECK(adv_step_loss == clean_step_loss);
}

TEST_CASE("robust accuracy at eps 0 equals clean accuracy") {
  Fixture f = Fixture::make(23, 6);
  DiscreteClassifier clf(f.model);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  cfg.random_start = false;
  Rng rng(29);
  const EvalMetrics m = robust_accuracy(clf, f.data.x_test, f.data.y_test, cfg, rng);
  CHECK(m.adv_acc == m.clean_acc);
}

TEST_CASE("transfer evaluation: source == target equals white box, dims checked") {
  Fixture f = Fixture::make(31, 6);
  DiscreteClassifier clf(f.model);
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.steps = 5;
  cfg.step_size = 0.02;
  cfg.random_start = true;
  Rng r1(37), r2(37);
  const EvalMetrics white = robust_accuracy(clf, f.data.x_test, f.data.y_test, cfg, r1);
  const double same = transfer_eval(clf, clf, f.data.x_test, f.data.y_test, cfg, r2);
  CHECK(same == doctest::Approx(white.adv_acc));

  // eps = 0 transfer reports the target's clean accuracy
  AttackConfig zero = cfg;
  zero.epsilon = 0.0;
  zero.random_start = false;
  Rng r3(41);
  const double clean = transfer_eval(clf, clf, f.data.x_test, f.data.y_test, zero, r3);
  CHECK(clean == doctest::Approx(accuracy(clf, f.data.x_test, f.data.y_test)));

  SearchConfig other_cfg = f.cfg;
  other_cfg.data.input_dim = 12;
  other_cfg.width = 12;
  other_cfg.data.n_train = 480;
  other_cfg.data.n_test = 120;
  const SupernetSpec spec2 = other_cfg.supernet_spec();
  ArchDistribution d2 = ArchDistribution::init(spec2, 0.0, 0.15);
  const Genotype geno2 = discretize(spec2, d2);
  DiscreteModel m2 = retrain(geno2, other_cfg, false, nullptr);
  DiscreteClassifier clf2(m2);
  Rng r4(43);
  CHECK_THROWS_AS(transfer_eval(clf2, clf, f.data.x_test, f.data.y_test, cfg, r4),
                  std::invalid_argument);
}

TEST_CASE("transfer from a weaker surrogate is no stronger than white box") {
  // two independently retrained models on the same task
  Fixture target = Fixture::make(47, 10);
  SearchConfig scfg = target.cfg;
  scfg.seed = 48;
  const SupernetSpec spec = scfg.supernet_spec();
  ArchDistribution dist = ArchDistribution::init(spec, 0.0, 0.15);
  Rng rj(Rng::derive(scfg.seed, "fixture-jitter"));
  for (graph::Parameter* p : dist.params()) {
    for (int i = 0; i < p->value.size(); ++i) p->value.data()[i] += 0.2 * rj.normal();
  }
  DiscreteModel source_model = retrain(discretize(spec, dist), scfg, false, nullptr);
  DiscreteClassifier src(source_model), tgt(target.model);
  AttackConfig cfg;
  cfg.epsilon = 0.06;
  cfg.steps = 7;
  cfg.step_size = 0.02;
  cfg.random_start = true;
  Rng r1(51), r2(51);
  const double white = robust_accuracy(tgt, target.data.x_test, target.data.y_test,
                                       cfg, r1).adv_acc;
  const double transferred =
      transfer_eval(src, tgt, target.data.x_test, target.data.y_test, cfg, r2);
  CHECK(transferred >= white - 1e-12);
}

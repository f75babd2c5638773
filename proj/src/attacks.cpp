#include "racl/attacks.hpp"

#include <cmath>
#include <stdexcept>

namespace racl {

using Eigen::MatrixXd;
using Eigen::VectorXi;

const char* attack_name(AttackConfig::Kind k) {
  switch (k) {
    case AttackConfig::Kind::FGSM: return "fgsm";
    case AttackConfig::Kind::PGD: return "pgd";
    case AttackConfig::Kind::MIM: return "mim";
  }
  return "?";
}

AttackConfig::Kind attack_from_name(std::string_view name) {
  if (name == "fgsm") return AttackConfig::Kind::FGSM;
  if (name == "pgd") return AttackConfig::Kind::PGD;
  if (name == "mim") return AttackConfig::Kind::MIM;
  throw std::invalid_argument("unknown attack: " + std::string(name));
}

namespace {

MatrixXd sign_of(const MatrixXd& g) {
  return g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

MatrixXd clamp_box(const MatrixXd& x, double lo, double hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Shared delta-form core for PGD and MIM.
MatrixXd iterated_attack(Classifier& model, const MatrixXd& x, const VectorXi& y,
                         const AttackConfig& cfg, Rng& rng, bool momentum) {
  if (cfg.steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
  if (cfg.epsilon < 0.0) throw std::invalid_argument("attack: epsilon must be >= 0");
  MatrixXd delta = MatrixXd::Zero(x.rows(), x.cols());
  if (cfg.random_start && cfg.epsilon > 0.0) {
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
      delta.data()[i] = rng.uniform(-cfg.epsilon, cfg.epsilon);
    }
  }
  MatrixXd g_acc = MatrixXd::Zero(x.rows(), x.cols());
  for (int step = 0; step < cfg.steps; ++step) {
    const MatrixXd x_cur = clamp_box(x + delta, cfg.input_lo, cfg.input_hi);
    const MatrixXd grad = model.loss_input_grad(x_cur, y).second;
    MatrixXd dir;
    if (momentum) {
      // rowwise l1 normalization; rows with zero gradient leave g_acc alone
      for (Eigen::Index r = 0; r < grad.rows(); ++r) {
        const double l1 = grad.row(r).cwiseAbs().sum();
        if (l1 == 0.0) continue;
        g_acc.row(r) = cfg.momentum_decay * g_acc.row(r) + grad.row(r) / l1;
      }
      dir = sign_of(g_acc);
    } else {
      dir = sign_of(grad);
    }
    delta = (delta + cfg.step_size * dir)
                .cwiseMax(-cfg.epsilon)
                .cwiseMin(cfg.epsilon);
  }
  return clamp_box(x + delta, cfg.input_lo, cfg.input_hi);
}

}  // namespace

MatrixXd fgsm(Classifier& model, const MatrixXd& x, const VectorXi& y,
              double epsilon, double input_lo, double input_hi) {
  if (epsilon < 0.0) throw std::invalid_argument("fgsm: epsilon must be >= 0");
  const MatrixXd grad = model.loss_input_grad(x, y).second;
  const MatrixXd delta = epsilon * sign_of(grad);
  return clamp_box(x + delta, input_lo, input_hi);
}

MatrixXd pgd(Classifier& model, const MatrixXd& x, const VectorXi& y,
             const AttackConfig& cfg, Rng& rng) {
  return iterated_attack(model, x, y, cfg, rng, /*momentum=*/false);
}

MatrixXd mim(Classifier& model, const MatrixXd& x, const VectorXi& y,
             const AttackConfig& cfg, Rng& rng) {
  return iterated_attack(model, x, y, cfg, rng, /*momentum=*/true);
}

MatrixXd generate_attack(Classifier& model, const MatrixXd& x, const VectorXi& y,
                         const AttackConfig& cfg, Rng& rng) {
  switch (cfg.kind) {
    case AttackConfig::Kind::FGSM:
      return fgsm(model, x, y, cfg.epsilon, cfg.input_lo, cfg.input_hi);
    case AttackConfig::Kind::PGD:
      return pgd(model, x, y, cfg, rng);
    case AttackConfig::Kind::MIM:
      return mim(model, x, y, cfg, rng);
  }
  throw std::logic_error("generate_attack: unreachable");
}

double adv_train_step(TrainableClassifier& model, const MatrixXd& x,
                      const VectorXi& y, const AttackConfig& cfg, Rng& rng) {
  const MatrixXd x_adv = generate_attack(model, x, y, cfg, rng);
  model.zero_grads();
  return model.loss_backward(x_adv, y);
}

double accuracy(Classifier& model, const MatrixXd& x, const VectorXi& y) {
  const MatrixXd z = model.logits(x);
  int hits = 0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    Eigen::Index best = 0;
    z.row(r).maxCoeff(&best);
    if (static_cast<int>(best) == y(r)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(z.rows());
}

namespace {

template <typename MakeAdv>
double adv_accuracy_batched(Classifier& target, const MatrixXd& x, const VectorXi& y,
                            int batch_size, MakeAdv&& make_adv) {
  int hits = 0;
  for (Eigen::Index start = 0; start < x.rows(); start += batch_size) {
    const Eigen::Index n = std::min<Eigen::Index>(batch_size, x.rows() - start);
    const MatrixXd xb = x.middleRows(start, n);
    const VectorXi yb = y.segment(start, n);
    const MatrixXd xadv = make_adv(xb, yb);
    const MatrixXd z = target.logits(xadv);
    for (Eigen::Index r = 0; r < n; ++r) {
      Eigen::Index best = 0;
      z.row(r).maxCoeff(&best);
      if (static_cast<int>(best) == yb(r)) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

}  // namespace

EvalMetrics robust_accuracy(Classifier& model, const MatrixXd& x, const VectorXi& y,
                            const AttackConfig& cfg, Rng& rng, int batch_size) {
  EvalMetrics m;
  m.clean_acc = accuracy(model, x, y);
  m.adv_acc = adv_accuracy_batched(
      model, x, y, batch_size, [&](const MatrixXd& xb, const VectorXi& yb) {
        return generate_attack(model, xb, yb, cfg, rng);
      });
  return m;
}

double transfer_eval(Classifier& source, Classifier& target, const MatrixXd& x,
                     const VectorXi& y, const AttackConfig& cfg, Rng& rng,
                     int batch_size) {
  if (source.input_dim() != target.input_dim() ||
      source.n_classes() != target.n_classes()) {
    throw std::invalid_argument("transfer_eval: model dimensions differ");
  }
  return adv_accuracy_batched(
      target, x, y, batch_size, [&](const MatrixXd& xb, const VectorXi& yb) {
        return generate_attack(source, xb, yb, cfg, rng);
      });
}

}  // namespace racl

#pragma once

#include <Eigen/Core>
#include <string_view>

#include "racl/classifier.hpp"
#include "racl/rng.hpp"

namespace racl {

struct AttackConfig {
  enum class Kind { FGSM, PGD, MIM };
  Kind kind = Kind::PGD;
  double epsilon = 8.0 / 255.0;  // total l-inf budget, input units
  int steps = 7;
  double step_size = 2.0 / 255.0;
  double momentum_decay = 1.0;  // MIM
  bool random_start = true;     // PGD/MIM
  double input_lo = 0.0, input_hi = 1.0;
};

const char* attack_name(AttackConfig::Kind k);
AttackConfig::Kind attack_from_name(std::string_view name);

// x~ = clip(x + eps * sign(grad L), input range)
Eigen::MatrixXd fgsm(Classifier& model, const Eigen::MatrixXd& x,
                     const Eigen::VectorXi& y, double epsilon,
                     double input_lo = 0.0, double input_hi = 1.0);

// delta-form iteration: delta <- clamp_ball(delta + step * sign(grad));
// emitted point is clamp_box(x + delta), so containment is structural.
Eigen::MatrixXd pgd(Classifier& model, const Eigen::MatrixXd& x,
                    const Eigen::VectorXi& y, const AttackConfig& cfg, Rng& rng);

// accumulated direction g <- decay * g + grad / ||grad||_1 (rowwise)
Eigen::MatrixXd mim(Classifier& model, const Eigen::MatrixXd& x,
                    const Eigen::VectorXi& y, const AttackConfig& cfg, Rng& rng);

Eigen::MatrixXd generate_attack(Classifier& model, const Eigen::MatrixXd& x,
                                const Eigen::VectorXi& y, const AttackConfig& cfg,
                                Rng& rng);

// Generates adversarial inputs for the batch, then runs the training backward
// pass on them; returns the loss for the caller's weight optimizer.
double adv_train_step(TrainableClassifier& model, const Eigen::MatrixXd& x,
                      const Eigen::VectorXi& y, const AttackConfig& cfg, Rng& rng);

double accuracy(Classifier& model, const Eigen::MatrixXd& x,
                const Eigen::VectorXi& y);

struct EvalMetrics {
  double clean_acc = 0.0;
  double adv_acc = 0.0;
};

EvalMetrics robust_accuracy(Classifier& model, const Eigen::MatrixXd& x,
                            const Eigen::VectorXi& y, const AttackConfig& cfg,
                            Rng& rng, int batch_size = 256);

// Adversarial examples from source, accuracy measured on target.
double transfer_eval(Classifier& source, Classifier& target,
                     const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                     const AttackConfig& cfg, Rng& rng, int batch_size = 256);

}  // namespace racl

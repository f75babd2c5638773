#pragma once

#include <Eigen/Core>
#include <utility>

namespace racl {

// Minimal model surface needed by attack generation and evaluation.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int input_dim() const = 0;
  virtual int n_classes() const = 0;
  virtual Eigen::MatrixXd logits(const Eigen::MatrixXd& x) = 0;
  // mean cross-entropy over the batch and its gradient w.r.t. x
  virtual std::pair<double, Eigen::MatrixXd> loss_input_grad(
      const Eigen::MatrixXd& x, const Eigen::VectorXi& y) = 0;
};

// A classifier whose weights can be trained (used by adversarial training).
class TrainableClassifier : public Classifier {
 public:
  virtual void zero_grads() = 0;
  // mean cross-entropy; fills parameter gradients for the weight optimizer
  virtual double loss_backward(const Eigen::MatrixXd& x, const Eigen::VectorXi& y) = 0;
};

}  // namespace racl

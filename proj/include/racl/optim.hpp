#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "racl/diffgraph.hpp"

namespace racl {

// SGD with momentum and decoupled-from-nothing L2 (decay added to the grad),
// matching the usual deep-learning semantics.
struct SgdMomentum {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::vector<Eigen::MatrixXd> velocity;

  void step(std::span<graph::Parameter* const> params) {
    if (velocity.size() != params.size()) {
      velocity.clear();
      for (graph::Parameter* p : params) {
        velocity.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
      }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      graph::Parameter& p = *params[i];
      const Eigen::MatrixXd g = p.grad + weight_decay * p.value;
      velocity[i] = momentum * velocity[i] + g;
      p.value -= lr * velocity[i];
    }
  }
};

struct Adam {
  double lr = 6e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::int64_t t = 0;
  std::vector<Eigen::MatrixXd> m, v;

  void step(std::span<graph::Parameter* const> params) {
    if (m.size() != params.size()) {
      m.clear();
      v.clear();
      for (graph::Parameter* p : params) {
        m.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
        v.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
      }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      graph::Parameter& p = *params[i];
      const Eigen::MatrixXd g = p.grad + weight_decay * p.value;
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
      const Eigen::MatrixXd mhat = m[i] / bc1;
      const Eigen::MatrixXd vhat = v[i] / bc2;
      p.value -= lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps).matrix());
    }
  }
};

}  // namespace racl

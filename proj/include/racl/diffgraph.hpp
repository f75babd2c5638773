#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace racl::graph {

using Matrix = Eigen::MatrixXd;

// A trainable tensor that outlives any single tape. Gradients accumulate by
// addition; callers zero them explicitly before each backward pass.
struct Parameter {
  Matrix value;
  Matrix grad;

  Parameter() = default;
  explicit Parameter(Matrix v)
      : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

class Tape;

// Handle into a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
};

// One forward/backward episode over a DAG of dense double tensors. Nodes are
// appended in evaluation order, which is the topological order the backward
// sweep walks in reverse.
class Tape {
 public:
  Var constant(Matrix m);
  Var scalar(double v);
  Var param(Parameter& p);  // leaf; flushes grad into p.grad on backward

  // root must be 1x1; visits each node exactly once in reverse order
  void backward(Var root);

  const Matrix& value_of(int idx) const { return nodes_[idx].value; }
  Matrix& grad_of(int idx) { return nodes_[idx].grad; }
  std::size_t size() const { return nodes_.size(); }

  int push(Matrix value, std::function<void(Tape&, int)> back);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, int)> back;  // empty for constants
    Matrix* sink = nullptr;                // Parameter grad target for leaves
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value_of(idx); }
inline double Var::scalar() const { return value()(0, 0); }

// elementwise / structural primitives
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var div(Var a, Var b);  // elementwise, b must be nonzero
Var matmul(Var a, Var b);
Var transpose(Var a);
Var exp(Var a);
Var log(Var a);  // requires strictly positive input
Var relu(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var mul_scalar(Var a, Var s);   // s is 1x1
Var add_rowvec(Var a, Var r);   // r is 1 x cols, broadcast over rows
Var sum_all(Var a);
Var mean_all(Var a);
Var max_all(Var a);             // ties route to the first element
Var concat_cols(std::span<const Var> parts);
Var block(Var a, int i, int j, int p, int q);
Var maxpool_pairs(Var a);       // (B, 2m) -> (B, m), disjoint windows

// mean over rows of (logsumexp(z) - z . y); onehot rows must sum to 1
Var softmax_cross_entropy(Var logits, const Matrix& onehot);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Central-difference check of backward against eval. eval(true) must zero the
// params' grads, run forward+backward, and return the loss; eval(false) just
// returns the loss. Checks up to max_coords random coordinates per tensor and
// returns the max relative error |a - n| / max(|a|, |n|, guard).
double grad_check(const std::function<double(bool want_grad)>& eval,
                  std::span<Parameter* const> params, double h = 1e-5,
                  int max_coords = 64, std::uint64_t seed = 0,
                  double guard = 1e-6);

}  // namespace racl::graph

#include "racl/diffgraph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "racl/rng.hpp"

namespace racl::graph {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

void require_same_shape(Var a, Var b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()) + ")");
}

}  // namespace

int Tape::push(Matrix value, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Matrix m) { return {this, push(std::move(m), {})}; }

Var Tape::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::param(Parameter& p) {
  const int idx = push(p.value, {});
  nodes_[idx].sink = &p.grad;
  return {this, idx};
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::domain_error("backward: root from another tape");
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::domain_error("backward: root must be scalar");
  }
  for (auto& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[root.idx].grad(0, 0) = 1.0;
  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.back) n.back(*this, i);
    if (n.sink != nullptr) *n.sink += n.grad;
  }
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tape& t = *a.tape;
  const int pa = a.idx, pb = b.idx;
  const int idx = t.push(a.value() + b.value(), [pa, pb](Tape& tp, int self) {
    tp.grad_of(pa) += tp.grad_of(self);
    tp.grad_of(pb) += tp.grad_of(self);
  });
  return {&t, idx};
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tape& t = *a.tape;
  const int pa = a.idx, pb = b.idx;
  const int idx = t.push(a.value() - b.value(), [pa, pb](Tape& tp, int self) {
    tp.grad_of(pa) += tp.grad_of(self);
    tp.grad_of(pb) -= tp.grad_of(self);
  });
  return {&t, idx};
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tape& t = *a.tape;
  const int pa = a.idx, pb = b.idx;
  const int idx =
      t.push(a.value().cwiseProduct(b.value()), [pa, pb](Tape& tp, int self) {
        tp.grad_of(pa) += tp.grad_of(self).cwiseProduct(tp.value_of(pb));
        tp.grad_of(pb) += tp.grad_of(self).cwiseProduct(tp.value_of(pa));
      });
  return {&t, idx};
}

Var div(Var a, Var b) {
  require_same_shape(a, b, "div");
  require((b.value().array() != 0.0).all(), "div: zero divisor");
  Tape& t = *a.tape;
  const int pa = a.idx, pb = b.idx;
  const int idx =
      t.push(a.value().cwiseQuotient(b.value()), [pa, pb](Tape& tp, int self) {
        const Matrix& g = tp.grad_of(self);
        const Matrix& bv = tp.value_of(pb);
        tp.grad_of(pa) += g.cwiseQuotient(bv);
        tp.grad_of(pb) -=
            g.cwiseProduct(tp.value_of(pa)).cwiseQuotient(bv.cwiseProduct(bv));
      });
  return {&t, idx};
}

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tape& t = *a.tape;
  const int pa = a.idx, pb = b.idx;
  const int idx = t.push(a.value() * b.value(), [pa, pb](Tape& tp, int self) {
    const Matrix& g = tp.grad_of(self);
    tp.grad_of(pa) += g * tp.value_of(pb).transpose();
    tp.grad_of(pb) += tp.value_of(pa).transpose() * g;
  });
  return {&t, idx};
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const int pa = a.idx;
  const int idx = t.push(a.value().transpose(), [pa](Tape& tp, int self) {
    tp.grad_of(pa) += tp.grad_of(self).transpose();
  });
  return {&t, idx};
}

Var exp(Var a) {
  Tape& t = *a.tape;
  const int pa = a.idx;
  const int idx = t.push(a.value().array().exp().matrix(), [pa](Tape& tp, int self) {
    tp.grad_of(pa) += tp.grad_of(self).cwiseProduct(tp.value_of(self));
  });
  return {&t, idx};
}

Var log(Var a) {
  if (!(a.value().array() > 0.0).all()) {
    throw std::domain_error("log: input must be strictly positive");
  }
  Tape& t = *a.tape;
  const int pa = a.idx;
  const int idx = t.push(a.value().array().log().matrix(), [pa](Tape& tp, int self) {
    tp.grad_of(pa) += tp.grad_of(self).cwiseQuotient(tp.value_of(pa));
  });
  return {&t, idx};
}

Var relu(Var a) {
  Tape& t = *a.tape;
  const int pa = a.idx;
  const int idx = t.push(a.value().cwiseMax(0.0), [pa](Tape& tp, int self) {
    tp.grad_of(pa) += tp.grad_of(self).cwiseProduct(
        (tp.value_of(pa).array() > 0.0).cast<double>().matrix());
  });
  return {&t, idx};
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  const int pa = a.idx;
  const int idx = t.push(c * a.value(), [pa, c](Tape& tp, int self) {
    tp.grad_of(pa) += c * tp.grad_of(self);
  });
  return {&t, idx};
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape;
  const int pa = a.idx;
  const int idx = t.push((a.value().array() + c).matrix(), [pa](Tape& tp, int self) {
    tp.grad_of(pa) += tp.grad_of(self);
  });
  return {&t, idx};
}

Var mul_scalar(Var a, Var s) {
  require(s.rows() == 1 && s.cols() == 1, "mul_scalar: scale must be 1x1");
  Tape& t = *a.tape;
  const int pa = a.idx, ps = s.idx;
  const int idx =
      t.push(s.value()(0, 0) * a.value(), [pa, ps](Tape& tp, int self) {
        const Matrix& g = tp.grad_of(self);
        tp.grad_of(pa) += tp.value_of(ps)(0, 0) * g;
        tp.grad_of(ps)(0, 0) += g.cwiseProduct(tp.value_of(pa)).sum();
      });
  return {&t, idx};
}

Var add_rowvec(Var a, Var r) {
  require(r.rows() == 1 && r.cols() == a.cols(), "add_rowvec: need 1 x cols vector");
  Tape& t = *a.tape;
  const int pa = a.idx, pr = r.idx;
  Matrix out = a.value();
  out.rowwise() += r.value().row(0);
  const int idx = t.push(std::move(out), [pa, pr](Tape& tp, int self) {
    const Matrix& g = tp.grad_of(self);
    tp.grad_of(pa) += g;
    tp.grad_of(pr) += g.colwise().sum();
  });
  return {&t, idx};
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  const int pa = a.idx;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const int idx = t.push(std::move(out), [pa](Tape& tp, int self) {
    tp.grad_of(pa).array() += tp.grad_of(self)(0, 0);
  });
  return {&t, idx};
}

Var mean_all(Var a) {
  Tape& t = *a.tape;
  const int pa = a.idx;
  const double n = static_cast<double>(a.rows() * a.cols());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  const int idx = t.push(std::move(out), [pa, n](Tape& tp, int self) {
    tp.grad_of(pa).array() += tp.grad_of(self)(0, 0) / n;
  });
  return {&t, idx};
}

Var max_all(Var a) {
  Tape& t = *a.tape;
  const int pa = a.idx;
  Eigen::Index mi = 0, mj = 0;
  const double m = a.value().maxCoeff(&mi, &mj);
  Matrix out(1, 1);
  out(0, 0) = m;
  const int idx = t.push(std::move(out), [pa, mi, mj](Tape& tp, int self) {
    tp.grad_of(pa)(mi, mj) += tp.grad_of(self)(0, 0);
  });
  return {&t, idx};
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no parts");
  Tape& t = *parts[0].tape;
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> idxs;
  std::vector<Eigen::Index> offs, widths;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    idxs.push_back(p.idx);
    offs.push_back(off);
    widths.push_back(p.cols());
    off += p.cols();
  }
  const int idx = t.push(std::move(out), [idxs, offs, widths](Tape& tp, int self) {
    const Matrix& g = tp.grad_of(self);
    for (std::size_t k = 0; k < idxs.size(); ++k) {
      tp.grad_of(idxs[k]) += g.middleCols(offs[k], widths[k]);
    }
  });
  return {&t, idx};
}

Var block(Var a, int i, int j, int p, int q) {
  require(i >= 0 && j >= 0 && p >= 1 && q >= 1 && i + p <= a.rows() &&
              j + q <= a.cols(),
          "block: out of range");
  Tape& t = *a.tape;
  const int pa = a.idx;
  const int idx =
      t.push(a.value().block(i, j, p, q), [pa, i, j, p, q](Tape& tp, int self) {
        tp.grad_of(pa).block(i, j, p, q) += tp.grad_of(self);
      });
  return {&t, idx};
}

Var maxpool_pairs(Var a) {
  require(a.cols() % 2 == 0, "maxpool_pairs: width must be even");
  Tape& t = *a.tape;
  const int pa = a.idx;
  const Eigen::Index rows = a.rows(), half = a.cols() / 2;
  Matrix out(rows, half);
  const Matrix& v = a.value();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < half; ++c) {
      out(r, c) = std::max(v(r, 2 * c), v(r, 2 * c + 1));
    }
  }
  const int idx = t.push(std::move(out), [pa, rows, half](Tape& tp, int self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& v = tp.value_of(pa);
    Matrix& gp = tp.grad_of(pa);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < half; ++c) {
        // ties route to the lower index
        if (v(r, 2 * c) >= v(r, 2 * c + 1)) {
          gp(r, 2 * c) += g(r, c);
        } else {
          gp(r, 2 * c + 1) += g(r, c);
        }
      }
    }
  });
  return {&t, idx};
}

Var softmax_cross_entropy(Var logits, const Matrix& onehot) {
  require(logits.rows() == onehot.rows() && logits.cols() == onehot.cols(),
          "softmax_cross_entropy: label shape mismatch");
  Tape& t = *logits.tape;
  const int pz = logits.idx;
  const Matrix& z = logits.value();
  const Eigen::Index batch = z.rows();
  double loss = 0.0;
  for (Eigen::Index r = 0; r < batch; ++r) {
    const double m = z.row(r).maxCoeff();
    const double lse = m + std::log((z.row(r).array() - m).exp().sum());
    loss += lse - z.row(r).dot(onehot.row(r));
  }
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(batch);
  const Matrix labels = onehot;
  const int idx = t.push(std::move(out), [pz, labels, batch](Tape& tp, int self) {
    const double g = tp.grad_of(self)(0, 0) / static_cast<double>(batch);
    const Matrix& z = tp.value_of(pz);
    Matrix& gz = tp.grad_of(pz);
    for (Eigen::Index r = 0; r < batch; ++r) {
      const double m = z.row(r).maxCoeff();
      Eigen::ArrayXd e = (z.row(r).array() - m).exp();
      e /= e.sum();
      gz.row(r) += g * (e.matrix().transpose() - labels.row(r));
    }
  });
  return {&t, idx};
}

double grad_check(const std::function<double(bool)>& eval,
                  std::span<Parameter* const> params, double h, int max_coords,
                  std::uint64_t seed, double guard) {
  eval(true);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  Rng rng(Rng::derive(seed, "gradcheck"));
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const Eigen::Index total = p.value.size();
    std::vector<Eigen::Index> coords;
    if (total <= max_coords) {
      for (Eigen::Index i = 0; i < total; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords; ++i) {
        coords.push_back(static_cast<Eigen::Index>(rng.index(total)));
      }
    }
    for (const Eigen::Index ci : coords) {
      double* x = p.value.data() + ci;
      const double saved = *x;
      *x = saved + h;
      const double fp = eval(false);
      *x = saved - h;
      const double fm = eval(false);
      *x = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi].data()[ci];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), guard});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace racl::graph

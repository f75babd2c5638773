#include "racl/supernet.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace racl {

using graph::Matrix;
using graph::Tape;
using graph::Var;

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

Matrix gaussian_matrix(int rows, int cols, Rng& rng, double std) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = std * rng.normal();
  }
  return m;
}

// Orthonormal map (rows x cols): norm exactly 1, used for the fixed stem.
Matrix orthonormal_map(int rows, int cols, Rng& rng) {
  if (rows == cols) return Matrix::Identity(rows, cols);
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  const Matrix g = gaussian_matrix(big, small, rng, 1.0);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(big, small);
  return rows <= cols ? Matrix(q.transpose()) : q;
}

// (1/sqrt(m)) [I I ... I]: maps the m-block concat back to one block width.
Matrix merge_map(int block_w, int m) {
  Matrix out(block_w, block_w * m);
  out.setZero();
  const double s = 1.0 / std::sqrt(static_cast<double>(m));
  for (int b = 0; b < m; ++b) {
    out.block(0, b * block_w, block_w, block_w) =
        s * Matrix::Identity(block_w, block_w);
  }
  return out;
}

// Disjoint stride-2 average pooling, optionally zero-padded back to in_w.
Matrix avgpool_matrix(int in_w, bool pad) {
  const int half = in_w / 2;
  Matrix p(pad ? in_w : half, in_w);
  p.setZero();
  for (int r = 0; r < half; ++r) {
    p(r, 2 * r) = 0.5;
    p(r, 2 * r + 1) = 0.5;
  }
  return p;
}

Matrix pad_matrix(int half, int out_w) {  // [I; 0] as (out_w x half)
  Matrix p(out_w, half);
  p.setZero();
  p.topRows(half) = Matrix::Identity(half, half);
  return p;
}

Matrix subsample_matrix(int in_w) {  // even coordinates, (in_w/2 x in_w)
  const int half = in_w / 2;
  Matrix p(half, in_w);
  p.setZero();
  for (int r = 0; r < half; ++r) p(r, 2 * r) = 1.0;
  return p;
}

Matrix banded_mask(int out_w, int in_w, int dilation) {
  Matrix m(out_w, in_w);
  m.setZero();
  const int stride = in_w / out_w;  // 1 or 2
  for (int r = 0; r < out_w; ++r) {
    const int center = r * stride;
    for (int k = -1; k <= 1; ++k) {
      const int c = center + k * dilation;
      if (c >= 0 && c < in_w) m(r, c) = 1.0;
    }
  }
  return m;
}

int seplin_rank(OpKind kind, int out_w) {
  return std::max(1, kind == OpKind::SepLinA ? out_w / 4 : out_w / 2);
}

OpWeights make_op_weights(OpKind kind, int in_w, int out_w, Rng& rng) {
  OpWeights ow;
  ow.kind = kind;
  ow.in_w = in_w;
  ow.out_w = out_w;
  const double std_in = 1.0 / std::sqrt(static_cast<double>(in_w));
  switch (kind) {
    case OpKind::SepLinA:
    case OpKind::SepLinB: {
      const int r = seplin_rank(kind, out_w);
      ow.a = graph::Parameter(gaussian_matrix(r, in_w, rng, std_in));
      ow.b = graph::Parameter(gaussian_matrix(out_w, r, rng,
                                              1.0 / std::sqrt(static_cast<double>(r))));
      break;
    }
    case OpKind::DilLinA:
    case OpKind::DilLinB: {
      ow.mask = banded_mask(out_w, in_w, kind == OpKind::DilLinA ? 1 : 2);
      ow.a = graph::Parameter(gaussian_matrix(out_w, in_w, rng, std_in));
      break;
    }
    default:
      break;
  }
  return ow;
}

}  // namespace

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::SepLinA: return "sep_lin_a";
    case OpKind::SepLinB: return "sep_lin_b";
    case OpKind::DilLinA: return "dil_lin_a";
    case OpKind::DilLinB: return "dil_lin_b";
    case OpKind::AvgPool: return "avg_pool";
    case OpKind::MaxPool: return "max_pool";
    case OpKind::Skip: return "skip";
    case OpKind::Zero: return "zero";
  }
  return "?";
}

OpKind op_from_name(std::string_view name) {
  for (int o = 0; o < kNumOps; ++o) {
    if (name == op_name(static_cast<OpKind>(o))) return static_cast<OpKind>(o);
  }
  throw std::invalid_argument("unknown operation name: " + std::string(name));
}

bool op_has_weights(OpKind k) {
  return k == OpKind::SepLinA || k == OpKind::SepLinB || k == OpKind::DilLinA ||
         k == OpKind::DilLinB;
}

double op_constant(OpKind k, int stride) {
  switch (k) {
    case OpKind::AvgPool: return std::pow(static_cast<double>(stride), -0.5);
    case OpKind::MaxPool: return 1.0;
    case OpKind::Skip: return 1.0;
    case OpKind::Zero: return 0.0;
    default:
      throw std::domain_error("op_constant: operation has a spectral-norm rule");
  }
}

int SupernetSpec::n_edges() const {
  int n = 0;
  for (int j = 2; j < n_nodes(); ++j) n += j;
  return n;
}

int SupernetSpec::edge_index(int i, int j) const {
  if (!(j >= 2 && j < n_nodes() && i >= 0 && i < j)) {
    throw std::invalid_argument("edge_index: bad (i,j)");
  }
  int off = 0;
  for (int jj = 2; jj < j; ++jj) off += jj;
  return off + i;
}

std::pair<int, int> SupernetSpec::edge_nodes(int e) const {
  int off = 0;
  for (int j = 2; j < n_nodes(); ++j) {
    if (e < off + j) return {e - off, j};
    off += j;
  }
  throw std::invalid_argument("edge_nodes: bad edge id");
}

bool SupernetSpec::is_reduction(int k) const {
  return std::find(reduce_cells.begin(), reduce_cells.end(), k) != reduce_cells.end();
}

int SupernetSpec::cell_in_width(int k) const {
  int w = width;
  for (int c = 0; c < k; ++c) {
    if (is_reduction(c)) w /= 2;
  }
  return w;
}

int SupernetSpec::node_width(int k) const {
  return is_reduction(k) ? cell_in_width(k) / 2 : cell_in_width(k);
}

void SupernetSpec::validate() const {
  if (n_cells < 1 || n_intermediate < 1 || width < 2 || input_dim < 1 || n_classes < 2) {
    throw std::invalid_argument("SupernetSpec: bad sizes");
  }
  for (int r : reduce_cells) {
    if (r < 0 || r >= n_cells) throw std::invalid_argument("SupernetSpec: bad reduce cell");
  }
  for (int k = 0; k < n_cells; ++k) {
    const int nw = node_width(k);
    if (nw < 2 || nw % 2 != 0 || cell_in_width(k) % 2 != 0) {
      throw std::invalid_argument("SupernetSpec: node widths must stay even (cell " +
                                  std::to_string(k) + ")");
    }
  }
}

std::uint64_t SupernetSpec::hash() const {
  std::string s = std::to_string(n_cells) + "/" + std::to_string(n_intermediate) +
                  "/" + std::to_string(width) + "/" + std::to_string(input_dim) +
                  "/" + std::to_string(n_classes) + "/r";
  for (int r : reduce_cells) s += std::to_string(r) + ",";
  return Rng::derive(0x5245504f, s);
}

Eigen::MatrixXd OpWeights::effective() const {
  switch (kind) {
    case OpKind::SepLinA:
    case OpKind::SepLinB:
      return b.value * a.value;
    case OpKind::DilLinA:
    case OpKind::DilLinB:
      return mask.cwiseProduct(a.value);
    default:
      throw std::domain_error("effective: parameter-free operation");
  }
}

SupernetModel SupernetModel::init(const SupernetSpec& spec, Rng& rng) {
  spec.validate();
  SupernetModel m;
  m.spec = spec;
  m.stem = orthonormal_map(spec.width, spec.input_dim, rng);
  m.merges.resize(spec.n_cells);
  for (int k = 1; k < spec.n_cells; ++k) {
    m.merges[k] = merge_map(spec.node_width(k - 1), spec.n_intermediate);
  }
  m.cells.resize(spec.n_cells);
  for (int k = 0; k < spec.n_cells; ++k) {
    m.cells[k].resize(spec.n_edges());
    for (int e = 0; e < spec.n_edges(); ++e) {
      const auto [i, j] = spec.edge_nodes(e);
      const int in_w = i < 2 ? spec.cell_in_width(k) : spec.node_width(k);
      const int out_w = spec.node_width(k);
      for (int o = 0; o < kNumOps; ++o) {
        const OpKind kind = static_cast<OpKind>(o);
        if (op_has_weights(kind)) {
          m.cells[k][e][o] = make_op_weights(kind, in_w, out_w, rng);
        } else {
          m.cells[k][e][o].kind = kind;
          m.cells[k][e][o].in_w = in_w;
          m.cells[k][e][o].out_w = out_w;
        }
      }
    }
  }
  const int fw = spec.final_width();
  m.classifier_w = graph::Parameter(
      gaussian_matrix(spec.n_classes, fw, rng, 1.0 / std::sqrt(static_cast<double>(fw))));
  m.classifier_b = graph::Parameter(Matrix::Zero(1, spec.n_classes));
  return m;
}

std::vector<graph::Parameter*> SupernetModel::weight_params() {
  std::vector<graph::Parameter*> out;
  for (auto& cell : cells) {
    for (auto& edge : cell) {
      for (auto& op : edge) {
        if (!op_has_weights(op.kind)) continue;
        out.push_back(&op.a);
        if (op.b.value.size() > 0) out.push_back(&op.b);
      }
    }
  }
  out.push_back(&classifier_w);
  out.push_back(&classifier_b);
  return out;
}

void SupernetModel::zero_weight_grads() {
  for (graph::Parameter* p : weight_params()) p->zero_grad();
}

ArchDistribution ArchDistribution::init(const SupernetSpec& spec, double mu0,
                                        double sigma0) {
  ArchDistribution d;
  const int e = spec.n_edges();
  const double ls = std::log(sigma0);
  for (int t = 0; t < 2; ++t) {
    d.mu_alpha[t] = graph::Parameter(Matrix::Constant(e, kNumOps, mu0));
    d.log_sigma_alpha[t] = graph::Parameter(Matrix::Constant(e, kNumOps, ls));
    d.mu_beta[t] = graph::Parameter(Matrix::Constant(e, 1, mu0));
    d.log_sigma_beta[t] = graph::Parameter(Matrix::Constant(e, 1, ls));
  }
  return d;
}

std::vector<graph::Parameter*> ArchDistribution::params() {
  return {&mu_alpha[0],       &mu_alpha[1],       &log_sigma_alpha[0],
          &log_sigma_alpha[1], &mu_beta[0],        &mu_beta[1],
          &log_sigma_beta[0],  &log_sigma_beta[1]};
}

void ArchDistribution::zero_grads() {
  for (graph::Parameter* p : params()) p->zero_grad();
}

ArchSample sample_arch(const SupernetSpec& spec, const ArchDistribution& dist,
                       Rng& rng) {
  ArchSample s;
  const int ne = spec.n_edges();
  s.alpha.resize(spec.n_cells);
  s.beta.resize(spec.n_cells);
  s.eps_alpha.resize(spec.n_cells);
  s.eps_beta.resize(spec.n_cells);
  for (int k = 0; k < spec.n_cells; ++k) {
    const int t = spec.table_of(k);
    Matrix ea(ne, kNumOps);
    Eigen::VectorXd eb(ne);
    for (int e = 0; e < ne; ++e) {
      for (int o = 0; o < kNumOps; ++o) ea(e, o) = rng.normal();
      eb(e) = rng.normal();
    }
    // keep in sync with the tape reconstruction in mixture_forward:
    // sigma = exp(log_sigma); alpha = exp(mu + sigma .* eps)
    const Matrix sig_a = dist.log_sigma_alpha[t].value.array().exp().matrix();
    const Matrix sig_b = dist.log_sigma_beta[t].value.array().exp().matrix();
    s.alpha[k] = (dist.mu_alpha[t].value + sig_a.cwiseProduct(ea)).array().exp().matrix();
    s.beta[k] = (dist.mu_beta[t].value + sig_b.cwiseProduct(eb)).array().exp().matrix().col(0);
    s.eps_alpha[k] = std::move(ea);
    s.eps_beta[k] = std::move(eb);
  }
  return s;
}

void Genotype::validate(const SupernetSpec& spec) const {
  const auto check = [&](const std::vector<std::array<GenotypeEdge, 2>>& table) {
    if (static_cast<int>(table.size()) != spec.n_intermediate) {
      throw std::invalid_argument("genotype: wrong node count");
    }
    for (int n = 0; n < spec.n_intermediate; ++n) {
      const int j = n + 2;
      const auto& picks = table[n];
      if (picks[0].pred == picks[1].pred) {
        throw std::invalid_argument("genotype: duplicate predecessor");
      }
      for (const auto& p : picks) {
        if (p.pred < 0 || p.pred >= j) throw std::invalid_argument("genotype: bad predecessor");
        if (p.op == OpKind::Zero) throw std::invalid_argument("genotype: Zero selected");
      }
    }
  };
  check(normal);
  check(reduce);
}

SpectralEstimate power_iteration(const Eigen::MatrixXd& w, int max_iters,
                                 double tol) {
  SpectralEstimate est;
  if (max_iters < 1) throw std::invalid_argument("power_iteration: max_iters >= 1");
  if (w.size() == 0 || w.cwiseAbs().maxCoeff() == 0.0) {
    est.u = Eigen::VectorXd::Zero(w.rows());
    est.v = Eigen::VectorXd::Zero(w.cols());
    return est;  // all-zero matrix
  }
  Rng rng(0xb01dface);  // fixed internal stream: the estimate is a pure function of w
  Eigen::VectorXd v(w.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd wv = w * v;
    const double s = wv.norm();
    est.iters = it + 1;
    Eigen::VectorXd next = w.transpose() * wv;
    const double nn = next.norm();
    if (nn == 0.0) {  // v landed in the null space; sigma estimate is 0 so far
      sigma = s;
      break;
    }
    v = next / nn;
    if (std::abs(s - sigma) <= tol * std::max(1.0, s)) {
      sigma = s;
      break;
    }
    sigma = s;
  }
  Eigen::VectorXd wv = w * v;
  est.sigma = wv.norm();
  est.v = v;
  est.u = est.sigma > 0.0 ? Eigen::VectorXd(wv / est.sigma) : wv;
  return est;
}

double op_lipschitz(const OpWeights& op) {
  if (op_has_weights(op.kind)) return power_iteration(op.effective()).sigma;
  return op_constant(op.kind);
}

std::vector<Eigen::MatrixXd> op_lipschitz_table(const SupernetModel& model) {
  const SupernetSpec& spec = model.spec;
  std::vector<Matrix> out(spec.n_cells);
  for (int k = 0; k < spec.n_cells; ++k) {
    out[k].resize(spec.n_edges(), kNumOps);
    for (int e = 0; e < spec.n_edges(); ++e) {
      for (int o = 0; o < kNumOps; ++o) {
        out[k](e, o) = op_lipschitz(model.cells[k][e][o]);
      }
    }
  }
  return out;
}

double constant_C(const SupernetModel& model) {
  return std::sqrt(2.0) * power_iteration(model.classifier_w.value).sigma;
}

namespace {

// Fenton-Wilkinson accumulator over (weight, mu, var) triples; zero-weight
// terms contribute nothing (weight multiplies the implied moments).
struct FwAcc {
  double m = 0.0, v = 0.0;

  void add(double weight, double mu, double var) {
    if (weight == 0.0) return;
    const double mi = weight * std::exp(mu + 0.5 * var);
    m += mi;
    v += mi * mi * std::expm1(var);
  }
  bool zero() const { return m == 0.0; }
  LogNormalParams result() const {
    const double s = std::log1p(v / (m * m));
    return {std::log(m) - 0.5 * s, s};
  }
};

}  // namespace

BoundDist edge_bound_dist(const ArchDistribution& dist, int table, int edge,
                          const Eigen::VectorXd& lambdas) {
  std::vector<LogNormalParams> terms;
  for (int o = 0; o < kNumOps; ++o) {
    if (lambdas(o) == 0.0) continue;  // zero-Lipschitz terms are dropped
    const double sig = std::exp(dist.log_sigma_alpha[table].value(edge, o));
    terms.push_back(ln_scale({dist.mu_alpha[table].value(edge, o), sig * sig},
                             lambdas(o)));
  }
  if (terms.empty()) return std::nullopt;
  return fw_sum(terms);
}

BoundDist node_bound_dist(const SupernetSpec& spec, const ArchDistribution& dist,
                          int table, int node_j,
                          std::span<const BoundDist> edge_bounds) {
  std::vector<LogNormalParams> terms;
  for (int i = 0; i < node_j; ++i) {
    if (!edge_bounds[i].has_value()) continue;
    const int e = spec.edge_index(i, node_j);
    const double sb = std::exp(dist.log_sigma_beta[table].value(e, 0));
    terms.push_back(ln_product({dist.mu_beta[table].value(e, 0), sb * sb},
                               *edge_bounds[i]));
  }
  if (terms.empty()) return std::nullopt;
  return fw_sum(terms);
}

BoundDist network_bound_dist(const SupernetModel& model,
                             const ArchDistribution& dist, double c_const) {
  if (!(c_const > 0.0)) throw std::domain_error("network_bound_dist: C must be > 0");
  const SupernetSpec& spec = model.spec;
  const auto lambdas = op_lipschitz_table(model);
  double mu = std::log(c_const), var = 0.0;
  for (int k = 0; k < spec.n_cells; ++k) {
    const int t = spec.table_of(k);
    // per-edge FW first, then the per-node FW over beta * edge products
    std::vector<LogNormalParams> edge_p(spec.n_edges());
    std::vector<bool> edge_zero(spec.n_edges(), false);
    for (int e = 0; e < spec.n_edges(); ++e) {
      FwAcc acc;
      for (int o = 0; o < kNumOps; ++o) {
        const double sig = std::exp(dist.log_sigma_alpha[t].value(e, o));
        acc.add(lambdas[k](e, o), dist.mu_alpha[t].value(e, o), sig * sig);
      }
      if (acc.zero()) {
        edge_zero[e] = true;
      } else {
        edge_p[e] = acc.result();
      }
    }
    for (int j = 2; j < spec.n_nodes(); ++j) {
      FwAcc acc;
      for (int i = 0; i < j; ++i) {
        const int e = spec.edge_index(i, j);
        if (edge_zero[e]) continue;
        const double sb = std::exp(dist.log_sigma_beta[t].value(e, 0));
        acc.add(1.0, dist.mu_beta[t].value(e, 0) + edge_p[e].mu,
                sb * sb + edge_p[e].var);
      }
      if (acc.zero()) return std::nullopt;  // node bound collapses to 0
      const LogNormalParams nb = acc.result();
      mu += nb.mu;
      var += nb.var;
    }
  }
  return LogNormalParams{mu, var};
}

double sampled_bound(const SupernetModel& model, const ArchSample& sample,
                     double c_const) {
  const SupernetSpec& spec = model.spec;
  const auto lambdas = op_lipschitz_table(model);
  double bound = c_const;
  for (int k = 0; k < spec.n_cells; ++k) {
    for (int j = 2; j < spec.n_nodes(); ++j) {
      double node_sum = 0.0;
      for (int i = 0; i < j; ++i) {
        const int e = spec.edge_index(i, j);
        double edge_sum = 0.0;
        for (int o = 0; o < kNumOps; ++o) {
          edge_sum += sample.alpha[k](e, o) * lambdas[k](e, o);
        }
        node_sum += sample.beta[k](e) * edge_sum;
      }
      bound *= node_sum;
    }
  }
  return bound;
}

namespace {

// One candidate operation applied to a node activation (batch x in_w).
Var apply_op(Tape& tape, OpWeights& op, Var h) {
  switch (op.kind) {
    case OpKind::SepLinA:
    case OpKind::SepLinB: {
      Var r = relu(h);
      Var a = tape.param(op.a);
      Var b = tape.param(op.b);
      return matmul(matmul(r, transpose(a)), transpose(b));
    }
    case OpKind::DilLinA:
    case OpKind::DilLinB: {
      Var r = relu(h);
      Var a = tape.param(op.a);
      Var w_eff = mul(a, tape.constant(op.mask));
      return matmul(r, transpose(w_eff));
    }
    case OpKind::AvgPool:
      return matmul(h, tape.constant(avgpool_matrix(op.in_w, op.out_w == op.in_w)
                                         .transpose()));
    case OpKind::MaxPool: {
      Var pooled = maxpool_pairs(h);
      if (op.out_w == op.in_w / 2) return pooled;
      return matmul(pooled, tape.constant(pad_matrix(op.in_w / 2, op.out_w).transpose()));
    }
    case OpKind::Skip:
      if (op.out_w == op.in_w) return h;
      return matmul(h, tape.constant(subsample_matrix(op.in_w).transpose()));
    case OpKind::Zero:
      return tape.constant(Matrix::Zero(h.rows(), op.out_w));
  }
  throw std::logic_error("apply_op: unreachable");
}

}  // namespace

Var mixture_forward(Tape& tape, SupernetModel& model, ArchDistribution* dist,
                    const ArchSample& sample, Var x, const ForwardOptions& opts) {
  const SupernetSpec& spec = model.spec;
  if (x.cols() != spec.input_dim) {
    throw std::invalid_argument("mixture_forward: input width mismatch");
  }
  if (opts.arch_grad && dist == nullptr) {
    throw std::invalid_argument("mixture_forward: arch_grad needs the distribution");
  }

  // alpha/beta per cell: reconstructed on the tape (arch gradients flow through
  // the retained eps) or taken as constants.
  std::vector<Var> alpha(spec.n_cells), beta(spec.n_cells);
  std::array<Var, 2> mu_a, ls_a, mu_b, ls_b;
  if (opts.arch_grad) {
    for (int t = 0; t < 2; ++t) {
      mu_a[t] = tape.param(dist->mu_alpha[t]);
      ls_a[t] = tape.param(dist->log_sigma_alpha[t]);
      mu_b[t] = tape.param(dist->mu_beta[t]);
      ls_b[t] = tape.param(dist->log_sigma_beta[t]);
    }
  }
  for (int k = 0; k < spec.n_cells; ++k) {
    if (opts.arch_grad) {
      const int t = spec.table_of(k);
      alpha[k] = graph::exp(add(mu_a[t], mul(graph::exp(ls_a[t]),
                                             tape.constant(sample.eps_alpha[k]))));
      beta[k] = graph::exp(add(mu_b[t], mul(graph::exp(ls_b[t]),
                                            tape.constant(sample.eps_beta[k]))));
    } else {
      alpha[k] = tape.constant(sample.alpha[k]);
      beta[k] = tape.constant(sample.beta[k]);
    }
  }

  Var h = spec.input_dim == spec.width
              ? x
              : matmul(x, tape.constant(model.stem.transpose()));
  for (int k = 0; k < spec.n_cells; ++k) {
    if (k > 0) h = matmul(h, tape.constant(model.merges[k].transpose()));
    std::vector<Var> nodes(spec.n_nodes());
    nodes[0] = h;
    nodes[1] = h;
    for (int j = 2; j < spec.n_nodes(); ++j) {
      Var acc;
      bool first = true;
      for (int i = 0; i < j; ++i) {
        const int e = spec.edge_index(i, j);
        Var edge_acc;
        bool edge_first = true;
        for (int o = 0; o < kNumOps; ++o) {
          if (static_cast<OpKind>(o) == OpKind::Zero) continue;  // exact zero term
          Var term = mul_scalar(apply_op(tape, model.cells[k][e][o], nodes[i]),
                                block(alpha[k], e, o, 1, 1));
          edge_acc = edge_first ? term : add(edge_acc, term);
          edge_first = false;
        }
        Var weighted = mul_scalar(edge_acc, block(beta[k], e, 0, 1, 1));
        acc = first ? weighted : add(acc, weighted);
        first = false;
      }
      nodes[j] = acc;
    }
    std::vector<Var> concat(nodes.begin() + 2, nodes.end());
    h = concat_cols(concat);
  }
  Var logits = matmul(h, transpose(tape.param(model.classifier_w)));
  return add_rowvec(logits, tape.param(model.classifier_b));
}

ConstraintGraph build_constraint_graph(Tape& tape, const SupernetSpec& spec,
                                       ArchDistribution& dist,
                                       const std::vector<Eigen::MatrixXd>& lambdas,
                                       double c_const, double eta,
                                       double lambda_star) {
  if (!(c_const > 0.0) || !(lambda_star > 0.0)) {
    throw std::domain_error("build_constraint_graph: C and lambda* must be > 0");
  }
  const double z_eta = normal_quantile(eta);

  std::array<Var, 2> mu_a, ls_a, mu_b, ls_b;
  for (int t = 0; t < 2; ++t) {
    mu_a[t] = tape.param(dist.mu_alpha[t]);
    ls_a[t] = tape.param(dist.log_sigma_alpha[t]);
    mu_b[t] = tape.param(dist.mu_beta[t]);
    ls_b[t] = tape.param(dist.log_sigma_beta[t]);
  }

  Var mu_sum = tape.scalar(std::log(c_const));
  Var var_sum = tape.scalar(0.0);
  for (int k = 0; k < spec.n_cells; ++k) {
    const int t = spec.table_of(k);
    // per-type alpha moments as full tables, sliced per edge below
    Var v_a = graph::exp(scale(ls_a[t], 2.0));  // sigma^2
    std::vector<Var> edge_mu(spec.n_edges()), edge_var(spec.n_edges());
    std::vector<bool> edge_zero(spec.n_edges(), false);
    for (int e = 0; e < spec.n_edges(); ++e) {
      Eigen::RowVectorXd lam = lambdas[k].row(e);
      if (lam.cwiseAbs().maxCoeff() == 0.0) {
        edge_zero[e] = true;
        continue;
      }
      Var mu_row = block(mu_a[t], e, 0, 1, kNumOps);
      Var v_row = block(v_a, e, 0, 1, kNumOps);
      Var lam_row = tape.constant(lam);
      Var lam2_row = tape.constant(lam.cwiseProduct(lam));
      // M = sum_o lam_o exp(mu_o + v_o/2); V = sum_o lam_o^2 exp(2mu_o+v_o)(e^{v_o}-1)
      Var m_e = sum_all(mul(lam_row, graph::exp(add(mu_row, scale(v_row, 0.5)))));
      Var ev = graph::exp(v_row);
      Var v_e = sum_all(mul(lam2_row, mul(graph::exp(add(scale(mu_row, 2.0), v_row)),
                                          add_scalar(ev, -1.0))));
      Var s_e = graph::log(add_scalar(div(v_e, mul(m_e, m_e)), 1.0));
      edge_var[e] = s_e;
      edge_mu[e] = sub(graph::log(m_e), scale(s_e, 0.5));
    }
    Var v_b = graph::exp(scale(ls_b[t], 2.0));
    for (int j = 2; j < spec.n_nodes(); ++j) {
      Var m_n, v_n;
      bool first = true;
      for (int i = 0; i < j; ++i) {
        const int e = spec.edge_index(i, j);
        if (edge_zero[e]) continue;
        Var m_i = add(block(mu_b[t], e, 0, 1, 1), edge_mu[e]);
        Var v_i = add(block(v_b, e, 0, 1, 1), edge_var[e]);
        Var mterm = graph::exp(add(m_i, scale(v_i, 0.5)));
        Var vterm = mul(graph::exp(add(scale(m_i, 2.0), v_i)),
                        add_scalar(graph::exp(v_i), -1.0));
        m_n = first ? mterm : add(m_n, mterm);
        v_n = first ? vterm : add(v_n, vterm);
        first = false;
      }
      if (first) {
        throw std::domain_error("build_constraint_graph: zero-bound node (all edges Zero)");
      }
      Var s_n = graph::log(add_scalar(div(v_n, mul(m_n, m_n)), 1.0));
      mu_sum = add(mu_sum, sub(graph::log(m_n), scale(s_n, 0.5)));
      var_sum = add(var_sum, s_n);
    }
  }
  ConstraintGraph out;
  out.mu = mu_sum;
  out.var = var_sum;
  out.c = add_scalar(add(mu_sum, scale(var_sum, z_eta)), -std::log(lambda_star));
  return out;
}

namespace {

double op_score(const ArchDistribution& dist, int table, int e, int o,
                ScoreRule rule, double z) {
  const double mu = dist.mu_alpha[table].value(e, o);
  const double sig = std::exp(dist.log_sigma_alpha[table].value(e, o));
  const double mb = dist.mu_beta[table].value(e, 0);
  const double sb = std::exp(dist.log_sigma_beta[table].value(e, 0));
  if (rule == ScoreRule::Expectation) {
    return ln_mean({mb, sb * sb}) * ln_mean({mu, sig * sig});
  }
  return std::exp(mb - z * sb) * std::exp(mu - z * sig);
}

std::vector<std::array<GenotypeEdge, 2>> discretize_table(
    const SupernetSpec& spec, const ArchDistribution& dist, int table,
    ScoreRule rule, double z) {
  std::vector<std::array<GenotypeEdge, 2>> out;
  for (int j = 2; j < spec.n_nodes(); ++j) {
    // best non-Zero op per incoming edge, ties to the lower op index
    std::vector<double> best_score(j, 0.0);
    std::vector<OpKind> best_op(j, OpKind::Skip);
    for (int i = 0; i < j; ++i) {
      const int e = spec.edge_index(i, j);
      double bs = -1.0;
      OpKind bo = OpKind::Skip;
      for (int o = 0; o < kNumOps; ++o) {
        if (static_cast<OpKind>(o) == OpKind::Zero) continue;
        const double s = op_score(dist, table, e, o, rule, z);
        if (s > bs) {
          bs = s;
          bo = static_cast<OpKind>(o);
        }
      }
      best_score[i] = bs;
      best_op[i] = bo;
    }
    // top-2 predecessors, ties to the lower index
    int p1 = 0;
    for (int i = 1; i < j; ++i) {
      if (best_score[i] > best_score[p1]) p1 = i;
    }
    int p2 = -1;
    for (int i = 0; i < j; ++i) {
      if (i == p1) continue;
      if (p2 < 0 || best_score[i] > best_score[p2]) p2 = i;
    }
    std::array<GenotypeEdge, 2> picks{GenotypeEdge{std::min(p1, p2), OpKind::Skip},
                                      GenotypeEdge{std::max(p1, p2), OpKind::Skip}};
    picks[0].op = best_op[picks[0].pred];
    picks[1].op = best_op[picks[1].pred];
    out.push_back(picks);
  }
  return out;
}

}  // namespace

Genotype discretize(const SupernetSpec& spec, const ArchDistribution& dist,
                    ScoreRule rule, double z) {
  Genotype g;
  g.normal = discretize_table(spec, dist, kTableNormal, rule, z);
  g.reduce = discretize_table(spec, dist, kTableReduce, rule, z);
  g.validate(spec);
  return g;
}

ArchSample genotype_sample(const SupernetSpec& spec, const Genotype& geno) {
  ArchSample s;
  s.alpha.resize(spec.n_cells);
  s.beta.resize(spec.n_cells);
  s.eps_alpha.resize(spec.n_cells);
  s.eps_beta.resize(spec.n_cells);
  for (int k = 0; k < spec.n_cells; ++k) {
    const auto& table = spec.is_reduction(k) ? geno.reduce : geno.normal;
    Matrix a = Matrix::Zero(spec.n_edges(), kNumOps);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(spec.n_edges());
    for (int j = 2; j < spec.n_nodes(); ++j) {
      for (const GenotypeEdge& ge : table[j - 2]) {
        const int e = spec.edge_index(ge.pred, j);
        a(e, static_cast<int>(ge.op)) = 1.0;
        b(e) = 1.0;
      }
    }
    s.alpha[k] = a;
    s.beta[k] = b;
    s.eps_alpha[k] = Matrix::Zero(spec.n_edges(), kNumOps);
    s.eps_beta[k] = Eigen::VectorXd::Zero(spec.n_edges());
  }
  return s;
}

DiscreteModel DiscreteModel::init(const SupernetSpec& spec, const Genotype& geno,
                                  Rng& rng) {
  spec.validate();
  geno.validate(spec);
  DiscreteModel m;
  m.spec = spec;
  m.geno = geno;
  m.stem = orthonormal_map(spec.width, spec.input_dim, rng);
  m.merges.resize(spec.n_cells);
  for (int k = 1; k < spec.n_cells; ++k) {
    m.merges[k] = merge_map(spec.node_width(k - 1), spec.n_intermediate);
  }
  m.cells.resize(spec.n_cells);
  for (int k = 0; k < spec.n_cells; ++k) {
    const auto& table = spec.is_reduction(k) ? geno.reduce : geno.normal;
    m.cells[k].resize(spec.n_intermediate);
    for (int n = 0; n < spec.n_intermediate; ++n) {
      for (int slot = 0; slot < 2; ++slot) {
        const GenotypeEdge& ge = table[n][slot];
        const int in_w = ge.pred < 2 ? spec.cell_in_width(k) : spec.node_width(k);
        const int out_w = spec.node_width(k);
        m.cells[k][n][slot] =
            op_has_weights(ge.op)
                ? make_op_weights(ge.op, in_w, out_w, rng)
                : OpWeights{ge.op, in_w, out_w, {}, {}, {}};
      }
    }
  }
  const int fw = spec.final_width();
  m.classifier_w = graph::Parameter(
      gaussian_matrix(spec.n_classes, fw, rng, 1.0 / std::sqrt(static_cast<double>(fw))));
  m.classifier_b = graph::Parameter(Matrix::Zero(1, spec.n_classes));
  return m;
}

DiscreteModel DiscreteModel::from_supernet(const SupernetModel& model,
                                           const Genotype& geno) {
  const SupernetSpec& spec = model.spec;
  geno.validate(spec);
  DiscreteModel m;
  m.spec = spec;
  m.geno = geno;
  m.stem = model.stem;
  m.merges = model.merges;
  m.cells.resize(spec.n_cells);
  for (int k = 0; k < spec.n_cells; ++k) {
    const auto& table = spec.is_reduction(k) ? geno.reduce : geno.normal;
    m.cells[k].resize(spec.n_intermediate);
    for (int n = 0; n < spec.n_intermediate; ++n) {
      for (int slot = 0; slot < 2; ++slot) {
        const GenotypeEdge& ge = table[n][slot];
        const int e = spec.edge_index(ge.pred, n + 2);
        m.cells[k][n][slot] = model.cells[k][e][static_cast<int>(ge.op)];
      }
    }
  }
  m.classifier_w = model.classifier_w;
  m.classifier_b = model.classifier_b;
  return m;
}

std::vector<graph::Parameter*> DiscreteModel::params() {
  std::vector<graph::Parameter*> out;
  for (auto& cell : cells) {
    for (auto& node : cell) {
      for (auto& op : node) {
        if (!op_has_weights(op.kind)) continue;
        out.push_back(&op.a);
        if (op.b.value.size() > 0) out.push_back(&op.b);
      }
    }
  }
  out.push_back(&classifier_w);
  out.push_back(&classifier_b);
  return out;
}

void DiscreteModel::zero_grads() {
  for (graph::Parameter* p : params()) p->zero_grad();
}

Var discrete_forward(Tape& tape, DiscreteModel& model, Var x) {
  const SupernetSpec& spec = model.spec;
  if (x.cols() != spec.input_dim) {
    throw std::invalid_argument("discrete_forward: input width mismatch");
  }
  Var h = spec.input_dim == spec.width
              ? x
              : matmul(x, tape.constant(model.stem.transpose()));
  for (int k = 0; k < spec.n_cells; ++k) {
    if (k > 0) h = matmul(h, tape.constant(model.merges[k].transpose()));
    const auto& table = spec.is_reduction(k) ? model.geno.reduce : model.geno.normal;
    std::vector<Var> nodes(spec.n_nodes());
    nodes[0] = h;
    nodes[1] = h;
    for (int j = 2; j < spec.n_nodes(); ++j) {
      const int n = j - 2;
      Var t0 = apply_op(tape, model.cells[k][n][0], nodes[table[n][0].pred]);
      Var t1 = apply_op(tape, model.cells[k][n][1], nodes[table[n][1].pred]);
      nodes[j] = add(t0, t1);
    }
    std::vector<Var> concat(nodes.begin() + 2, nodes.end());
    h = concat_cols(concat);
  }
  Var logits = matmul(h, transpose(tape.param(model.classifier_w)));
  return add_rowvec(logits, tape.param(model.classifier_b));
}

Eigen::MatrixXd one_hot(const Eigen::VectorXi& y, int n_classes) {
  Matrix out = Matrix::Zero(y.size(), n_classes);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) < 0 || y(i) >= n_classes) throw std::invalid_argument("one_hot: bad label");
    out(i, y(i)) = 1.0;
  }
  return out;
}

Eigen::MatrixXd DiscreteClassifier::logits(const Eigen::MatrixXd& x) {
  Tape tape;
  return discrete_forward(tape, m_, tape.constant(x)).value();
}

std::pair<double, Eigen::MatrixXd> DiscreteClassifier::loss_input_grad(
    const Eigen::MatrixXd& x, const Eigen::VectorXi& y) {
  Tape tape;
  graph::Parameter px(x);
  Var xv = tape.param(px);
  Var loss = graph::softmax_cross_entropy(discrete_forward(tape, m_, xv),
                                          one_hot(y, m_.spec.n_classes));
  // weight grads are accumulated too; callers treat the model as frozen here
  m_.zero_grads();
  tape.backward(loss);
  m_.zero_grads();
  return {loss.scalar(), px.grad};
}

void DiscreteClassifier::zero_grads() { m_.zero_grads(); }

double DiscreteClassifier::loss_backward(const Eigen::MatrixXd& x,
                                         const Eigen::VectorXi& y) {
  Tape tape;
  Var loss = graph::softmax_cross_entropy(discrete_forward(tape, m_, tape.constant(x)),
                                          one_hot(y, m_.spec.n_classes));
  tape.backward(loss);
  return loss.scalar();
}

Eigen::MatrixXd SupernetClassifier::logits(const Eigen::MatrixXd& x) {
  Tape tape;
  return mixture_forward(tape, m_, nullptr, s_, tape.constant(x), {.arch_grad = false})
      .value();
}

std::pair<double, Eigen::MatrixXd> SupernetClassifier::loss_input_grad(
    const Eigen::MatrixXd& x, const Eigen::VectorXi& y) {
  Tape tape;
  graph::Parameter px(x);
  Var xv = tape.param(px);
  Var loss = graph::softmax_cross_entropy(
      mixture_forward(tape, m_, nullptr, s_, xv, {.arch_grad = false}),
      one_hot(y, m_.spec.n_classes));
  m_.zero_weight_grads();
  tape.backward(loss);
  m_.zero_weight_grads();
  return {loss.scalar(), px.grad};
}

}  // namespace racl

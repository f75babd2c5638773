#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "racl/classifier.hpp"
#include "racl/diffgraph.hpp"
#include "racl/lognormal.hpp"
#include "racl/rng.hpp"

namespace racl {

// The 8 candidate operations. SepLin* are factorized dense maps of two inner
// ranks, DilLin* are banded dense maps of two dilations; together they stand
// in for the separable / dilated convolutions while keeping the same
// Lipschitz rules (spectral norm of the effective matrix). Pooling uses
// disjoint stride-2 windows so the constants are exact: avg 2^-1/2, max 1.
enum class OpKind : int {
  SepLinA = 0,
  SepLinB,
  DilLinA,
  DilLinB,
  AvgPool,
  MaxPool,
  Skip,
  Zero,
};

inline constexpr int kNumOps = 8;
inline constexpr int kTableNormal = 0;
inline constexpr int kTableReduce = 1;

const char* op_name(OpKind k);
OpKind op_from_name(std::string_view name);
bool op_has_weights(OpKind k);
// Constant-rule Lipschitz values (AvgPool takes its stride); weight-bearing
// kinds are answered by op_lipschitz instead.
double op_constant(OpKind k, int stride = 2);

struct SupernetSpec {
  int n_cells = 4;
  int n_intermediate = 4;  // nodes 2 .. n_intermediate+1; 0 and 1 are inputs
  int width = 16;          // node width of the first cell
  int input_dim = 16;
  int n_classes = 8;
  std::vector<int> reduce_cells = {2};

  int n_nodes() const { return n_intermediate + 2; }
  int n_edges() const;              // per cell: sum over nodes j of j
  int edge_index(int i, int j) const;
  std::pair<int, int> edge_nodes(int e) const;
  bool is_reduction(int k) const;
  int table_of(int k) const { return is_reduction(k) ? kTableReduce : kTableNormal; }
  int cell_in_width(int k) const;   // width of the two input nodes
  int node_width(int k) const;      // width of intermediate nodes
  int cell_out_width(int k) const { return n_intermediate * node_width(k); }
  int final_width() const { return cell_out_width(n_cells - 1); }
  void validate() const;
  std::uint64_t hash() const;
};

// Weights of one (cell, edge, op). Parameter-free kinds keep empty matrices.
struct OpWeights {
  OpKind kind = OpKind::Zero;
  int in_w = 0, out_w = 0;
  graph::Parameter a, b;   // SepLin: effective = b * a; DilLin: a, masked
  Eigen::MatrixXd mask;    // DilLin band pattern (constant)

  Eigen::MatrixXd effective() const;  // the matrix whose spectral norm is lambda
};

struct SupernetModel {
  SupernetSpec spec;
  Eigen::MatrixXd stem;                  // width x input_dim, orthonormal rows/cols
  std::vector<Eigen::MatrixXd> merges;   // merges[k]: input map of cell k (k >= 1)
  std::vector<std::vector<std::array<OpWeights, kNumOps>>> cells;  // [cell][edge][op]
  graph::Parameter classifier_w;         // n_classes x final_width
  graph::Parameter classifier_b;         // 1 x n_classes

  static SupernetModel init(const SupernetSpec& spec, Rng& rng);
  std::vector<graph::Parameter*> weight_params();
  void zero_weight_grads();
};

// Trainable (mu, log sigma) per (cell-type, edge, op) for alpha and per
// (cell-type, edge) for beta. Table 0 = normal cells, table 1 = reduction.
struct ArchDistribution {
  std::array<graph::Parameter, 2> mu_alpha, log_sigma_alpha;  // edges x ops
  std::array<graph::Parameter, 2> mu_beta, log_sigma_beta;    // edges x 1

  static ArchDistribution init(const SupernetSpec& spec, double mu0 = 0.0,
                               double sigma0 = 0.15);
  std::vector<graph::Parameter*> params();
  void zero_grads();
};

// Concrete architecture draw. Each cell instance gets independent draws from
// its cell-type's distribution; the standard-normal eps are retained so that
// graph reconstruction alpha = exp(mu + e^ls * eps) routes gradients to the
// distribution parameters.
struct ArchSample {
  std::vector<Eigen::MatrixXd> alpha;      // [cell] edges x ops
  std::vector<Eigen::VectorXd> beta;       // [cell] edges
  std::vector<Eigen::MatrixXd> eps_alpha;  // [cell] edges x ops
  std::vector<Eigen::VectorXd> eps_beta;   // [cell] edges
};

ArchSample sample_arch(const SupernetSpec& spec, const ArchDistribution& dist,
                       Rng& rng);

struct GenotypeEdge {
  int pred = 0;
  OpKind op = OpKind::Skip;
  bool operator==(const GenotypeEdge&) const = default;
};

// Two (predecessor, operation) picks per intermediate node, one table per
// cell type. Zero never appears.
struct Genotype {
  std::vector<std::array<GenotypeEdge, 2>> normal, reduce;
  void validate(const SupernetSpec& spec) const;
  bool operator==(const Genotype&) const = default;
};

struct SpectralEstimate {
  double sigma = 0.0;
  Eigen::VectorXd u, v;  // enough for the d(sigma) = u' dW v gradient
  int iters = 0;
};

// v <- normalize(W' W v) until the estimate's relative change <= tol.
SpectralEstimate power_iteration(const Eigen::MatrixXd& w, int max_iters = 500,
                                 double tol = 1e-12);

double op_lipschitz(const OpWeights& op);

// lambda table per cell instance (edges x ops), refreshed from current weights
std::vector<Eigen::MatrixXd> op_lipschitz_table(const SupernetModel& model);

// sqrt(2) * ||classifier||_2; sqrt(2) bounds the softmax-CE gradient norm
double constant_C(const SupernetModel& model);

// nullopt encodes the point mass at 0 (every contributing term had lambda 0)
using BoundDist = std::optional<LogNormalParams>;

BoundDist edge_bound_dist(const ArchDistribution& dist, int table, int edge,
                          const Eigen::VectorXd& lambdas);
// edge_bounds indexed by predecessor i (i < node_j)
BoundDist node_bound_dist(const SupernetSpec& spec, const ArchDistribution& dist,
                          int table, int node_j,
                          std::span<const BoundDist> edge_bounds);
// Closed-form network bound; written out directly (independent of the
// edge/node helpers) so the two code paths can be checked against each other.
BoundDist network_bound_dist(const SupernetModel& model,
                             const ArchDistribution& dist, double c_const);

// Deterministic product bound at a concrete (alpha, beta) draw.
double sampled_bound(const SupernetModel& model, const ArchSample& sample,
                     double c_const);

struct ForwardOptions {
  bool arch_grad = true;  // reconstruct alpha/beta on the tape from mu/ls/eps
};

// Operation-mixture forward pass; x is a tape node so callers can make it a
// Parameter when input gradients are needed.
graph::Var mixture_forward(graph::Tape& tape, SupernetModel& model,
                           ArchDistribution* dist, const ArchSample& sample,
                           graph::Var x, const ForwardOptions& opts = {});

// Constraint expression built on the tape: c = mu + quantile(eta) * var - ln(lambda*).
struct ConstraintGraph {
  graph::Var c, mu, var;
};
ConstraintGraph build_constraint_graph(graph::Tape& tape, const SupernetSpec& spec,
                                       ArchDistribution& dist,
                                       const std::vector<Eigen::MatrixXd>& lambdas,
                                       double c_const, double eta,
                                       double lambda_star);

enum class ScoreRule { Expectation, LowerBound };

// Per-edge argmax of mean(beta) * mean(alpha_o) over non-Zero ops, then the
// top-2 predecessors per node; ties break toward the lower index.
Genotype discretize(const SupernetSpec& spec, const ArchDistribution& dist,
                    ScoreRule rule = ScoreRule::Expectation, double z = 1.2815515655446004);

// Degenerate sample matching a genotype: alpha/beta 1 on chosen pairs, 0 elsewhere.
ArchSample genotype_sample(const SupernetSpec& spec, const Genotype& geno);

// Discrete network built from a genotype (chosen ops only, alpha = beta = 1).
struct DiscreteModel {
  SupernetSpec spec;
  Genotype geno;
  Eigen::MatrixXd stem;
  std::vector<Eigen::MatrixXd> merges;
  std::vector<std::vector<std::array<OpWeights, 2>>> cells;  // [cell][node][slot]
  graph::Parameter classifier_w, classifier_b;

  static DiscreteModel init(const SupernetSpec& spec, const Genotype& geno, Rng& rng);
  static DiscreteModel from_supernet(const SupernetModel& model, const Genotype& geno);
  std::vector<graph::Parameter*> params();
  void zero_grads();
};

graph::Var discrete_forward(graph::Tape& tape, DiscreteModel& model, graph::Var x);

// Classifier adapters used by attacks/evaluation.
class DiscreteClassifier : public TrainableClassifier {
 public:
  explicit DiscreteClassifier(DiscreteModel& m) : m_(m) {}
  int input_dim() const override { return m_.spec.input_dim; }
  int n_classes() const override { return m_.spec.n_classes; }
  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) override;
  std::pair<double, Eigen::MatrixXd> loss_input_grad(const Eigen::MatrixXd& x,
                                                     const Eigen::VectorXi& y) override;
  void zero_grads() override;
  double loss_backward(const Eigen::MatrixXd& x, const Eigen::VectorXi& y) override;
  DiscreteModel& model() { return m_; }

 private:
  DiscreteModel& m_;
};

class SupernetClassifier : public Classifier {
 public:
  SupernetClassifier(SupernetModel& m, const ArchSample& s) : m_(m), s_(s) {}
  int input_dim() const override { return m_.spec.input_dim; }
  int n_classes() const override { return m_.spec.n_classes; }
  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) override;
  std::pair<double, Eigen::MatrixXd> loss_input_grad(const Eigen::MatrixXd& x,
                                                     const Eigen::VectorXi& y) override;

 private:
  SupernetModel& m_;
  const ArchSample& s_;
};

Eigen::MatrixXd one_hot(const Eigen::VectorXi& y, int n_classes);

}  // namespace racl

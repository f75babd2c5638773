#pragma once

#include <optional>
#include <string>
#include <vector>

#include "racl/attacks.hpp"
#include "racl/dataio.hpp"
#include "racl/diffgraph.hpp"
#include "racl/optim.hpp"
#include "racl/supernet.hpp"

namespace racl {

struct SearchConfig {
  // schedule
  int epochs = 30;
  int batch_size = 128;
  std::uint64_t seed = 1;
  // weight optimizer (SGD momentum)
  double w_lr = 0.1;
  double w_momentum = 0.9;
  double w_decay = 3e-4;
  // architecture optimizer (Adam); arch_lr is the gamma of the primal updates
  double arch_lr = 6e-4;
  double arch_decay = 1e-3;
  // constraint
  double rho = 1e-3;
  double eta = 0.9;
  double lambda_star = 0.0;  // 0 => calibrate
  int calib_epochs = 5;
  double calib_percentile = 0.25;
  bool constraint_off = false;
  bool clamp_dual = true;
  bool arch_adversarial = false;
  std::string score_rule = "expectation";  // or "lower_bound"
  double init_sigma = 0.15;
  // supernet
  int n_cells = 4;
  int n_intermediate = 4;
  int width = 16;
  std::vector<int> reduce_cells = {2};
  // data
  DatasetSpec data;
  // retrain
  int retrain_epochs = 30;
  double retrain_lr = 0.05;
  AttackConfig train_attack;  // PGD 7 x 2/255 at eps 8/255 by default

  SupernetSpec supernet_spec() const;
  ScoreRule parsed_score_rule() const;
};

SearchConfig config_from_file(const std::string& path);
void save_config_toml(const std::string& path, const SearchConfig& cfg);
nlohmann::json config_to_json(const SearchConfig& cfg);
SearchConfig config_from_json(const nlohmann::json& j);

struct AdmmState {
  double theta = 0.0;
  double rho = 1e-3;
};

// c = mu + quantile(eta) * var - ln(lambda*); the zero bound satisfies the
// constraint trivially (-inf surrogate).
double constraint_value(const BoundDist& bound, double eta, double lambda_star);

double augmented_lagrangian(double ce, double c, const AdmmState& st);
graph::Var augmented_lagrangian(graph::Tape& tape, graph::Var ce, graph::Var c,
                                const AdmmState& st);

// theta <- max(0, theta + rho c); the clamp is standard dual ascent for an
// inequality, the unclamped variant stays available for fidelity runs.
AdmmState dual_step(const AdmmState& st, double c, bool clamp = true);

struct EpochLog {
  int epoch = 0;
  double ce = 0.0, c = 0.0, theta = 0.0, mu = 0.0, var = 0.0, prob = 0.0;
};

inline constexpr const char* kHistoryHeader =
    "epoch,ce,c,theta,mu,var,prob_bound_le_lambda";

struct SearchResult {
  Genotype genotype;
  std::vector<EpochLog> history;
  double lambda_star = 0.0;
};

// One search run; exposes the individual steps for tests and the full loop
// for the CLI. All randomness flows through the owned streams so checkpoint
// resume is bitwise-faithful.
class SearchRun {
 public:
  explicit SearchRun(const SearchConfig& cfg);

  // resolves lambda* (calibration pass) if the config left it at 0
  void resolve_lambda_star();

  double arch_step(const Eigen::MatrixXd& x, const Eigen::VectorXi& y);
  double weight_step(const Eigen::MatrixXd& x, const Eigen::VectorXi& y);
  // runs epochs [epoch_done, cfg.epochs); writes history/checkpoints when
  // out_dir is non-empty
  SearchResult run(const std::string& out_dir = "");

  EpochLog epoch_metrics(int epoch, double mean_ce) const;
  Genotype genotype() const;

  void save(const std::string& path) const;
  static SearchRun restore(const std::string& path);

  SearchConfig cfg;
  SupernetSpec spec;
  SupernetModel model;
  ArchDistribution dist;
  AdmmState admm;
  SgdMomentum w_opt;
  Adam a_opt;
  Rng rng_data, rng_sample, rng_attack;
  Dataset data;
  std::vector<int> weight_half, arch_half;
  int epoch_done = 0;  // epochs fully completed
  std::vector<EpochLog> history;
  std::vector<double>* bound_observer = nullptr;  // calibration hook

 private:
  void epoch_pass(int epoch, const std::string& out_dir);
};

SearchResult search_loop(const SearchConfig& cfg, const std::string& out_dir = "");
// resumes from a checkpoint; epochs_override > 0 extends/changes the target
SearchResult search_resume(const std::string& checkpoint_path,
                           const std::string& out_dir = "", int epochs_override = 0);

struct RetrainRow {
  int epoch = 0;
  double loss = 0.0, train_acc = 0.0, test_acc = 0.0;
};

// Builds the discrete network and trains it (clean or PGD-adversarial).
DiscreteModel retrain(const Genotype& geno, const SearchConfig& cfg, bool adversarial,
                      std::vector<RetrainRow>* curve = nullptr);

// model file = genotype + weights + dataset spec; used by the attack command
void save_model(const std::string& path, DiscreteModel& model, const SearchConfig& cfg);
std::pair<DiscreteModel, SearchConfig> load_model(const std::string& path);

}  // namespace racl

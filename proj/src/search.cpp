#include "racl/search.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace racl {

using Eigen::MatrixXd;
using Eigen::VectorXi;
using graph::Tape;
using graph::Var;
using nlohmann::json;

SupernetSpec SearchConfig::supernet_spec() const {
  SupernetSpec s;
  s.n_cells = n_cells;
  s.n_intermediate = n_intermediate;
  s.width = width;
  s.input_dim = data.input_dim;
  s.n_classes = data.n_classes;
  s.reduce_cells = reduce_cells;
  return s;
}

ScoreRule SearchConfig::parsed_score_rule() const {
  if (score_rule == "expectation") return ScoreRule::Expectation;
  if (score_rule == "lower_bound") return ScoreRule::LowerBound;
  throw std::invalid_argument("score_rule must be expectation|lower_bound");
}

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

std::string int_list_str(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

SearchConfig config_from_file(const std::string& path) {
  const auto kv = parse_kv_config(path);
  SearchConfig c;
  std::map<std::string, bool> seen;
  const auto geti = [&](const char* k, int& dst) {
    if (auto it = kv.find(k); it != kv.end()) { dst = std::stoi(it->second); seen[k] = true; }
  };
  const auto getu = [&](const char* k, std::uint64_t& dst) {
    if (auto it = kv.find(k); it != kv.end()) { dst = std::stoull(it->second); seen[k] = true; }
  };
  const auto getd = [&](const char* k, double& dst) {
    if (auto it = kv.find(k); it != kv.end()) { dst = std::stod(it->second); seen[k] = true; }
  };
  const auto getb = [&](const char* k, bool& dst) {
    if (auto it = kv.find(k); it != kv.end()) {
      dst = it->second == "true" || it->second == "1";
      seen[k] = true;
    }
  };
  const auto gets = [&](const char* k, std::string& dst) {
    if (auto it = kv.find(k); it != kv.end()) { dst = it->second; seen[k] = true; }
  };

  geti("epochs", c.epochs);
  geti("batch_size", c.batch_size);
  getu("seed", c.seed);
  getd("w_lr", c.w_lr);
  getd("w_momentum", c.w_momentum);
  getd("w_decay", c.w_decay);
  getd("arch_lr", c.arch_lr);
  getd("arch_decay", c.arch_decay);
  getd("rho", c.rho);
  getd("eta", c.eta);
  getd("lambda_star", c.lambda_star);
  geti("calib_epochs", c.calib_epochs);
  getd("calib_percentile", c.calib_percentile);
  getb("constraint_off", c.constraint_off);
  getb("clamp_dual", c.clamp_dual);
  getb("arch_adversarial", c.arch_adversarial);
  gets("score_rule", c.score_rule);
  getd("init_sigma", c.init_sigma);
  geti("n_cells", c.n_cells);
  geti("n_intermediate", c.n_intermediate);
  geti("width", c.width);
  if (auto it = kv.find("reduce_cells"); it != kv.end()) {
    c.reduce_cells = parse_int_list(it->second);
    seen["reduce_cells"] = true;
  }
  std::string data_kind = "synthetic";
  gets("data_kind", data_kind);
  c.data.kind = data_kind == "mnist-idx" ? DatasetSpec::Kind::MnistIdx
                                         : DatasetSpec::Kind::Synthetic;
  geti("input_dim", c.data.input_dim);
  geti("n_classes", c.data.n_classes);
  geti("n_train", c.data.n_train);
  geti("n_test", c.data.n_test);
  getu("data_seed", c.data.seed);
  getd("class_separation", c.data.class_separation);
  gets("mnist_dir", c.data.mnist_dir);
  geti("retrain_epochs", c.retrain_epochs);
  getd("retrain_lr", c.retrain_lr);
  getd("attack_eps", c.train_attack.epsilon);
  geti("attack_steps", c.train_attack.steps);
  getd("attack_step_size", c.train_attack.step_size);

  for (const auto& [k, v] : kv) {
    if (!seen.count(k)) {
      std::cerr << "warning: unknown config key '" << k << "' ignored\n";
    }
  }
  if (!(c.eta > 0.0 && c.eta < 1.0)) throw std::invalid_argument("eta must lie in (0,1)");
  if (c.rho < 0.0) throw std::invalid_argument("rho must be >= 0");
  return c;
}

void save_config_toml(const std::string& path, const SearchConfig& c) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "# resolved run configuration\n";
  f << "epochs = " << c.epochs << "\n";
  f << "batch_size = " << c.batch_size << "\n";
  f << "seed = " << c.seed << "\n";
  f << "w_lr = " << format_double(c.w_lr) << "\n";
  f << "w_momentum = " << format_double(c.w_momentum) << "\n";
  f << "w_decay = " << format_double(c.w_decay) << "\n";
  f << "arch_lr = " << format_double(c.arch_lr) << "\n";
  f << "arch_decay = " << format_double(c.arch_decay) << "\n";
  f << "rho = " << format_double(c.rho) << "\n";
  f << "eta = " << format_double(c.eta) << "\n";
  f << "lambda_star = " << format_double(c.lambda_star) << "\n";
  f << "calib_epochs = " << c.calib_epochs << "\n";
  f << "calib_percentile = " << format_double(c.calib_percentile) << "\n";
  f << "constraint_off = " << (c.constraint_off ? "true" : "false") << "\n";
  f << "clamp_dual = " << (c.clamp_dual ? "true" : "false") << "\n";
  f << "arch_adversarial = " << (c.arch_adversarial ? "true" : "false") << "\n";
  f << "score_rule = \"" << c.score_rule << "\"\n";
  f << "init_sigma = " << format_double(c.init_sigma) << "\n";
  f << "n_cells = " << c.n_cells << "\n";
  f << "n_intermediate = " << c.n_intermediate << "\n";
  f << "width = " << c.width << "\n";
  f << "reduce_cells = \"" << int_list_str(c.reduce_cells) << "\"\n";
  f << "data_kind = \""
    << (c.data.kind == DatasetSpec::Kind::MnistIdx ? "mnist-idx" : "synthetic")
    << "\"\n";
  f << "input_dim = " << c.data.input_dim << "\n";
  f << "n_classes = " << c.data.n_classes << "\n";
  f << "n_train = " << c.data.n_train << "\n";
  f << "n_test = " << c.data.n_test << "\n";
  f << "data_seed = " << c.data.seed << "\n";
  f << "class_separation = " << format_double(c.data.class_separation) << "\n";
  if (!c.data.mnist_dir.empty()) f << "mnist_dir = \"" << c.data.mnist_dir << "\"\n";
  f << "retrain_epochs = " << c.retrain_epochs << "\n";
  f << "retrain_lr = " << format_double(c.retrain_lr) << "\n";
  f << "attack_eps = " << format_double(c.train_attack.epsilon) << "\n";
  f << "attack_steps = " << c.train_attack.steps << "\n";
  f << "attack_step_size = " << format_double(c.train_attack.step_size) << "\n";
}

json config_to_json(const SearchConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["w_lr"] = c.w_lr;
  j["w_momentum"] = c.w_momentum;
  j["w_decay"] = c.w_decay;
  j["arch_lr"] = c.arch_lr;
  j["arch_decay"] = c.arch_decay;
  j["rho"] = c.rho;
  j["eta"] = c.eta;
  j["lambda_star"] = c.lambda_star;
  j["calib_epochs"] = c.calib_epochs;
  j["calib_percentile"] = c.calib_percentile;
  j["constraint_off"] = c.constraint_off;
  j["clamp_dual"] = c.clamp_dual;
  j["arch_adversarial"] = c.arch_adversarial;
  j["score_rule"] = c.score_rule;
  j["init_sigma"] = c.init_sigma;
  j["n_cells"] = c.n_cells;
  j["n_intermediate"] = c.n_intermediate;
  j["width"] = c.width;
  j["reduce_cells"] = c.reduce_cells;
  j["data_kind"] = c.data.kind == DatasetSpec::Kind::MnistIdx ? "mnist-idx" : "synthetic";
  j["input_dim"] = c.data.input_dim;
  j["n_classes"] = c.data.n_classes;
  j["n_train"] = c.data.n_train;
  j["n_test"] = c.data.n_test;
  j["data_seed"] = c.data.seed;
  j["class_separation"] = c.data.class_separation;
  j["mnist_dir"] = c.data.mnist_dir;
  j["retrain_epochs"] = c.retrain_epochs;
  j["retrain_lr"] = c.retrain_lr;
  j["attack_eps"] = c.train_attack.epsilon;
  j["attack_steps"] = c.train_attack.steps;
  j["attack_step_size"] = c.train_attack.step_size;
  return j;
}

SearchConfig config_from_json(const json& j) {
  SearchConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.w_lr = j.at("w_lr").get<double>();
  c.w_momentum = j.at("w_momentum").get<double>();
  c.w_decay = j.at("w_decay").get<double>();
  c.arch_lr = j.at("arch_lr").get<double>();
  c.arch_decay = j.at("arch_decay").get<double>();
  c.rho = j.at("rho").get<double>();
  c.eta = j.at("eta").get<double>();
  c.lambda_star = j.at("lambda_star").get<double>();
  c.calib_epochs = j.at("calib_epochs").get<int>();
  c.calib_percentile = j.at("calib_percentile").get<double>();
  c.constraint_off = j.at("constraint_off").get<bool>();
  c.clamp_dual = j.at("clamp_dual").get<bool>();
  c.arch_adversarial = j.at("arch_adversarial").get<bool>();
  c.score_rule = j.at("score_rule").get<std::string>();
  c.init_sigma = j.at("init_sigma").get<double>();
  c.n_cells = j.at("n_cells").get<int>();
  c.n_intermediate = j.at("n_intermediate").get<int>();
  c.width = j.at("width").get<int>();
  c.reduce_cells = j.at("reduce_cells").get<std::vector<int>>();
  c.data.kind = j.at("data_kind").get<std::string>() == "mnist-idx"
                    ? DatasetSpec::Kind::MnistIdx
                    : DatasetSpec::Kind::Synthetic;
  c.data.input_dim = j.at("input_dim").get<int>();
  c.data.n_classes = j.at("n_classes").get<int>();
  c.data.n_train = j.at("n_train").get<int>();
  c.data.n_test = j.at("n_test").get<int>();
  c.data.seed = j.at("data_seed").get<std::uint64_t>();
  c.data.class_separation = j.at("class_separation").get<double>();
  c.data.mnist_dir = j.at("mnist_dir").get<std::string>();
  c.retrain_epochs = j.at("retrain_epochs").get<int>();
  c.retrain_lr = j.at("retrain_lr").get<double>();
  c.train_attack.epsilon = j.at("attack_eps").get<double>();
  c.train_attack.steps = j.at("attack_steps").get<int>();
  c.train_attack.step_size = j.at("attack_step_size").get<double>();
  return c;
}

double constraint_value(const BoundDist& bound, double eta, double lambda_star) {
  if (!(lambda_star > 0.0)) throw std::domain_error("constraint_value: lambda* must be > 0");
  if (!bound.has_value()) return -std::numeric_limits<double>::infinity();
  return bound->mu + normal_quantile(eta) * bound->var - std::log(lambda_star);
}

double augmented_lagrangian(double ce, double c, const AdmmState& st) {
  return ce + st.theta * c + 0.5 * st.rho * c * c;
}

Var augmented_lagrangian(Tape& tape, Var ce, Var c, const AdmmState& st) {
  return add(ce, add(scale(c, st.theta), scale(mul(c, c), 0.5 * st.rho)));
}

AdmmState dual_step(const AdmmState& st, double c, bool clamp) {
  AdmmState out = st;
  out.theta = st.theta + st.rho * c;
  if (clamp) out.theta = std::max(0.0, out.theta);
  return out;
}

namespace {

MatrixXd gather_rows(const MatrixXd& x, const std::vector<int>& idx, int start, int n) {
  MatrixXd out(n, x.cols());
  for (int i = 0; i < n; ++i) out.row(i) = x.row(idx[start + i]);
  return out;
}

VectorXi gather_labels(const VectorXi& y, const std::vector<int>& idx, int start, int n) {
  VectorXi out(n);
  for (int i = 0; i < n; ++i) out(i) = y(idx[start + i]);
  return out;
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw std::domain_error("percentile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

SearchRun::SearchRun(const SearchConfig& cfg_in)
    : cfg(cfg_in),
      spec(cfg_in.supernet_spec()),
      rng_data(Rng::derive(cfg_in.seed, "data")),
      rng_sample(Rng::derive(cfg_in.seed, "sample")),
      rng_attack(Rng::derive(cfg_in.seed, "attack")) {
  spec.validate();
  Rng rng_init(Rng::derive(cfg.seed, "init"));
  model = SupernetModel::init(spec, rng_init);
  dist = ArchDistribution::init(spec, 0.0, cfg.init_sigma);
  admm = {0.0, cfg.rho};
  w_opt.lr = cfg.w_lr;
  w_opt.momentum = cfg.w_momentum;
  w_opt.weight_decay = cfg.w_decay;
  a_opt.lr = cfg.arch_lr;
  a_opt.weight_decay = cfg.arch_decay;
  data = load_dataset(cfg.data);
  std::tie(weight_half, arch_half) =
      split_halves(static_cast<int>(data.x_train.rows()), rng_data);
}

void SearchRun::resolve_lambda_star() {
  if (cfg.lambda_star > 0.0) return;
  SearchConfig cc = cfg;
  cc.constraint_off = true;
  cc.lambda_star = 1.0;  // calibration never reads it on the step path
  cc.epochs = cfg.calib_epochs;
  SearchRun calib(cc);
  std::vector<double> observed;
  calib.bound_observer = &observed;
  calib.run("");
  cfg.lambda_star = percentile(observed, cfg.calib_percentile);
}

double SearchRun::arch_step(const MatrixXd& x, const VectorXi& y) {
  const ArchSample sample = sample_arch(spec, dist, rng_sample);
  // lambda_o refreshed from current weights, treated as constants below
  const auto lambdas = op_lipschitz_table(model);
  const double c_const = constant_C(model);
  if (bound_observer != nullptr) {
    bound_observer->push_back(sampled_bound(model, sample, c_const));
  }
  MatrixXd x_in = x;
  if (cfg.arch_adversarial) {
    SupernetClassifier clf(model, sample);
    x_in = pgd(clf, x, y, cfg.train_attack, rng_attack);
  }
  dist.zero_grads();
  model.zero_weight_grads();
  Tape tape;
  Var logits = mixture_forward(tape, model, &dist, sample, tape.constant(x_in),
                               {.arch_grad = true});
  Var ce = graph::softmax_cross_entropy(logits, one_hot(y, spec.n_classes));
  Var loss = ce;
  if (!cfg.constraint_off) {
    const ConstraintGraph cg = build_constraint_graph(
        tape, spec, dist, lambdas, c_const, cfg.eta, cfg.lambda_star);
    loss = augmented_lagrangian(tape, ce, cg.c, admm);
  }
  tape.backward(loss);
  a_opt.step(dist.params());
  model.zero_weight_grads();  // weights are frozen during this step
  return ce.scalar();
}

double SearchRun::weight_step(const MatrixXd& x, const VectorXi& y) {
  const ArchSample sample = sample_arch(spec, dist, rng_sample);  // fresh per batch
  model.zero_weight_grads();
  Tape tape;
  Var logits = mixture_forward(tape, model, nullptr, sample, tape.constant(x),
                               {.arch_grad = false});
  Var ce = graph::softmax_cross_entropy(logits, one_hot(y, spec.n_classes));
  tape.backward(ce);
  w_opt.step(model.weight_params());
  return ce.scalar();
}

EpochLog SearchRun::epoch_metrics(int epoch, double mean_ce) const {
  EpochLog row;
  row.epoch = epoch;
  row.ce = mean_ce;
  const BoundDist bound = network_bound_dist(model, dist, constant_C(model));
  row.c = constraint_value(bound, cfg.eta, cfg.lambda_star);
  row.theta = admm.theta;
  row.mu = bound ? bound->mu : -std::numeric_limits<double>::infinity();
  row.var = bound ? bound->var : 0.0;
  row.prob = bound ? ln_cdf(*bound, cfg.lambda_star) : 1.0;
  return row;
}

namespace {

std::string history_row_csv(const EpochLog& r) {
  return std::to_string(r.epoch) + "," + format_double(r.ce) + "," +
         format_double(r.c) + "," + format_double(r.theta) + "," +
         format_double(r.mu) + "," + format_double(r.var) + "," +
         format_double(r.prob);
}

}  // namespace

void SearchRun::epoch_pass(int epoch, const std::string& out_dir) {
  rng_data.shuffle(weight_half);
  rng_data.shuffle(arch_half);
  const int half = static_cast<int>(std::min(weight_half.size(), arch_half.size()));
  const int batch = std::min(cfg.batch_size, half);
  const int n_steps = std::max(1, half / batch);
  double ce_sum = 0.0;
  for (int b = 0; b < n_steps; ++b) {
    const MatrixXd xa = gather_rows(data.x_train, arch_half, b * batch, batch);
    const VectorXi ya = gather_labels(data.y_train, arch_half, b * batch, batch);
    const double arch_ce = arch_step(xa, ya);
    const MatrixXd xw = gather_rows(data.x_train, weight_half, b * batch, batch);
    const VectorXi yw = gather_labels(data.y_train, weight_half, b * batch, batch);
    const double w_ce = weight_step(xw, yw);
    if (!std::isfinite(arch_ce) || !std::isfinite(w_ce)) {
      if (!out_dir.empty()) save(out_dir + "/checkpoint-diagnostic.json");
      throw std::runtime_error("search aborted: non-finite loss at epoch " +
                               std::to_string(epoch) + " step " + std::to_string(b));
    }
    ce_sum += w_ce;
  }
  double c = constraint_value(network_bound_dist(model, dist, constant_C(model)),
                              cfg.eta, cfg.lambda_star);
  admm = dual_step(admm, c, cfg.clamp_dual);
  EpochLog row = epoch_metrics(epoch, ce_sum / n_steps);
  if (!std::isfinite(row.c) || !std::isfinite(row.theta) ||
      !std::isfinite(row.mu) || !std::isfinite(row.var)) {
    if (!out_dir.empty()) save(out_dir + "/checkpoint-diagnostic.json");
    throw std::runtime_error("search aborted: non-finite bound state at epoch " +
                             std::to_string(epoch));
  }
  history.push_back(row);
  epoch_done = epoch + 1;
  if (!out_dir.empty()) {
    append_csv_row(out_dir + "/history.csv", {history_row_csv(row)}, kHistoryHeader);
    save(out_dir + "/checkpoint.json");
  }
}

SearchResult SearchRun::run(const std::string& out_dir) {
  resolve_lambda_star();
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    save_config_toml(out_dir + "/config.toml", cfg);
    // rewrite history so far (resume into a fresh directory stays exact)
    std::ofstream hist(out_dir + "/history.csv");
    hist << kHistoryHeader << "\n";
    for (const EpochLog& r : history) hist << history_row_csv(r) << "\n";
  }
  for (int epoch = epoch_done; epoch < cfg.epochs; ++epoch) {
    epoch_pass(epoch, out_dir);
  }
  SearchResult res;
  res.genotype = genotype();
  res.history = history;
  res.lambda_star = cfg.lambda_star;
  if (!out_dir.empty()) {
    save_genotype(out_dir + "/genotype.json", res.genotype, spec, cfg.seed);
  }
  return res;
}

Genotype SearchRun::genotype() const {
  return discretize(spec, dist, cfg.parsed_score_rule());
}

void SearchRun::save(const std::string& path) const {
  CheckpointState st;
  st.epoch = epoch_done;
  // const_cast is contained to parameter enumeration for serialization
  auto& self = const_cast<SearchRun&>(*this);
  int i = 0;
  for (graph::Parameter* p : self.model.weight_params()) {
    st.tensors["w" + std::to_string(i++)] = p->value;
  }
  i = 0;
  for (graph::Parameter* p : self.dist.params()) {
    st.tensors["d" + std::to_string(i++)] = p->value;
  }
  for (std::size_t k = 0; k < w_opt.velocity.size(); ++k) {
    st.tensors["wv" + std::to_string(k)] = w_opt.velocity[k];
  }
  for (std::size_t k = 0; k < a_opt.m.size(); ++k) {
    st.tensors["am" + std::to_string(k)] = a_opt.m[k];
    st.tensors["av" + std::to_string(k)] = a_opt.v[k];
  }
  st.scalars["theta"] = admm.theta;
  st.scalars["rho"] = admm.rho;
  st.scalars["lambda_star"] = cfg.lambda_star;
  st.scalars["adam_t"] = static_cast<double>(a_opt.t);
  st.scalars["epoch_done"] = epoch_done;
  st.strings["rng_data"] = rng_data.save();
  st.strings["rng_sample"] = rng_sample.save();
  st.strings["rng_attack"] = rng_attack.save();
  st.strings["weight_half"] = int_list_str(weight_half);
  st.strings["arch_half"] = int_list_str(arch_half);
  std::string hist;
  for (const EpochLog& r : history) hist += history_row_csv(r) + "\n";
  st.strings["history"] = hist;
  save_checkpoint(path, st, config_to_json(cfg));
}

SearchRun SearchRun::restore(const std::string& path) {
  json cfg_json;
  CheckpointState st = load_checkpoint(path, &cfg_json);
  SearchConfig cfg = config_from_json(cfg_json);
  cfg.lambda_star = st.scalars.at("lambda_star");  // calibration already resolved
  SearchRun run(cfg);
  int i = 0;
  for (graph::Parameter* p : run.model.weight_params()) {
    p->value = st.tensors.at("w" + std::to_string(i++));
  }
  i = 0;
  for (graph::Parameter* p : run.dist.params()) {
    p->value = st.tensors.at("d" + std::to_string(i++));
  }
  const auto wp = run.model.weight_params();
  run.w_opt.velocity.clear();
  for (std::size_t k = 0; k < wp.size(); ++k) {
    const std::string key = "wv" + std::to_string(k);
    if (!st.tensors.count(key)) break;  // optimizer not stepped yet
    run.w_opt.velocity.push_back(st.tensors.at(key));
  }
  const auto ap = run.dist.params();
  run.a_opt.m.clear();
  run.a_opt.v.clear();
  for (std::size_t k = 0; k < ap.size(); ++k) {
    const std::string key = "am" + std::to_string(k);
    if (!st.tensors.count(key)) break;
    run.a_opt.m.push_back(st.tensors.at(key));
    run.a_opt.v.push_back(st.tensors.at("av" + std::to_string(k)));
  }
  run.a_opt.t = static_cast<std::int64_t>(st.scalars.at("adam_t"));
  run.admm.theta = st.scalars.at("theta");
  run.admm.rho = st.scalars.at("rho");
  run.epoch_done = static_cast<int>(st.scalars.at("epoch_done"));
  run.rng_data.load(st.strings.at("rng_data"));
  run.rng_sample.load(st.strings.at("rng_sample"));
  run.rng_attack.load(st.strings.at("rng_attack"));
  run.weight_half = parse_int_list(st.strings.at("weight_half"));
  run.arch_half = parse_int_list(st.strings.at("arch_half"));
  run.history.clear();
  std::stringstream hs(st.strings.at("history"));
  std::string line;
  while (std::getline(hs, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    EpochLog r;
    r.epoch = std::stoi(cells.at(0));
    r.ce = std::strtod(cells.at(1).c_str(), nullptr);
    r.c = std::strtod(cells.at(2).c_str(), nullptr);
    r.theta = std::strtod(cells.at(3).c_str(), nullptr);
    r.mu = std::strtod(cells.at(4).c_str(), nullptr);
    r.var = std::strtod(cells.at(5).c_str(), nullptr);
    r.prob = std::strtod(cells.at(6).c_str(), nullptr);
    run.history.push_back(r);
  }
  return run;
}

SearchResult search_loop(const SearchConfig& cfg, const std::string& out_dir) {
  SearchRun run(cfg);
  return run.run(out_dir);
}

SearchResult search_resume(const std::string& checkpoint_path,
                           const std::string& out_dir, int epochs_override) {
  SearchRun run = SearchRun::restore(checkpoint_path);
  if (epochs_override > 0) run.cfg.epochs = epochs_override;
  return run.run(out_dir);
}

DiscreteModel retrain(const Genotype& geno, const SearchConfig& cfg, bool adversarial,
                      std::vector<RetrainRow>* curve) {
  const SupernetSpec spec = cfg.supernet_spec();
  Rng rng_init(Rng::derive(cfg.seed, "retrain-init"));
  DiscreteModel m = DiscreteModel::init(spec, geno, rng_init);
  Dataset data = load_dataset(cfg.data);
  Rng rng_data(Rng::derive(cfg.seed, "retrain-data"));
  Rng rng_attack(Rng::derive(cfg.seed, "retrain-attack"));
  SgdMomentum opt;
  opt.lr = cfg.retrain_lr;
  opt.momentum = cfg.w_momentum;
  opt.weight_decay = cfg.w_decay;
  DiscreteClassifier clf(m);

  const int n = static_cast<int>(data.x_train.rows());
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  const int batch = std::min(cfg.batch_size, n);
  const int n_steps = std::max(1, n / batch);
  for (int epoch = 0; epoch < cfg.retrain_epochs; ++epoch) {
    rng_data.shuffle(idx);
    double loss_sum = 0.0;
    for (int b = 0; b < n_steps; ++b) {
      const MatrixXd xb = gather_rows(data.x_train, idx, b * batch, batch);
      const VectorXi yb = gather_labels(data.y_train, idx, b * batch, batch);
      double loss;
      if (adversarial) {
        loss = adv_train_step(clf, xb, yb, cfg.train_attack, rng_attack);
      } else {
        clf.zero_grads();
        loss = clf.loss_backward(xb, yb);
      }
      if (!std::isfinite(loss)) {
        throw std::runtime_error("retrain aborted: non-finite loss");
      }
      opt.step(m.params());
      loss_sum += loss;
    }
    if (curve != nullptr) {
      RetrainRow row;
      row.epoch = epoch;
      row.loss = loss_sum / n_steps;
      row.train_acc = accuracy(clf, data.x_train, data.y_train);
      row.test_acc = accuracy(clf, data.x_test, data.y_test);
      curve->push_back(row);
    }
  }
  return m;
}

void save_model(const std::string& path, DiscreteModel& model, const SearchConfig& cfg) {
  json j;
  j["kind"] = "racl-model";
  j["version"] = 1;
  j["config"] = config_to_json(cfg);
  j["genotype"] = genotype_to_json(model.geno, model.spec, cfg.seed);
  json tensors = json::object();
  int i = 0;
  for (graph::Parameter* p : model.params()) {
    tensors["p" + std::to_string(i++)] = matrix_to_json(p->value);
  }
  j["tensors"] = std::move(tensors);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump();
}

std::pair<DiscreteModel, SearchConfig> load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open model " + path);
  json j;
  f >> j;
  if (!j.contains("kind") || j["kind"].get<std::string>() != "racl-model") {
    throw std::runtime_error("not a racl model file: " + path);
  }
  SearchConfig cfg = config_from_json(j.at("config"));
  const Genotype geno = genotype_from_json(j.at("genotype"));
  Rng rng_init(Rng::derive(cfg.seed, "retrain-init"));
  DiscreteModel m = DiscreteModel::init(cfg.supernet_spec(), geno, rng_init);
  int i = 0;
  for (graph::Parameter* p : m.params()) {
    p->value = matrix_from_json(j.at("tensors").at("p" + std::to_string(i++)));
  }
  return {std::move(m), cfg};
}

}  // namespace racl

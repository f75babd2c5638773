// Command-line driver: search / retrain / attack / verify / gradcheck / report.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "racl/attacks.hpp"
#include "racl/dataio.hpp"
#include "racl/report.hpp"
#include "racl/search.hpp"
#include "racl/verify.hpp"

namespace fs = std::filesystem;
using namespace racl;

namespace {

SearchConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return SearchConfig{};
  return config_from_file(path);
}

int run_search(const std::string& config_path, std::uint64_t seed, bool seed_set,
               const std::string& out, const std::string& resume, int epochs_override) {
  fs::create_directories(out);
  SearchResult res;
  if (!resume.empty()) {
    res = search_resume(resume, out, epochs_override);
  } else {
    SearchConfig cfg = load_config_or_default(config_path);
    if (seed_set) cfg.seed = seed;
    if (epochs_override > 0) cfg.epochs = epochs_override;
    res = search_loop(cfg, out);
  }
  std::printf("search done: %zu epochs logged, lambda*=%s\n", res.history.size(),
              format_double(res.lambda_star).c_str());
  if (!res.history.empty()) {
    const EpochLog& last = res.history.back();
    std::printf("final: ce=%.4f c=%.6f theta=%.6f Pr[bound<=lambda*]=%.4f\n",
                last.ce, last.c, last.theta, last.prob);
  }
  std::printf("outputs: %s/genotype.json, history.csv, checkpoint.json\n", out.c_str());
  return 0;
}

int run_retrain(const std::string& genotype_path, const std::string& config_path,
                bool adv, std::uint64_t seed, bool seed_set, const std::string& out) {
  fs::create_directories(out);
  SearchConfig cfg = load_config_or_default(config_path);
  if (seed_set) cfg.seed = seed;
  const Genotype geno = load_genotype(genotype_path);
  std::vector<RetrainRow> curve;
  DiscreteModel model = retrain(geno, cfg, adv, &curve);
  save_model(out + "/model.json", model, cfg);
  save_config_toml(out + "/config.toml", cfg);
  const std::string curve_path = out + "/curve.csv";
  std::ofstream f(curve_path);
  f << "epoch,loss,train_acc,test_acc\n";
  for (const RetrainRow& r : curve) {
    f << r.epoch << "," << format_double(r.loss) << "," << format_double(r.train_acc)
      << "," << format_double(r.test_acc) << "\n";
  }
  std::printf("retrain done (%s): final train_acc=%.4f test_acc=%.4f\n",
              adv ? "adversarial" : "clean", curve.back().train_acc,
              curve.back().test_acc);
  return 0;
}

int run_attack(const std::string& model_path, const std::string& source_path,
               const std::string& attack, const std::vector<double>& eps_list,
               int steps, double step_size, std::uint64_t seed,
               const std::string& out) {
  fs::create_directories(out);
  auto [model, cfg] = load_model(model_path);
  DiscreteClassifier target(model);
  std::optional<std::pair<DiscreteModel, SearchConfig>> source;
  if (!source_path.empty()) source = load_model(source_path);

  const Dataset data = load_dataset(cfg.data);
  const std::string results = out + "/results.csv";
  for (double eps : eps_list) {
    AttackConfig acfg;
    acfg.kind = attack_from_name(attack);
    acfg.epsilon = eps;
    acfg.steps = acfg.kind == AttackConfig::Kind::FGSM ? 1 : steps;
    acfg.step_size = step_size > 0 ? step_size : std::max(eps / 4.0, 1e-4);
    Rng rng(Rng::derive(seed, "attack-eval"));
    double clean, adv;
    if (source) {
      DiscreteClassifier src(source->first);
      clean = accuracy(target, data.x_test, data.y_test);
      adv = transfer_eval(src, target, data.x_test, data.y_test, acfg, rng);
    } else {
      const EvalMetrics m = robust_accuracy(target, data.x_test, data.y_test, acfg, rng);
      clean = m.clean_acc;
      adv = m.adv_acc;
    }
    append_csv_row(results,
                   {attack, format_double(eps), std::to_string(acfg.steps),
                    std::to_string(seed), format_double(clean), format_double(adv)},
                   "attack,epsilon,steps,seed,clean_acc,adv_acc");
    std::printf("%s eps=%s steps=%d: clean=%.4f adv=%.4f%s\n", attack.c_str(),
                format_double(eps).c_str(), acfg.steps, clean, adv,
                source ? " (transfer)" : "");
  }
  std::printf("results: %s\n", results.c_str());
  return 0;
}

int run_verify(const std::string& suite, int cases, std::size_t n, std::uint64_t seed,
               bool verbose) {
  SearchConfig cfg;  // desk-scale defaults
  std::vector<verify::CaseResult> results;
  if (suite == "fw") {
    results = verify::fw_suite(cases, n, seed);
  } else if (suite == "product") {
    results = verify::product_suite(cases, n, seed);
  } else if (suite == "bound") {
    verify::BoundSuiteOptions opts;
    opts.seed = seed;
    opts.n_draws = n;
    results = verify::bound_suite(cfg, opts);
  } else if (suite == "constraint") {
    results = verify::constraint_suite(cfg, n, seed);
  } else {
    std::fprintf(stderr, "unknown suite '%s' (fw|product|bound|constraint)\n",
                 suite.c_str());
    return 2;
  }
  std::printf("suite %s:\n", suite.c_str());
  verify::print_cases(results, verbose);
  return verify::all_pass(results) ? 0 : 1;
}

int run_gradcheck(const std::string& target, std::uint64_t seed) {
  const auto results = verify::gradcheck_suite(target, seed);
  verify::print_cases(results, true);
  return verify::all_pass(results) ? 0 : 1;
}

int run_report(const std::vector<std::string>& history_dirs,
               const std::vector<std::string>& results_files, const std::string& out) {
  if (!results_files.empty()) report::write_sweep_tables(results_files, out);
  if (!history_dirs.empty()) report::write_ablation_table(history_dirs, out);
  std::printf("report written under %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"architecture search under a probabilistic Lipschitz budget"};
  app.require_subcommand(1);

  std::string config_path, out = "run", resume, genotype_path, model_path, source_path;
  std::string attack = "pgd", suite = "fw", target = "all";
  std::uint64_t seed = 1;
  bool adv = false, verbose = false;
  int steps = 7, cases = 100, epochs_override = 0;
  std::size_t n = 1000000;
  double step_size = 0.0;
  std::vector<double> eps_list{8.0 / 255.0};
  std::vector<std::string> history_dirs, results_files;

  auto* s_search = app.add_subcommand("search", "run the constrained architecture search");
  s_search->add_option("--config", config_path, "TOML config file");
  auto* seed_opt = s_search->add_option("--seed", seed, "seed override");
  s_search->add_option("--out", out, "output directory");
  s_search->add_option("--resume", resume, "checkpoint to resume from");
  s_search->add_option("--epochs", epochs_override, "override total epochs");

  auto* s_retrain = app.add_subcommand("retrain", "train a discrete genotype from scratch");
  s_retrain->add_option("--genotype", genotype_path, "genotype.json")->required();
  s_retrain->add_option("--config", config_path, "TOML config file");
  s_retrain->add_flag("--adv", adv, "PGD adversarial training");
  auto* seed_opt2 = s_retrain->add_option("--seed", seed, "seed override");
  s_retrain->add_option("--out", out, "output directory");

  auto* s_attack = app.add_subcommand("attack", "evaluate robust accuracy");
  s_attack->add_option("--model", model_path, "model.json")->required();
  s_attack->add_option("--attack", attack, "fgsm|pgd|mim");
  s_attack->add_option("--eps", eps_list, "epsilon values");
  s_attack->add_option("--steps", steps, "attack iterations");
  s_attack->add_option("--step-size", step_size, "attack step size");
  s_attack->add_option("--source-model", source_path, "transfer source model.json");
  s_attack->add_option("--seed", seed, "seed");
  s_attack->add_option("--out", out, "output directory");

  auto* s_verify = app.add_subcommand("verify", "Monte Carlo verification suites");
  s_verify->add_option("--suite", suite, "fw|product|bound|constraint");
  s_verify->add_option("--cases", cases, "number of random cases");
  s_verify->add_option("--n", n, "samples per case");
  s_verify->add_option("--seed", seed, "seed");
  s_verify->add_flag("--verbose", verbose, "print every case");

  auto* s_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  s_gradcheck->add_option("--target", target, "all|diffgraph|arch|lagrangian");
  s_gradcheck->add_option("--seed", seed, "seed");

  auto* s_report = app.add_subcommand("report", "sweep/ablation tables from run outputs");
  s_report->add_option("--history", history_dirs, "run directories (config.toml + history.csv)");
  s_report->add_option("--results", results_files, "results.csv files from attack runs");
  s_report->add_option("--out", out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (s_search->parsed()) {
      return run_search(config_path, seed, seed_opt->count() > 0, out, resume,
                        epochs_override);
    }
    if (s_retrain->parsed()) {
      return run_retrain(genotype_path, config_path, adv, seed,
                         seed_opt2->count() > 0, out);
    }
    if (s_attack->parsed()) {
      return run_attack(model_path, source_path, attack, eps_list, steps, step_size,
                        seed, out);
    }
    if (s_verify->parsed()) return run_verify(suite, cases, n, seed, verbose);
    if (s_gradcheck->parsed()) return run_gradcheck(target, seed);
    if (s_report->parsed()) return run_report(history_dirs, results_files, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

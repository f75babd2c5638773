#include "racl/report.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "racl/dataio.hpp"

namespace racl::report {

namespace {

struct ResultRow {
  std::string attack;
  double eps = 0.0;
  int steps = 0;
  double adv = 0.0;
};

std::vector<ResultRow> load_results(const std::vector<std::string>& files) {
  std::vector<ResultRow> rows;
  for (const std::string& rf : files) {
    const auto csv = read_csv(rf);
    for (std::size_t i = 1; i < csv.size(); ++i) {
      if (csv[i].size() < 6) continue;
      rows.push_back({csv[i][0], std::strtod(csv[i][1].c_str(), nullptr),
                      std::stoi(csv[i][2]), std::strtod(csv[i][5].c_str(), nullptr)});
    }
  }
  return rows;
}

}  // namespace

void write_sweep_tables(const std::vector<std::string>& results_files,
                        const std::string& out_dir) {
  const std::vector<ResultRow> rows = load_results(results_files);
  if (rows.empty()) throw std::runtime_error("report: no result rows found");
  std::filesystem::create_directories(out_dir);
  std::set<std::string> attacks;
  std::set<double> eps_set;
  for (const ResultRow& r : rows) {
    attacks.insert(r.attack);
    eps_set.insert(r.eps);
  }
  {
    std::ofstream f(out_dir + "/eps_sweep.csv");
    f << "epsilon";
    for (const auto& a : attacks) f << "," << a;
    f << "\n";
    for (double e : eps_set) {
      f << format_double(e);
      for (const auto& a : attacks) {
        double sum = 0.0;
        int cnt = 0;
        for (const ResultRow& r : rows) {
          if (r.attack == a && r.eps == e) {
            sum += r.adv;
            ++cnt;
          }
        }
        f << ",";
        if (cnt > 0) f << format_double(sum / cnt);
      }
      f << "\n";
    }
  }
  {
    std::set<int> steps_set;
    for (const ResultRow& r : rows) {
      if (r.attack != "fgsm") steps_set.insert(r.steps);
    }
    std::ofstream f(out_dir + "/iter_sweep.csv");
    f << "steps";
    for (const auto& a : attacks) {
      if (a != "fgsm") f << "," << a;
    }
    f << "\n";
    for (int s : steps_set) {
      f << s;
      for (const auto& a : attacks) {
        if (a == "fgsm") continue;
        double sum = 0.0;
        int cnt = 0;
        for (const ResultRow& r : rows) {
          if (r.attack == a && r.steps == s) {
            sum += r.adv;
            ++cnt;
          }
        }
        f << ",";
        if (cnt > 0) f << format_double(sum / cnt);
      }
      f << "\n";
    }
  }
}

void write_ablation_table(const std::vector<std::string>& run_dirs,
                          const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream f(out_dir + "/ablation.csv");
  f << "run,eta,rho,constraint_off,final_ce,final_c,final_theta,bound_mu,bound_var,"
       "prob_bound_le_lambda\n";
  for (const std::string& dir : run_dirs) {
    const auto kv = parse_kv_config(dir + "/config.toml");
    const auto hist = read_csv(dir + "/history.csv");
    if (hist.size() < 2) {
      throw std::runtime_error("report: " + dir + "/history.csv has no rows");
    }
    const auto& last = hist.back();
    const auto get = [&](const char* k) {
      const auto it = kv.find(k);
      return it == kv.end() ? std::string() : it->second;
    };
    f << std::filesystem::path(dir).filename().string() << "," << get("eta") << ","
      << get("rho") << "," << get("constraint_off") << "," << last[1] << ","
      << last[2] << "," << last[3] << "," << last[4] << "," << last[5] << ","
      << last[6] << "\n";
  }
}

}  // namespace racl::report

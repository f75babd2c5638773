#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "racl/report.hpp"

namespace fs = std::filesystem;

namespace {

std::string fixture(const std::string& rel) {
  return std::string(RACL_FIXTURE_DIR) + "/" + rel;
}

std::string read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

std::string out_dir() {
  const auto dir = fs::temp_directory_path() / "racl-report-test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("sweep tables reproduce the golden fixtures byte for byte") {
  const std::string out = out_dir();
  racl::report::write_sweep_tables(
      {fixture("results_constrained.csv"), fixture("results_unconstrained.csv")}, out);
  CHECK(read_all(out + "/eps_sweep.csv") == read_all(fixture("golden/eps_sweep.csv")));
  CHECK(read_all(out + "/iter_sweep.csv") == read_all(fixture("golden/iter_sweep.csv")));
}

TEST_CASE("ablation table reproduces the golden fixture byte for byte") {
  const std::string out = out_dir();
  racl::report::write_ablation_table(
      {fixture("run_constrained"), fixture("run_unconstrained")}, out);
  CHECK(read_all(out + "/ablation.csv") == read_all(fixture("golden/ablation.csv")));
}

TEST_CASE("report raises on missing inputs") {
  const std::string out = out_dir();
  CHECK_THROWS(racl::report::write_sweep_tables({fixture("absent.csv")}, out));
  CHECK_THROWS(racl::report::write_ablation_table({fixture("absent_dir")}, out));
}

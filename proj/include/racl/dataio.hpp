#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "racl/rng.hpp"
#include "racl/supernet.hpp"

#include <nlohmann/json_fwd.hpp>

namespace racl {

struct DatasetSpec {
  enum class Kind { Synthetic, MnistIdx };
  Kind kind = Kind::Synthetic;
  int input_dim = 16;
  int n_classes = 8;
  int n_train = 2048;
  int n_test = 512;
  std::uint64_t seed = 7;
  double class_separation = 4.0;
  std::string mnist_dir;  // expects the four standard idx files
};

struct Dataset {
  Eigen::MatrixXd x_train, x_test;
  Eigen::VectorXi y_train, y_test;
};

// M Gaussian blobs around unit-direction means scaled by class_separation,
// affinely mapped per-dimension into [0,1]; bit-reproducible per seed.
Dataset gen_synthetic(const DatasetSpec& spec);
Dataset load_dataset(const DatasetSpec& spec);

struct IdxTensor {
  int dtype = 0;                 // third magic byte
  std::vector<int> dims;
  std::vector<std::uint8_t> bytes;  // row-major payload (u8 dtype)
};

// Big-endian IDX reader; format errors name the offending byte offset.
IdxTensor read_idx(const std::string& path);
void write_idx(const std::string& path, const IdxTensor& t);

// Disjoint, exhaustive, seed-deterministic split into two equal halves.
std::pair<std::vector<int>, std::vector<int>> split_halves(int n, Rng& rng);

// genotype <-> JSON (lossless; includes widths and meta{seed, spec-hash})
void save_genotype(const std::string& path, const Genotype& geno,
                   const SupernetSpec& spec, std::uint64_t seed);
Genotype load_genotype(const std::string& path);
nlohmann::json genotype_to_json(const Genotype& geno, const SupernetSpec& spec,
                                std::uint64_t seed);
Genotype genotype_from_json(const nlohmann::json& j);

// Flat key-value config files (TOML-style `key = value` lines, # comments,
// [section] headers ignored). Unknown keys warn; they never fail the parse.
std::map<std::string, std::string> parse_kv_config(const std::string& path);

// Generic versioned checkpoint container (search packs/unpacks it).
struct CheckpointState {
  int version = 1;
  int epoch = 0;
  std::map<std::string, Eigen::MatrixXd> tensors;
  std::map<std::string, std::string> strings;  // rng states etc.
  std::map<std::string, double> scalars;
};

void save_checkpoint(const std::string& path, const CheckpointState& st,
                     const nlohmann::json& config);
// throws on unknown version; schema errors list the missing keys
CheckpointState load_checkpoint(const std::string& path, nlohmann::json* config_out);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

// fixed-header metrics CSV helpers
std::string format_double(double v);  // shortest round-trippable decimal
void append_csv_row(const std::string& path, const std::vector<std::string>& cells,
                    const std::string& header_if_new);
std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace racl

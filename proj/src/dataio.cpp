#include "racl/dataio.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace racl {

using nlohmann::json;

Dataset gen_synthetic(const DatasetSpec& spec) {
  if (spec.n_classes < 2) throw std::invalid_argument("gen_synthetic: need M >= 2");
  if (spec.n_train % spec.n_classes != 0 || spec.n_test % spec.n_classes != 0) {
    throw std::invalid_argument("gen_synthetic: set sizes must be divisible by the class count");
  }
  Rng rng(Rng::derive(spec.seed, "synthetic"));
  const int d = spec.input_dim, m = spec.n_classes;
  const int total = spec.n_train + spec.n_test;
  const int per_class = total / m;

  // unit-norm mean directions scaled by the separation
  Eigen::MatrixXd means(m, d);
  for (int c = 0; c < m; ++c) {
    for (int j = 0; j < d; ++j) means(c, j) = rng.normal();
    means.row(c) *= spec.class_separation / means.row(c).norm();
  }

  Eigen::MatrixXd x(total, d);
  Eigen::VectorXi y(total);
  int row = 0;
  for (int c = 0; c < m; ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      for (int j = 0; j < d; ++j) x(row, j) = means(c, j) + rng.normal();
      y(row) = c;
    }
  }

  // per-dimension affine map into [0,1]
  for (int j = 0; j < d; ++j) {
    const double lo = x.col(j).minCoeff(), hi = x.col(j).maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    x.col(j) = (x.col(j).array() - lo) / span;
  }

  // per-class split keeps the counts exactly n/M in both sets
  const int train_per_class = spec.n_train / m;
  Dataset out;
  out.x_train.resize(spec.n_train, d);
  out.y_train.resize(spec.n_train);
  out.x_test.resize(spec.n_test, d);
  out.y_test.resize(spec.n_test);
  int tr = 0, te = 0;
  for (int c = 0; c < m; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const int src = c * per_class + i;
      if (i < train_per_class) {
        out.x_train.row(tr) = x.row(src);
        out.y_train(tr++) = c;
      } else {
        out.x_test.row(te) = x.row(src);
        out.y_test(te++) = c;
      }
    }
  }
  return out;
}

namespace {

Eigen::MatrixXd idx_images_01(const IdxTensor& t) {
  if (t.dims.empty()) throw std::runtime_error("idx: no dimensions");
  const int n = t.dims[0];
  int row_elems = 1;
  for (std::size_t i = 1; i < t.dims.size(); ++i) row_elems *= t.dims[i];
  Eigen::MatrixXd x(n, row_elems);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < row_elems; ++c) {
      x(r, c) = static_cast<double>(t.bytes[static_cast<std::size_t>(r) * row_elems + c]) / 255.0;
    }
  }
  return x;
}

}  // namespace

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.kind == DatasetSpec::Kind::Synthetic) return gen_synthetic(spec);
  const std::string base = spec.mnist_dir;
  const IdxTensor train_x = read_idx(base + "/train-images-idx3-ubyte");
  const IdxTensor train_y = read_idx(base + "/train-labels-idx1-ubyte");
  const IdxTensor test_x = read_idx(base + "/t10k-images-idx3-ubyte");
  const IdxTensor test_y = read_idx(base + "/t10k-labels-idx1-ubyte");
  Dataset out;
  out.x_train = idx_images_01(train_x);
  out.x_test = idx_images_01(test_x);
  out.y_train.resize(train_y.dims[0]);
  for (int i = 0; i < train_y.dims[0]; ++i) out.y_train(i) = train_y.bytes[i];
  out.y_test.resize(test_y.dims[0]);
  for (int i = 0; i < test_y.dims[0]; ++i) out.y_test(i) = test_y.bytes[i];
  return out;
}

IdxTensor read_idx(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("idx: cannot open " + path);
  std::vector<char> raw((std::istreambuf_iterator<char>(f)),
                        std::istreambuf_iterator<char>());
  const auto fail = [&](std::size_t offset, const std::string& what) {
    throw std::runtime_error("idx format error at byte " + std::to_string(offset) +
                             " in " + path + ": " + what);
  };
  if (raw.size() < 4) fail(raw.size(), "truncated magic");
  const auto u8 = [&](std::size_t i) { return static_cast<std::uint8_t>(raw[i]); };
  if (u8(0) != 0 || u8(1) != 0) fail(0, "bad magic prefix");
  IdxTensor t;
  t.dtype = u8(2);
  if (t.dtype != 0x08) fail(2, "unsupported dtype (only unsigned byte)");
  const int rank = u8(3);
  if (rank == 0) fail(3, "zero-dimensional tensor");
  std::size_t off = 4;
  std::size_t count = 1;
  for (int i = 0; i < rank; ++i, off += 4) {
    if (off + 4 > raw.size()) fail(off, "truncated dimension");
    const std::uint32_t dim = (static_cast<std::uint32_t>(u8(off)) << 24) |
                              (static_cast<std::uint32_t>(u8(off + 1)) << 16) |
                              (static_cast<std::uint32_t>(u8(off + 2)) << 8) |
                              static_cast<std::uint32_t>(u8(off + 3));
    t.dims.push_back(static_cast<int>(dim));
    count *= dim;
  }
  if (raw.size() != off + count) fail(off, "payload size mismatch");
  t.bytes.assign(raw.begin() + static_cast<std::ptrdiff_t>(off), raw.end());
  return t;
}

void write_idx(const std::string& path, const IdxTensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("idx: cannot write " + path);
  const char magic[4] = {0, 0, static_cast<char>(t.dtype),
                         static_cast<char>(t.dims.size())};
  f.write(magic, 4);
  for (int d : t.dims) {
    const char dim[4] = {static_cast<char>((d >> 24) & 0xff),
                         static_cast<char>((d >> 16) & 0xff),
                         static_cast<char>((d >> 8) & 0xff),
                         static_cast<char>(d & 0xff)};
    f.write(dim, 4);
  }
  f.write(reinterpret_cast<const char*>(t.bytes.data()),
          static_cast<std::streamsize>(t.bytes.size()));
}

std::pair<std::vector<int>, std::vector<int>> split_halves(int n, Rng& rng) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  const int half = n / 2;
  return {std::vector<int>(perm.begin(), perm.begin() + half),
          std::vector<int>(perm.begin() + half, perm.begin() + 2 * half)};
}

json genotype_to_json(const Genotype& geno, const SupernetSpec& spec,
                      std::uint64_t seed) {
  const auto table_json = [](const std::vector<std::array<GenotypeEdge, 2>>& t) {
    json out = json::array();
    for (const auto& node : t) {
      out.push_back({{node[0].pred, op_name(node[0].op)},
                     {node[1].pred, op_name(node[1].op)}});
    }
    return out;
  };
  std::vector<int> widths;
  for (int k = 0; k < spec.n_cells; ++k) widths.push_back(spec.node_width(k));
  json j;
  j["normal"] = table_json(geno.normal);
  j["reduce"] = table_json(geno.reduce);
  j["widths"] = widths;
  j["meta"] = {{"seed", seed}, {"spec_hash", spec.hash()}};
  return j;
}

Genotype genotype_from_json(const json& j) {
  const auto table_from = [](const json& t) {
    std::vector<std::array<GenotypeEdge, 2>> out;
    for (const auto& node : t) {
      std::array<GenotypeEdge, 2> picks;
      for (int s = 0; s < 2; ++s) {
        picks[s].pred = node[s][0].get<int>();
        picks[s].op = op_from_name(node[s][1].get<std::string>());
      }
      out.push_back(picks);
    }
    return out;
  };
  Genotype g;
  g.normal = table_from(j.at("normal"));
  g.reduce = table_from(j.at("reduce"));
  return g;
}

void save_genotype(const std::string& path, const Genotype& geno,
                   const SupernetSpec& spec, std::uint64_t seed) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << genotype_to_json(geno, spec, seed).dump(2) << "\n";
}

Genotype load_genotype(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  json j;
  f >> j;
  return genotype_from_json(j);
}

std::map<std::string, std::string> parse_kv_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    // strip comments and whitespace
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') continue;  // section headers carry no data here
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config " + path + ":" + std::to_string(lineno) +
                               ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (val.size() >= 2 && ((val.front() == '"' && val.back() == '"') ||
                            (val.front() == '\'' && val.back() == '\''))) {
      val = val.substr(1, val.size() - 2);
    }
    out[key] = val;
  }
  return out;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(m.data(), m.data() + m.size());
  j["data"] = data;  // column-major
  return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const std::vector<double> data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::runtime_error("matrix_from_json: size mismatch");
  }
  Eigen::MatrixXd m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const std::string& path, const CheckpointState& st,
                     const json& config) {
  json j;
  j["version"] = kCheckpointVersion;
  j["kind"] = "racl-checkpoint";
  j["epoch"] = st.epoch;
  j["config"] = config;
  json tensors = json::object();
  for (const auto& [name, m] : st.tensors) tensors[name] = matrix_to_json(m);
  j["tensors"] = std::move(tensors);
  j["strings"] = st.strings;
  j["scalars"] = st.scalars;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f << j.dump();
  }
  std::filesystem::rename(tmp, path);
}

CheckpointState load_checkpoint(const std::string& path, json* config_out) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  json j;
  f >> j;
  std::vector<std::string> missing;
  for (const char* key : {"version", "kind", "epoch", "config", "tensors", "strings", "scalars"}) {
    if (!j.contains(key)) missing.push_back(key);
  }
  if (!missing.empty()) {
    std::string what = "checkpoint schema mismatch, missing keys:";
    for (const auto& k : missing) what += " " + k;
    throw std::runtime_error(what);
  }
  if (j["kind"].get<std::string>() != "racl-checkpoint") {
    throw std::runtime_error("not a racl checkpoint: " + path);
  }
  if (j["version"].get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unknown checkpoint version " +
                             std::to_string(j["version"].get<int>()));
  }
  CheckpointState st;
  st.version = j["version"].get<int>();
  st.epoch = j["epoch"].get<int>();
  for (const auto& [name, mj] : j["tensors"].items()) {
    st.tensors[name] = matrix_from_json(mj);
  }
  st.strings = j["strings"].get<std::map<std::string, std::string>>();
  st.scalars = j["scalars"].get<std::map<std::string, double>>();
  if (config_out != nullptr) *config_out = j["config"];
  return st;
}

std::string format_double(double v) {
  // shortest decimal that round-trips (printf %.17g is always sufficient;
  // try shorter forms first so CSVs stay readable)
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

void append_csv_row(const std::string& path, const std::vector<std::string>& cells,
                    const std::string& header_if_new) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot write " + path);
  if (fresh && !header_if_new.empty()) f << header_if_new << "\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) f << ",";
    f << cells[i];
  }
  f << "\n";
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace racl

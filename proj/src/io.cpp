#include "mwh/io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mwh {

namespace {

json matrix_rows(const Mat<double>& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat<double> matrix_from_rows(const json& rows) {
  if (!rows.is_array()) throw std::invalid_argument("matrix must be a list of rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n ? static_cast<Eigen::Index>(rows.at(0).size()) : Eigen::Index(0);
  Mat<double> out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != m) throw std::invalid_argument("ragged matrix");
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return out;
}

}  // namespace

json tree_to_json(const Filtration& f, std::optional<std::uint64_t> seed) {
  json j;
  j["depth"] = f.depth();
  const auto counts = f.branching().counts();
  bool uniform = !counts.empty();
  for (int c : counts) uniform = uniform && c == counts.front();
  if (uniform)
    j["branching"] = counts.front();
  else
    j["branching"] = counts;
  j["leaf_masses"] = f.leaf_masses();
  if (seed) j["seed"] = *seed;
  return j;
}

Filtration tree_from_json(const json& j) {
  const int depth = j.at("depth").get<int>();
  const json& b = j.at("branching");
  const Branching br = b.is_array() ? Branching::per_atom(b.get<std::vector<int>>())
                                    : Branching::uniform(b.get<int>());
  const auto masses = j.at("leaf_masses").get<std::vector<double>>();
  return Filtration::build(depth, br, masses);
}

json measure_to_json(const MatrixMeasure<double>& w) {
  json j = json::array();
  for (const auto& m : w.leaf_masses()) j.push_back(matrix_rows(m));
  return j;
}

MatrixMeasure<double> measure_from_json(const Filtration& f, const json& j) {
  std::vector<Mat<double>> masses;
  for (const auto& m : j) masses.push_back(matrix_from_rows(m));
  if (masses.empty()) throw std::invalid_argument("measure has no leaves");
  return MatrixMeasure<double>(f, std::move(masses), static_cast<int>(masses.front().rows()));
}

AtomId atom_from_path(const Filtration& f, const std::vector<int>& path) {
  AtomId q = f.root();
  for (int c : path) {
    const Atom& a = f.atom(q);
    if (c < 0 || static_cast<std::size_t>(c) >= a.children.size())
      throw std::invalid_argument("atom path leaves the tree");
    q = a.children[static_cast<std::size_t>(c)];
  }
  return q;
}

json operator_to_json(const Filtration& f, const ShiftOperator<double>& t) {
  json j;
  j["r"] = t.complexity();
  j["flags"] = {{"is_big_haar", t.flags().is_big_haar},
                {"annihilates_constants", t.flags().annihilates_constants}};
  json blocks = json::array();
  for (const auto& b : t.blocks())
    blocks.push_back({{"atom_path", f.atom(b.owner).path},
                      {"grid_rank", b.grid_rank},
                      {"grid", matrix_rows(b.grid)}});
  j["blocks"] = std::move(blocks);
  return j;
}

ShiftOperator<double> operator_from_json(const Filtration& f, const json& j) {
  ShiftFlags flags;
  if (j.contains("flags")) {
    flags.is_big_haar = j["flags"].value("is_big_haar", false);
    flags.annihilates_constants = j["flags"].value("annihilates_constants", false);
  }
  ShiftOperator<double> t(j.at("r").get<int>(), flags);
  for (const auto& b : j.at("blocks")) {
    KernelBlock<double> k;
    k.owner = atom_from_path(f, b.at("atom_path").get<std::vector<int>>());
    k.grid_rank = b.at("grid_rank").get<int>();
    k.grid = matrix_from_rows(b.at("grid"));
    t.add_block(f, std::move(k));
  }
  return t;
}

void write_dense(const std::string& path, const Mat<double>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write("MWHM", 4);
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()),
            static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Mat<double> read_dense(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[4];
  std::uint64_t rows = 0, cols = 0;
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MWHM", 4) != 0) throw std::runtime_error("bad dense header: " + path);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
      static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated dense file: " + path);
  return rm;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return json::parse(in);
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace mwh

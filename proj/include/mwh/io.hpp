#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "mwh/measure.hpp"
#include "mwh/shift.hpp"

namespace mwh {

using json = nlohmann::json;

/// {depth, branching, leaf_masses, seed?}. branching is an integer when every
/// non-leaf atom has the same child count, else a list in breadth-first order.
json tree_to_json(const Filtration& f, std::optional<std::uint64_t> seed = std::nullopt);
Filtration tree_from_json(const json& j);

/// Array of leaf matrices, each a list of rows.
json measure_to_json(const MatrixMeasure<double>& w);
MatrixMeasure<double> measure_from_json(const Filtration& f, const json& j);

/// {r, flags: {is_big_haar, annihilates_constants}, blocks: [{atom_path, grid_rank, grid}]}.
json operator_to_json(const Filtration& f, const ShiftOperator<double>& t);
ShiftOperator<double> operator_from_json(const Filtration& f, const json& j);

AtomId atom_from_path(const Filtration& f, const std::vector<int>& path);

/// Flat dump: "MWHM", uint64 rows, uint64 cols, then row-major doubles (little endian).
void write_dense(const std::string& path, const Mat<double>& m);
Mat<double> read_dense(const std::string& path);

json read_json_file(const std::string& path);
/// Writes j.dump(2) plus a newline; throws std::runtime_error when the path is unwritable.
void write_json_file(const std::string& path, const json& j);

}  // namespace mwh

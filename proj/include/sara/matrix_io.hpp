#pragma once

#include <filesystem>
#include <iosfwd>

#include "json.hpp"
#include "sara/matcore.hpp"

namespace sara {

// Binary layout: u64 rows, u64 cols (little-endian), then rows*cols little-endian
// IEEE-754 doubles in row-major order.
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);
void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

// JSON form: array of rows, each an array of numbers.
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace sara

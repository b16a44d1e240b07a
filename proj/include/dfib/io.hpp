#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfib/linalg.hpp"
#include "dfib/transforms.hpp"

namespace dfib::io {

using nlohmann::json;

/// 17 significant digits, enough to round-trip a double.
std::string fmt17(double v);

/// Uniform grid of row-major samples (last axis fastest), endpoints included.
///   # axes: x0 -1 1, x1 -1 1; shape: 65, 65
///   v v v ...
/// Values may be split over lines and separated by commas or blanks.
struct GridFile {
  std::vector<std::string> names;
  Box box;
  std::vector<size_t> shape;
  std::vector<double> values;
};

GridFile read_grid_file(const std::filesystem::path& path);
GridFile parse_grid_file(const std::string& text);
std::string format_grid_file(const GridFile& g);
ScalarField grid_field(const GridFile& g);

/// Long-format CSV: a `# axes: ...; shape: ...` comment, a column line, then one
/// row per node (first axis slowest) with the value and the node error if any.
std::string sinogram_csv(const Sinogram& s);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

std::string sha256_hex(const std::string& bytes);

json to_json(const Vec& v);
json to_json(const CVec& v);  // [[re, im], ...]
Vec vec_from_json(const json& j);

struct Manifest {
  std::string command;
  std::string config_path;
  std::string config_hash;
  unsigned long long seed = 0;
  int threads = 0;
  double wall_seconds = 0;
  std::string status;
  std::vector<std::string> outputs;
  json summary;

  json to_json() const;
};

/// Library and compiler versions this binary was built with.
json build_versions();

}  // namespace dfib::io

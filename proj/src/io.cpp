#include "dfib/io.hpp"

#include <openssl/evp.h>
#include <openssl/opensslv.h>
#include <tbb/version.h>

#include <Eigen/Core>
#include <boost/algorithm/string.hpp>
#include <boost/version.hpp>
#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dfib/error.hpp"

#ifndef DFIB_VERSION
#define DFIB_VERSION "dev"
#endif

namespace dfib::io {

std::string fmt17(double v) { return fmt::format("{:.17g}", v); }

namespace {

double parse_double(const std::string& tok, int line) {
  try {
    size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ParseError, fmt::format("line {}: not a number: '{}'", line, tok));
  }
}

std::vector<std::string> split_tokens(const std::string& s, const char* seps) {
  std::vector<std::string> out;
  boost::split(out, s, boost::is_any_of(seps), boost::token_compress_on);
  std::erase_if(out, [](const std::string& t) { return t.empty(); });
  return out;
}

}  // namespace

GridFile parse_grid_file(const std::string& text) {
  GridFile g;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    boost::trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header) continue;
      const auto ax = line.find("axes:"), sh = line.find("shape:");
      if (ax == std::string::npos || sh == std::string::npos)
        throw Error(ErrorKind::ParseError, fmt::format("line {}: expected '# axes: ...; shape: ...'", lineno));
      std::string axes = line.substr(ax + 5, line.find(';', ax) - ax - 5);
      for (const auto& a : split_tokens(axes, ",")) {
        const auto t = split_tokens(a, " \t");
        if (t.size() != 3) throw Error(ErrorKind::ParseError, fmt::format("line {}: axis '{}' is not 'name lo hi'", lineno, a));
        g.names.push_back(t[0]);
        g.box.axes.push_back({parse_double(t[1], lineno), parse_double(t[2], lineno)});
      }
      for (const auto& s : split_tokens(line.substr(sh + 6), ", \t")) {
        const double v = parse_double(s, lineno);
        if (v < 2 || v != std::floor(v))
          throw Error(ErrorKind::ParseError, fmt::format("line {}: bad shape entry '{}'", lineno, s));
        g.shape.push_back(static_cast<size_t>(v));
      }
      if (g.shape.size() != g.names.size())
        throw Error(ErrorKind::ParseError, fmt::format("line {}: {} axes but {} shape entries", lineno, g.names.size(), g.shape.size()));
      header = true;
      continue;
    }
    if (!header) throw Error(ErrorKind::ParseError, fmt::format("line {}: data before the header", lineno));
    for (const auto& t : split_tokens(line, ", \t")) g.values.push_back(parse_double(t, lineno));
  }
  if (!header) throw Error(ErrorKind::ParseError, "missing '# axes: ...; shape: ...' header");
  size_t total = 1;
  for (size_t s : g.shape) total *= s;
  if (g.values.size() != total)
    throw Error(ErrorKind::ParseError, fmt::format("expected {} values, found {}", total, g.values.size()));
  return g;
}

GridFile read_grid_file(const std::filesystem::path& path) { return parse_grid_file(read_text(path)); }

std::string format_grid_file(const GridFile& g) {
  std::string out = "# axes: ";
  for (size_t i = 0; i < g.names.size(); ++i)
    out += fmt::format("{}{} {} {}", i ? ", " : "", g.names[i], fmt17(g.box.axes[i].first), fmt17(g.box.axes[i].second));
  out += "; shape: ";
  for (size_t i = 0; i < g.shape.size(); ++i) out += fmt::format("{}{}", i ? ", " : "", g.shape[i]);
  out += "\n";
  const size_t row = g.shape.empty() ? 1 : g.shape.back();
  for (size_t i = 0; i < g.values.size(); ++i) {
    out += fmt17(g.values[i]);
    out += (i + 1) % row == 0 ? "\n" : ",";
  }
  return out;
}

ScalarField grid_field(const GridFile& g) { return ScalarField::from_samples(g.values, g.shape, g.box); }

std::string sinogram_csv(const Sinogram& s) {
  const auto shape = s.grid.shape();
  std::string out = "# axes: ";
  for (size_t i = 0; i < s.grid.names.size(); ++i) out += (i ? ", " : "") + s.grid.names[i];
  out += "; shape: ";
  for (size_t i = 0; i < shape.size(); ++i) out += fmt::format("{}{}", i ? ", " : "", shape[i]);
  out += "\n";
  for (const auto& n : s.grid.names) out += n + ",";
  out += "value,error\n";
  for (size_t i = 0; i < s.values.size(); ++i) {
    const Vec p = s.grid.point(i);
    for (int k = 0; k < p.size(); ++k) out += fmt17(p[k]) + ",";
    out += fmt17(s.values[i]) + ",";
    if (i < s.errors.size() && !s.errors[i].empty()) {
      std::string e = s.errors[i];
      std::replace(e.begin(), e.end(), ',', ';');
      std::replace(e.begin(), e.end(), '\n', ' ');
      out += e;
    }
    out += "\n";
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::ParseError, "cannot write " + path.string());
  out << text;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

json to_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json to_json(const CVec& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back({v[i].real(), v[i].imag()});
  return j;
}

Vec vec_from_json(const json& j) {
  Vec v(static_cast<int>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

json Manifest::to_json() const {
  json j;
  j["command"] = command;
  j["config"] = config_path;
  j["config_sha256"] = config_hash;
  j["seed"] = seed;
  j["threads"] = threads;
  j["wall_seconds"] = wall_seconds;
  j["status"] = status;
  j["outputs"] = outputs;
  j["summary"] = summary;
  j["versions"] = build_versions();
  return j;
}

json build_versions() {
  json v;
  v["dfib"] = DFIB_VERSION;
#if defined(__clang__)
  v["compiler"] = fmt::format("clang {}.{}.{}", __clang_major__, __clang_minor__, __clang_patchlevel__);
#elif defined(__GNUC__)
  v["compiler"] = fmt::format("gcc {}.{}.{}", __GNUC__, __GNUC_MINOR__, __GNUC_PATCHLEVEL__);
#endif
  v["eigen"] = fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
  v["boost"] = fmt::format("{}.{}.{}", BOOST_VERSION / 100000, BOOST_VERSION / 100 % 1000, BOOST_VERSION % 100);
  v["tbb"] = fmt::format("{}.{}", TBB_VERSION_MAJOR, TBB_VERSION_MINOR);
  v["fmt"] = fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100);
  v["nlohmann_json"] = fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                   NLOHMANN_JSON_VERSION_PATCH);
  v["openssl"] = OPENSSL_VERSION_TEXT;
  return v;
}

}  // namespace dfib::io

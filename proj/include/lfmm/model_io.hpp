// SPDX-License-Identifier: Apache-2.0
//
// JSON model descriptions and matrix files.
//
//   {
//     "p": 200, "rho": 0.5, "s": [1.5, 0.5],
//     "v": {"construction": "diag_scaled_haar", "scales": [2.0], "seed": 7},
//     "noise": {"default": "gaussian",
//               "overrides": [{"index": 0, "law": "rademacher"}]}
//   }
//
// "v.construction" is one of haar, diag_scaled_haar, matrix_file (with
// "path"). "noise" may also be a plain array of p law names. Factor indices
// are 0-based.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lfmm/common.hpp"
#include "lfmm/model.hpp"

namespace lfmm {

using json = nlohmann::json;

inline constexpr char kMatrixMagic[8] = {'L', 'F', 'M', 'M', 'M', 'A', 'T', '1'};

/// Reads a dense matrix. Binary files start with the 8-byte magic "LFMMMAT1",
/// then uint64 rows, uint64 cols and rows*cols little-endian float64 values in
/// row-major order. Anything else is parsed as CSV, one row per line, with
/// '#' comment lines.
inline Matrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open matrix file " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() == 8 && std::memcmp(magic, kMatrixMagic, 8) == 0) {
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 8);
    in.read(reinterpret_cast<char*>(&cols), 8);
    if (!in || rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20))
      throw ConfigError("bad matrix header in " + path.string());
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::vector<double> row(cols);
    for (std::uint64_t i = 0; i < rows; ++i) {
      in.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(cols * sizeof(double)));
      if (!in) throw ConfigError("truncated matrix file " + path.string());
      for (std::uint64_t j = 0; j < cols; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return m;
  }

  in.clear();
  in.seekg(0);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ConfigError("non-numeric entry '" + cell + "' in " + path.string());
      }
    }
    if (!rows.empty() && values.size() != rows.front().size())
      throw ConfigError("ragged rows in " + path.string());
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw ConfigError("empty matrix file " + path.string());
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

inline void write_matrix_binary(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(kMatrixMagic, 8);
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

namespace detail {

template <class T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad \"" + key + "\": " + e.what());
  }
}

inline std::vector<NoiseLaw> parse_noise(const json& j, int p) {
  std::vector<NoiseLaw> laws;
  if (!j.is_array() && !j.is_object())
    throw ConfigError("model.noise must be an array or an object");
  if (j.is_array()) {
    for (const auto& name : j) laws.push_back(parse_noise_law(name.get<std::string>()));
    if (static_cast<int>(laws.size()) != p)
      throw ConfigError("model.noise array must have p entries");
    return laws;
  }
  laws.assign(static_cast<std::size_t>(p),
              parse_noise_law(j.value("default", std::string("gaussian"))));
  for (const auto& o : j.value("overrides", json::array())) {
    const int index = require<int>(o, "index", "model.noise.overrides");
    if (index < 0 || index >= p)
      throw ConfigError("model.noise.overrides: index out of range");
    laws[static_cast<std::size_t>(index)] =
        parse_noise_law(require<std::string>(o, "law", "model.noise.overrides"));
  }
  return laws;
}

}  // namespace detail

/// Builds the spec described by `j`. Relative matrix paths resolve against
/// `base_dir`.
inline LfmmSpec spec_from_json(const json& j,
                               const std::filesystem::path& base_dir = {}) {
  LfmmSpec spec;
  spec.p = detail::require<int>(j, "p", "model");
  if (spec.p < 1) throw ConfigError("model.p must be >= 1");
  spec.rho = j.value("rho", 0.5);
  const auto s = j.value("s", std::vector<double>{});
  spec.q = static_cast<int>(s.size());
  if (spec.q > spec.p) throw ConfigError("model.s longer than p");
  spec.s = Eigen::Map<const Vector>(s.data(), spec.q);

  const json v = j.value("v", json{{"construction", "haar"}});
  const auto construction = v.value("construction", std::string("haar"));
  const auto seed = v.value("seed", std::uint64_t{0});
  if (construction == "haar") {
    spec.V = build_haar_orthogonal(spec.p, seed);
  } else if (construction == "diag_scaled_haar") {
    const auto scales = detail::require<std::vector<double>>(v, "scales", "model.v");
    spec.V = build_diag_scaled_haar(spec.p, scales, seed);
  } else if (construction == "matrix_file") {
    std::filesystem::path path = detail::require<std::string>(v, "path", "model.v");
    if (path.is_relative()) path = base_dir / path;
    spec.V = read_matrix_file(path);
  } else {
    throw ConfigError("model.v.construction: unknown '" + construction + "'");
  }
  spec.noise_laws = detail::parse_noise(j.value("noise", json::object()), spec.p);
  return spec;
}

/// Summary of a spec (not a round-trippable description of V).
inline json spec_summary(const LfmmSpec& spec) {
  json laws = json::array();
  for (NoiseLaw l : spec.informative_laws()) laws.push_back(std::string(to_string(l)));
  std::vector<double> s(spec.s.data(), spec.s.data() + spec.s.size());
  return {{"p", spec.p}, {"q", spec.q}, {"rho", spec.rho}, {"s", s},
          {"informative_laws", laws}};
}

inline json validation_to_json(const ValidationReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name},
                      {"passed", c.passed},
                      {"severity", c.severity == Severity::error ? "error" : "warning"},
                      {"detail", c.detail}});
  return {{"passed", r.passed()},
          {"violations", r.violations()},
          {"checks", checks},
          {"mean_norm", r.mean_norm},
          {"cov_norm", r.cov_norm},
          {"cov_inv_norm", r.cov_inv_norm},
          {"max_cross_cosine", r.max_cross_cosine}};
}

}  // namespace lfmm

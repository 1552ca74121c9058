#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "daemx/csv.hpp"
#include "daemx/model.hpp"

namespace daemx {

/**
 * JSON model config. Shape:
 * {
 *   "m": 2, "n": 2, "p": 1,
 *   "grid": {"t0": 0.0, "t_end": 2.0, "n_steps": 2000},
 *   "F": [[1, 0], [0, 0]],
 *   "C": {"closed_form": [["const:-1", "const:1"], [{"kind": "sin", "amp": 1,
 *          "omega": 3.141592653589793, "phase": 0}, "const:0"]]},
 *   "H": {"inline": [[0, 1]]},
 *   "Q": {"closed_form": [["const:1", "const:0"], ["const:0", "exp_sqrt_half"]]},
 *   "R": {"inline": [[3.0]]}        // or {"csv": "r_table.csv"}
 * }
 * Entry shorthands: "const:<c>", "poly:<c0>,<c1>,...", "sin:<amp>,<omega>,<phase>",
 * "exp_sqrt_half"; objects allow {"kind": "prod"|"sum", "factors"|"terms": [...]}.
 * CSV tables carry a header row `t,v11,v12,...` (row-major entries) whose t
 * column must coincide with the model grid nodes.
 */
namespace config_detail {

using nlohmann::json;

inline std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t next = s.find(',', pos);
    if (next == std::string::npos) next = s.size();
    out.push_back(std::stod(s.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

inline ScalarFunc parse_entry(const json& j);

inline ScalarFunc parse_entry_string(const std::string& s) {
  if (s == "exp_sqrt_half") return ScalarFunc::exp_sqrt_half();
  const std::size_t colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (kind == "const") return ScalarFunc::constant(std::stod(args));
  if (kind == "poly") return ScalarFunc::polynomial(parse_doubles(args));
  if (kind == "sin") {
    const auto a = parse_doubles(args);
    if (a.size() < 2) throw std::invalid_argument("sin entry needs amp,omega[,phase]");
    return ScalarFunc::sine(a[0], a[1], a.size() > 2 ? a[2] : 0.0);
  }
  throw std::invalid_argument("unknown scalar entry: " + s);
}

inline ScalarFunc parse_entry(const json& j) {
  if (j.is_number()) return ScalarFunc::constant(j.get<double>());
  if (j.is_string()) return parse_entry_string(j.get<std::string>());
  if (j.is_object()) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "const") return ScalarFunc::constant(j.at("value").get<double>());
    if (kind == "poly") return ScalarFunc::polynomial(j.at("coeffs").get<std::vector<double>>());
    if (kind == "sin")
      return ScalarFunc::sine(j.at("amp").get<double>(), j.at("omega").get<double>(),
                              j.value("phase", 0.0));
    if (kind == "exp_sqrt_half") return ScalarFunc::exp_sqrt_half();
    if (kind == "prod" || kind == "sum") {
      std::vector<ScalarFunc> parts;
      for (const auto& f : j.at(kind == "prod" ? "factors" : "terms")) parts.push_back(parse_entry(f));
      return kind == "prod" ? ScalarFunc::product(std::move(parts))
                            : ScalarFunc::sum(std::move(parts));
    }
    throw std::invalid_argument("unknown scalar entry kind: " + kind);
  }
  throw std::invalid_argument("bad scalar entry");
}

inline Eigen::MatrixXd parse_inline(const json& j) {
  const auto rows = j.size();
  if (rows == 0) throw std::invalid_argument("empty inline matrix");
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j.at(i).size() != cols) throw std::invalid_argument("ragged inline matrix");
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

inline MatrixFunction parse_matrix(const json& j, Eigen::Index rows, Eigen::Index cols,
                                   const TimeGrid& grid, const std::string& base_dir) {
  if (j.is_array()) return MatrixFunction::constant(parse_inline(j));
  if (j.contains("inline")) return MatrixFunction::constant(parse_inline(j.at("inline")));
  if (j.contains("closed_form")) {
    const json& grid_json = j.at("closed_form");
    std::vector<ScalarFunc> entries;
    entries.reserve(rows * cols);
    if (static_cast<Eigen::Index>(grid_json.size()) != rows)
      throw std::invalid_argument("closed_form row count mismatch");
    for (const auto& row : grid_json) {
      if (static_cast<Eigen::Index>(row.size()) != cols)
        throw std::invalid_argument("closed_form column count mismatch");
      for (const auto& e : row) entries.push_back(parse_entry(e));
    }
    return MatrixFunction::closed_form(rows, cols, std::move(entries));
  }
  if (j.contains("csv")) {
    std::string path = j.at("csv").get<std::string>();
    if (!path.empty() && path.front() != '/' && !base_dir.empty()) path = base_dir + "/" + path;
    const CsvTable table = read_csv(path);
    if (table.rows.size() != grid.n_nodes())
      throw std::invalid_argument("csv table must have n_steps+1 rows: " + path);
    std::vector<Eigen::MatrixXd> samples;
    samples.reserve(table.rows.size());
    for (std::size_t k = 0; k < table.rows.size(); ++k) {
      const auto& r = table.rows[k];
      if (static_cast<Eigen::Index>(r.size()) != rows * cols + 1)
        throw std::invalid_argument("csv row width mismatch: " + path);
      if (std::abs(r[0] - grid.node(k)) > 1e-9 * std::max(1.0, std::abs(r[0])))
        throw std::invalid_argument("csv t column must match the model grid: " + path);
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[1 + i * cols + c];
      samples.push_back(std::move(m));
    }
    return MatrixFunction::sampled(grid, std::move(samples));
  }
  throw std::invalid_argument("matrix spec must be inline, closed_form, or csv");
}

}  // namespace config_detail

/// Load a DaeModel from a JSON config file; grid overrides replace n_steps
/// when positive. The caller should validate_model() before use.
inline DaeModel load_model_config(const std::string& path, std::size_t steps_override = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;

  const auto m = j.at("m").get<Eigen::Index>();
  const auto n = j.at("n").get<Eigen::Index>();
  const auto p = j.at("p").get<Eigen::Index>();
  const auto& jg = j.at("grid");
  std::size_t n_steps = jg.at("n_steps").get<std::size_t>();
  if (steps_override > 0) n_steps = steps_override;
  TimeGrid grid(jg.at("t0").get<double>(), jg.at("t_end").get<double>(), n_steps);

  std::string base_dir;
  if (const auto slash = path.find_last_of('/'); slash != std::string::npos)
    base_dir = path.substr(0, slash);

  Eigen::MatrixXd F = config_detail::parse_inline(j.at("F"));
  if (F.rows() != m || F.cols() != n) throw std::invalid_argument("config: F shape mismatch");
  DaeModel model{std::move(F),
                 config_detail::parse_matrix(j.at("C"), m, n, grid, base_dir),
                 config_detail::parse_matrix(j.at("H"), p, n, grid, base_dir),
                 config_detail::parse_matrix(j.at("Q"), m, m, grid, base_dir),
                 config_detail::parse_matrix(j.at("R"), p, p, grid, base_dir),
                 grid};
  return model;
}

}  // namespace daemx

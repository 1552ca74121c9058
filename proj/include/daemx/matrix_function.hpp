#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "daemx/time_grid.hpp"

namespace daemx {

// =============================================================================
// Scalar closed forms
// =============================================================================

/// A scalar function of time from a small composable registry:
/// constants, polynomials, sinusoids, exp(sqrt(t))/2, products and sums.
class ScalarFunc {
 public:
  ScalarFunc() : f_([](double) { return 0.0; }) {}

  double operator()(double t) const { return f_(t); }

  static ScalarFunc constant(double c) {
    return ScalarFunc([c](double) { return c; });
  }

  /// coeffs[k] multiplies t^k.
  static ScalarFunc polynomial(std::vector<double> coeffs) {
    return ScalarFunc([coeffs = std::move(coeffs)](double t) {
      double acc = 0.0;
      for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * t + *it;
      return acc;
    });
  }

  /// amp * sin(omega t + phase)
  static ScalarFunc sine(double amp, double omega, double phase = 0.0) {
    return ScalarFunc([=](double t) { return amp * std::sin(omega * t + phase); });
  }

  /// exp(sqrt(t)) / 2, defined for t >= 0 (clamped at 0 below).
  static ScalarFunc exp_sqrt_half() {
    return ScalarFunc([](double t) { return std::exp(std::sqrt(std::max(t, 0.0))) / 2.0; });
  }

  static ScalarFunc product(std::vector<ScalarFunc> factors) {
    return ScalarFunc([factors = std::move(factors)](double t) {
      double acc = 1.0;
      for (const auto& f : factors) acc *= f(t);
      return acc;
    });
  }

  static ScalarFunc sum(std::vector<ScalarFunc> terms) {
    return ScalarFunc([terms = std::move(terms)](double t) {
      double acc = 0.0;
      for (const auto& f : terms) acc += f(t);
      return acc;
    });
  }

  static ScalarFunc custom(std::function<double(double)> f) { return ScalarFunc(std::move(f)); }

 private:
  explicit ScalarFunc(std::function<double(double)> f) : f_(std::move(f)) {}
  std::function<double(double)> f_;
};

// =============================================================================
// Matrix-valued functions of time
// =============================================================================

/// A rows x cols matrix function of t, either entrywise closed forms
/// (evaluated exactly at any t) or a sampled table on a TimeGrid with
/// linear interpolation between nodes.
class MatrixFunction {
 public:
  MatrixFunction() : rows_(0), cols_(0) {}

  static MatrixFunction constant(Eigen::MatrixXd value) {
    MatrixFunction mf;
    mf.rows_ = value.rows();
    mf.cols_ = value.cols();
    mf.constant_ = std::move(value);
    mf.mode_ = Mode::kConstant;
    return mf;
  }

  /// entries are row-major: entries[i * cols + j] is the (i, j) element.
  static MatrixFunction closed_form(Eigen::Index rows, Eigen::Index cols,
                                    std::vector<ScalarFunc> entries) {
    if (static_cast<Eigen::Index>(entries.size()) != rows * cols)
      throw std::invalid_argument("MatrixFunction::closed_form: entry count mismatch");
    MatrixFunction mf;
    mf.rows_ = rows;
    mf.cols_ = cols;
    mf.entries_ = std::move(entries);
    mf.mode_ = Mode::kClosedForm;
    return mf;
  }

  /// table.size() must be grid.n_nodes(); table[k] is the value at node k.
  static MatrixFunction sampled(const TimeGrid& grid, std::vector<Eigen::MatrixXd> table) {
    if (table.size() != grid.n_nodes())
      throw std::invalid_argument("MatrixFunction::sampled: table length must be n_steps+1");
    MatrixFunction mf;
    mf.rows_ = table.front().rows();
    mf.cols_ = table.front().cols();
    for (const auto& m : table)
      if (m.rows() != mf.rows_ || m.cols() != mf.cols_)
        throw std::invalid_argument("MatrixFunction::sampled: inconsistent table shapes");
    mf.grid_ = grid;
    mf.table_ = std::move(table);
    mf.mode_ = Mode::kSampled;
    return mf;
  }

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  bool is_sampled() const { return mode_ == Mode::kSampled; }
  bool valid() const { return mode_ != Mode::kEmpty; }

  Eigen::MatrixXd operator()(double t) const {
    switch (mode_) {
      case Mode::kConstant:
        return constant_;
      case Mode::kClosedForm: {
        Eigen::MatrixXd out(rows_, cols_);
        for (Eigen::Index i = 0; i < rows_; ++i)
          for (Eigen::Index j = 0; j < cols_; ++j) out(i, j) = entries_[i * cols_ + j](t);
        return out;
      }
      case Mode::kSampled: {
        const TimeGrid& g = *grid_;
        if (!g.contains(t))
          throw std::out_of_range("MatrixFunction: t=" + std::to_string(t) +
                                  " outside sampled range");
        const double h = g.step();
        const double pos = (t - g.t0()) / h;
        const auto near = g.nearest_node(t);
        // exact at nodes, linear interpolation in between
        if (std::abs(t - g.node(near)) <= 1e-12 * std::max(1.0, std::abs(t)))
          return table_[near];
        auto k = static_cast<std::size_t>(std::floor(pos));
        if (k >= g.n_steps()) k = g.n_steps() - 1;
        const double alpha = pos - static_cast<double>(k);
        return (1.0 - alpha) * table_[k] + alpha * table_[k + 1];
      }
      case Mode::kEmpty:
        break;
    }
    throw std::logic_error("MatrixFunction: evaluating an empty function");
  }

 private:
  enum class Mode { kEmpty, kConstant, kClosedForm, kSampled };
  Mode mode_ = Mode::kEmpty;
  Eigen::Index rows_, cols_;
  Eigen::MatrixXd constant_;
  std::vector<ScalarFunc> entries_;
  std::optional<TimeGrid> grid_;
  std::vector<Eigen::MatrixXd> table_;
};

}  // namespace daemx

#pragma once

// Shared helpers for the unit and acceptance tests.

#include "papp/autodiff.hpp"
#include "papp/precoding.hpp"
#include "papp/random.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace papp::test {

/// i.i.d. CN(0, 1) entries.
inline Eigen::MatrixXcd random_complex(Rng& rng, int rows, int cols) {
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = cdouble(rng.normal(), rng.normal()) / std::sqrt(2.0);
  return m;
}

inline ad::Tensor random_tensor(Rng& rng, ad::Shape shape, double scale = 1.0) {
  ad::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

using GraphFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Largest per-input relative error ||g_ad - g_fd|| / max(||g_ad||, ||g_fd||)
/// between reverse-mode gradients and central differences of `f` at `inputs`.
/// Inputs whose gradients are both below `floor` in norm count as agreeing.
inline double fd_check(std::vector<ad::Tensor> inputs, const GraphFn& f, double step = 1e-5,
                       double floor = 1e-10) {
  std::vector<ad::Tensor> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    tape.backward(f(tape, vars));
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }
  auto eval = [&] {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    return f(tape, vars).value().item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x = inputs[i][j];
      inputs[i][j] = x + step;
      const double up = eval();
      inputs[i][j] = x - step;
      const double down = eval();
      inputs[i][j] = x;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (numeric - analytic[i][j]) * (numeric - analytic[i][j]);
      a2 += analytic[i][j] * analytic[i][j];
      n2 += numeric * numeric;
    }
    const double scale = std::sqrt(std::max(a2, n2));
    if (scale < floor) continue;
    worst = std::max(worst, std::sqrt(diff2) / scale);
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("papp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace papp::test

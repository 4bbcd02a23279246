#pragma once

#include "hglmm/linalg.hpp"

#include <functional>
#include <vector>

namespace hglmm::optim {

struct NelderMeadOptions {
  double initial_step = 0.7;
  /// Converged when the simplex's objective spread is below
  /// f_tol (|f_best| + f_tol), or below f_abs once its diameter is under x_tol,
  /// or when the diameter itself falls under x_collapse (noisy objectives).
  double f_tol = 1e-9;
  double f_abs = 1e-8;
  double x_tol = 1e-5;
  double x_collapse = 1e-9;
  int max_evals = 10000;
};

struct NelderMeadResult {
  Vector x;
  double f = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
  /// Best objective after every evaluation.
  std::vector<double> best_trace;
};

/// Minimizes `f` from `x0`. Non-finite objective values rank as worst.
NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                             const NelderMeadOptions& opts = {});

}  // namespace hglmm::optim

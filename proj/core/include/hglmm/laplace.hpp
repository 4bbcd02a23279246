#pragma once

#include "hglmm/covariance.hpp"
#include "hglmm/datamodels.hpp"
#include "hglmm/linalg.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hglmm::laplace {

enum class Mode { ml, reml };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);

/// Generalized-least-squares pieces for a fixed Sigma and X. Holds
/// U = Sigma^{-1} X and the Cholesky factor of C = X^T Sigma^{-1} X.
class Gls {
 public:
  /// Throws NumericalError when X^T Sigma^{-1} X is singular.
  Gls(const linalg::FactoredMatrix& sigma, const Matrix& x);

  const linalg::FactoredMatrix& sigma() const noexcept { return *sigma_; }
  const Matrix& x() const noexcept { return *x_; }
  const Matrix& sigma_inv_x() const noexcept { return u_; }
  double logdet_xtsx() const noexcept { return logdet_c_; }
  /// (X^T Sigma^{-1} X)^{-1}.
  Matrix xtsx_inverse() const;

  /// C^{-1} U^T w.
  Vector beta(const Eigen::Ref<const Vector>& w) const;
  /// B = C^{-1} U^T (p x n).
  Matrix b_matrix() const;
  /// P w without forming P.
  Vector apply_p(const Eigen::Ref<const Vector>& w) const;
  /// w^T P w as (w - X beta)^T Sigma^{-1} (w - X beta).
  double quad_p(const Eigen::Ref<const Vector>& w) const;
  /// Dense P = Sigma^{-1} - U C^{-1} U^T.
  Matrix projection() const;

 private:
  const linalg::FactoredMatrix* sigma_;
  const Matrix* x_;
  Matrix u_;
  Eigen::LLT<Matrix> c_;
  double logdet_c_ = 0.0;
};

Vector profile_beta(const covariance::CovMatrix& sigma, const Matrix& x,
                    const Eigen::Ref<const Vector>& w);

Matrix projection_P(const covariance::CovMatrix& sigma, const Matrix& x);

/// log[a | X, Sigma] with beta profiled out (ml), or its restricted form (reml).
double gaussian_loglik(const Eigen::Ref<const Vector>& a, const Matrix& x,
                       const covariance::CovMatrix& sigma, Mode mode);

struct SolverOptions {
  double grad_tol = 1e-8;
  /// Stall exit, taken only while max|v| < stall_grad_tol: the inner
  /// objective changes by less than obj_tol, or the Newton step is below
  /// step_tol (1 + max|w|), i.e. at round-off level.
  double obj_tol = 1e-10;
  double step_tol = 1e-13;
  double stall_grad_tol = 1e-5;
  int max_iter = 100;
  double alpha = 0.1;
  /// Build the dense Hessian at the mode.
  bool keep_hessian = true;
  linalg::JitterPolicy jitter{};
};

struct ModeResult {
  Vector a;
  /// H = D - P at a; empty unless requested.
  Matrix H;
  /// Diagonal data curvature D at a.
  Vector curvature;
  double logdet_negH = 0.0;
  int iterations = 0;
  double max_grad = 0.0;
  /// max|v| at the start and after every Newton step.
  std::vector<double> grad_history;
  bool woodbury = false;
  /// Stopped by the stall rule rather than max|v| < grad_tol.
  bool stalled = false;
};

/// Newton-Raphson for the mode of log[y|w] - w^T P w / 2, with the step
/// retaken at `alpha` whenever max|v| grows.
ModeResult nr_mode(const datamodels::DataModel& model, const Matrix& x,
                   const covariance::CovMatrix& sigma, const Eigen::Ref<const Vector>& w0,
                   const SolverOptions& opts = {});

ModeResult nr_mode(const datamodels::DataVector& data, const datamodels::Family& family,
                   const Matrix& x, const covariance::CovMatrix& sigma,
                   const Eigen::Ref<const Vector>& w0, const SolverOptions& opts = {});

struct LikelihoodValue {
  double loglik = 0.0;
  double data_term = 0.0;
  double gaussian_term = 0.0;
  double logdet_term = 0.0;
};

struct Evaluation {
  LikelihoodValue value;
  ModeResult mode;
};

/// log[y|a] + log[a|X,Sigma] - log|-H| / 2 at the Newton mode a. Starts from
/// `warm_start` when given, else from g*(y) for family models or zero.
Evaluation laplace_loglik(const datamodels::DataModel& model, const Matrix& x,
                          const covariance::CovMatrix& sigma, Mode mode,
                          const std::optional<Vector>& warm_start, const SolverOptions& opts = {});

Evaluation laplace_loglik(const datamodels::DataVector& data, const datamodels::Family& family,
                          const Matrix& x, const covariance::CovarianceSpec& spec,
                          std::span<const double> theta, Mode mode,
                          const std::optional<Vector>& warm_start = std::nullopt,
                          const SolverOptions& opts = {});

}  // namespace hglmm::laplace

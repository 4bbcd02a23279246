#pragma once

#include "hglmm/covariance.hpp"
#include "hglmm/optimizer.hpp"

#include <string>
#include <vector>

namespace hglmm::inference {

enum class DfPolicy { normal, t_residual };

struct FixedEffectsTable {
  std::vector<std::string> names;
  Vector estimate;
  Vector se_u;  ///< from C_beta alone
  Vector se_c;  ///< from B(-H^{-1})B^T + C_beta
  Vector t_value;
  Vector p_value;
  Matrix c_beta;
  Matrix var_corrected;
  DfPolicy df_policy = DfPolicy::normal;
  double df = 0.0;
};

/// Two-sided p-value for |t| under the policy; `df` is used for t_residual.
double p_value(double t, DfPolicy policy, double df);

/// beta = B a with B = (X^T S^{-1} X)^{-1} X^T S^{-1}, naive and corrected
/// covariances. Inputs are the pieces of a fit so the formulas can be
/// exercised directly.
FixedEffectsTable fixed_effects(const Matrix& x, const covariance::CovMatrix& sigma,
                                const Vector& a, const Matrix& neg_h_inverse,
                                DfPolicy policy = DfPolicy::normal,
                                std::vector<std::string> names = {});

FixedEffectsTable fixed_effects(const optimizer::FitResult& fit, DfPolicy policy = DfPolicy::normal,
                                std::vector<std::string> names = {});

struct PredictionResult {
  Vector u_hat;
  Matrix var_corrected;
  Matrix var_blup;
  Matrix lambda;

  Vector se() const { return var_corrected.diagonal().cwiseMax(0.0).cwiseSqrt(); }
  Vector se_blup() const { return var_blup.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

/// Prediction from the observed latent mode given cross covariances.
PredictionResult predict(const Matrix& x, const covariance::CovMatrix& sigma, const Vector& a,
                         const Matrix& neg_h_inverse, const Matrix& x_u,
                         const covariance::CrossCov& cross);

/// Prediction at new sites described by `meta` at the fitted parameters.
PredictionResult predict(const optimizer::FitResult& fit, const Matrix& x_u,
                         const covariance::PredictionMeta& meta);

/// Standard normal quantile z_{(1+level)/2}.
double z_multiplier(double level);

struct Interval {
  Vector lower;
  Vector upper;
};

/// estimate +- z se.
Interval intervals(const Vector& estimate, const Vector& se, double level);
Interval intervals(const FixedEffectsTable& table, double level);
Interval intervals(const PredictionResult& prediction, double level);

/// (-H)^{-1} at the fitted mode.
Matrix neg_hessian_inverse(const optimizer::FitResult& fit);

}  // namespace hglmm::inference

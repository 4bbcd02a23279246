#include "hglmm/inference.hpp"

#include "hglmm/error.hpp"
#include "hglmm/laplace.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>

namespace hglmm::inference {

namespace {

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace

double p_value(double t, DfPolicy policy, double df) {
  const double at = std::abs(t);
  if (!std::isfinite(at)) return 0.0;
  if (policy == DfPolicy::t_residual) {
    if (!(df > 0.0)) throw DomainError("t p-values need positive degrees of freedom");
    return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), at));
  }
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), at));
}

FixedEffectsTable fixed_effects(const Matrix& x, const covariance::CovMatrix& sigma,
                                const Vector& a, const Matrix& neg_h_inverse, DfPolicy policy,
                                std::vector<std::string> names) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (a.size() != n || neg_h_inverse.rows() != n || neg_h_inverse.cols() != n) {
    throw DimensionError("fixed_effects: a, X and (-H)^{-1} do not conform");
  }
  if (names.empty()) {
    for (Index j = 0; j < p; ++j) names.push_back("beta" + std::to_string(j));
  }
  if (static_cast<Index>(names.size()) != p) throw DimensionError("fixed_effects: wrong name count");

  const laplace::Gls gls(sigma.factor, x);
  const Matrix b = gls.b_matrix();
  FixedEffectsTable t;
  t.names = std::move(names);
  t.df_policy = policy;
  t.df = static_cast<double>(n - p);
  t.estimate = b * a;
  t.c_beta = symmetrize(gls.xtsx_inverse());
  t.var_corrected = symmetrize(b * neg_h_inverse * b.transpose() + t.c_beta);
  t.se_u = t.c_beta.diagonal().cwiseMax(0.0).cwiseSqrt();
  t.se_c = t.var_corrected.diagonal().cwiseMax(0.0).cwiseSqrt();
  t.t_value.resize(p);
  t.p_value.resize(p);
  for (Index j = 0; j < p; ++j) {
    t.t_value(j) = std::abs(t.estimate(j)) / t.se_c(j);
    t.p_value(j) = p_value(t.t_value(j), policy, t.df);
  }
  return t;
}

Matrix neg_hessian_inverse(const optimizer::FitResult& fit) {
  const auto& factor = fit.sigma_hat.factor;
  if (factor.is_blocked()) {
    return linalg::NegHessian::woodbury(fit.curvature, factor, fit.x).inverse();
  }
  const laplace::Gls gls(factor, fit.x);
  return linalg::NegHessian::dense(fit.curvature, gls.projection()).inverse();
}

FixedEffectsTable fixed_effects(const optimizer::FitResult& fit, DfPolicy policy,
                                std::vector<std::string> names) {
  return fixed_effects(fit.x, fit.sigma_hat, fit.a, neg_hessian_inverse(fit), policy,
                       std::move(names));
}

PredictionResult predict(const Matrix& x, const covariance::CovMatrix& sigma, const Vector& a,
                         const Matrix& neg_h_inverse, const Matrix& x_u,
                         const covariance::CrossCov& cross) {
  const Index n = x.rows();
  const Index m = x_u.rows();
  if (x_u.cols() != x.cols()) throw DimensionError("predict: X_u must have the same columns as X");
  if (cross.sigma_wu.rows() != n || cross.sigma_wu.cols() != m || cross.sigma_uu.rows() != m ||
      cross.sigma_uu.cols() != m) {
    throw DimensionError("predict: cross covariances do not conform");
  }
  if (a.size() != n || neg_h_inverse.rows() != n) throw DimensionError("predict: a or H mismatch");

  const laplace::Gls gls(sigma.factor, x);
  const Matrix b = gls.b_matrix();
  const Matrix s = sigma.factor.solve(cross.sigma_wu);  // Sigma^{-1} Sigma_wu
  const Matrix k = x_u - s.transpose() * x;

  PredictionResult r;
  r.lambda = x_u * b + s.transpose() - (s.transpose() * x) * b;
  r.u_hat = r.lambda * a;
  r.var_blup = symmetrize(cross.sigma_uu - cross.sigma_wu.transpose() * s +
                          k * gls.xtsx_inverse() * k.transpose());
  r.var_corrected = symmetrize(r.var_blup + r.lambda * neg_h_inverse * r.lambda.transpose());
  return r;
}

PredictionResult predict(const optimizer::FitResult& fit, const Matrix& x_u,
                         const covariance::PredictionMeta& meta) {
  if (x_u.rows() != meta.m) throw DimensionError("predict: X_u rows do not match prediction sites");
  const auto cross = covariance::cross_cov(
      fit.spec, std::span<const double>(fit.theta_hat.data(), fit.theta_hat.size()), meta);
  return predict(fit.x, fit.sigma_hat, fit.a, neg_hessian_inverse(fit), x_u, cross);
}

double z_multiplier(double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("interval level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));
}

Interval intervals(const Vector& estimate, const Vector& se, double level) {
  if (estimate.size() != se.size()) throw DimensionError("intervals: estimate/se length mismatch");
  const double z = z_multiplier(level);
  return {estimate - z * se, estimate + z * se};
}

Interval intervals(const FixedEffectsTable& table, double level) {
  return intervals(table.estimate, table.se_c, level);
}

Interval intervals(const PredictionResult& prediction, double level) {
  return intervals(prediction.u_hat, prediction.se(), level);
}

}  // namespace hglmm::inference

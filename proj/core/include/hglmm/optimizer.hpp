#pragma once

#include "hglmm/covariance.hpp"
#include "hglmm/datamodels.hpp"
#include "hglmm/laplace.hpp"
#include "hglmm/nelder_mead.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hglmm::optimizer {

enum class EntryKind { variance, range, correlation, dispersion };

std::string to_string(EntryKind kind);

struct ParamEntry {
  std::string name;
  EntryKind kind = EntryKind::variance;
  double lower = 0.0;
  double upper = 0.0;
};

/// Ordered (theta..., phi) parameters with their search bounds. Positive
/// parameters are searched on the log scale, clamped to [log lower, log upper];
/// correlations through a logistic scaled to [lower, upper].
class ParamSpace {
 public:
  ParamSpace() = default;
  ParamSpace(std::vector<ParamEntry> entries, std::size_t theta_len, bool has_phi);

  /// Default bounds: variances in [1e-6 v, 10 v] with v = var(g*(y)); ranges in
  /// [1e-4 d, 10 d] with d the largest site distance; correlations in
  /// [0, 1 - 1e-6] (or the component's negative branch when enabled);
  /// phi in [1e-6, 1e6].
  static ParamSpace defaults(const covariance::CovarianceSpec& spec,
                             const datamodels::Family& family, const datamodels::DataVector& data);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t theta_len() const noexcept { return theta_len_; }
  bool has_phi() const noexcept { return has_phi_; }
  const std::vector<ParamEntry>& entries() const noexcept { return entries_; }
  std::vector<ParamEntry>& entries() noexcept { return entries_; }

  /// Index of the entry called `name`; throws DomainError when absent.
  std::size_t find(const std::string& name) const;

  Vector to_internal(const Vector& natural) const;
  Vector to_natural(const Vector& internal) const;
  Vector clamp(const Vector& natural) const;

  /// -1 at the lower bound, +1 at the upper bound, 0 inside (tolerance on the
  /// search scale).
  std::vector<int> bound_activity(const Vector& natural, double tol = 1e-6) const;

 private:
  std::vector<ParamEntry> entries_;
  std::size_t theta_len_ = 0;
  bool has_phi_ = false;
};

/// Sample variance (n - 1 denominator) of g*(y).
double link_variance(const datamodels::Family& family, const datamodels::DataVector& data);

/// Starting values: variances share var(g*(y)) equally, ranges start at a
/// quarter of the largest site distance, correlations at 0.5, phi at 1.
Vector init_params(const datamodels::DataVector& data, const datamodels::Family& family,
                   const covariance::CovarianceSpec& spec, const Matrix& x);

struct EvaluationTrace {
  int evaluation = 0;
  Vector params;
  double loglik = 0.0;
  double best_loglik = 0.0;
  double max_grad = 0.0;
  int inner_iterations = 0;
  bool failed = false;
};

struct FitOptions {
  laplace::Mode mode = laplace::Mode::reml;
  laplace::SolverOptions solver{};
  optim::NelderMeadOptions search{};
  int restarts = 1;
  /// Per-parameter overrides keyed by name (e.g. "c0.range").
  std::map<std::string, std::pair<double, double>> bounds;
  std::map<std::string, double> initial;
  std::function<void(const EvaluationTrace&)> on_evaluation;
};

enum class FitStatus { converged, evaluation_limit };

std::string to_string(FitStatus status);

/// Everything known about a fitted model; immutable once returned.
struct FitResult {
  datamodels::Family family;
  datamodels::DataVector data;
  Matrix x;
  covariance::CovarianceSpec spec;
  laplace::Mode mode = laplace::Mode::reml;

  ParamSpace space;
  Vector theta_hat;
  double phi_hat = 0.0;
  Vector beta_hat;
  Vector a;
  Matrix H;
  Vector curvature;
  covariance::CovMatrix sigma_hat;

  double loglik = 0.0;
  double minus2ll = 0.0;
  laplace::LikelihoodValue parts;
  double max_grad = 0.0;
  int inner_iterations = 0;
  int evaluations = 0;
  int search_iterations = 0;
  FitStatus status = FitStatus::converged;
  std::vector<int> bound_activity;
  std::vector<double> best_trace;
  std::string search_settings;

  Vector params() const;
  /// Covariance and dispersion parameters, plus p for ML fits.
  std::size_t aic_param_count() const;
  double aic() const { return minus2ll + 2.0 * static_cast<double>(aic_param_count()); }
};

/// Maximizes the Laplace objective over (theta, phi).
FitResult fit(const datamodels::DataVector& data, const datamodels::Family& family, const Matrix& x,
              const covariance::CovarianceSpec& spec, const FitOptions& opts = {});

/// Re-evaluates a model at fixed parameters, assembling a FitResult without search.
FitResult evaluate_at(const datamodels::DataVector& data, const datamodels::Family& family,
                      const Matrix& x, const covariance::CovarianceSpec& spec, const Vector& params,
                      laplace::Mode mode, const laplace::SolverOptions& solver = {});

struct RankedFit {
  std::size_t index = 0;  ///< position in the input list
  double minus2ll = 0.0;
  double aic = 0.0;
  std::size_t param_count = 0;
  laplace::Mode mode = laplace::Mode::reml;
};

/// Orders fits by AIC (ties keep input order). Throws DomainError when the fits
/// do not share responses and family, or when REML fits differ in X.
std::vector<RankedFit> compare(const std::vector<const FitResult*>& fits);
std::vector<RankedFit> compare(const std::vector<FitResult>& fits);

}  // namespace hglmm::optimizer

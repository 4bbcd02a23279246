#pragma once

#include "hglmm/linalg.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hglmm::covariance {

enum class Kind { iid_nugget, random_effect, ar1, exponential_geo, car, sar };

std::string to_string(Kind kind);
Kind kind_from_string(const std::string& name);

/// Role of a covariance parameter; drives its transform and default bounds.
enum class ParamKind { variance, range, correlation };

struct ParamInfo {
  std::string name;
  ParamKind kind;
  /// Open/closed validity interval of the raw parameter.
  double lower;
  double upper;
};

/// A single patterned covariance component Z V Z^T. Construct through the
/// named factories; each validates its metadata.
class CovComponent {
 public:
  /// sigma0^2 I.
  static CovComponent iid_nugget(Index n);

  /// sigma^2 Z Z^T for an n x m design (indicators or random-slope covariates).
  static CovComponent random_effect(Matrix z);

  /// Random intercepts for integer group labels.
  static CovComponent random_intercept(const std::vector<int>& groups);

  /// AR1 over integer times; observations in different groups are independent.
  /// An empty `groups` places everything in one series.
  static CovComponent ar1(std::vector<int> times, std::vector<int> groups = {});

  /// sigma1^2 exp(-dist/range) [+ sigma0^2 at coincident sites] over planar
  /// coordinates (n x 2).
  static CovComponent exponential_geo(Matrix coords, bool with_nugget);

  /// Conditional autoregression sigma^2 (I - rho W_rs)^{-1} M_rs.
  static CovComponent car(Matrix neighbors, bool allow_negative_rho = false);

  /// Simultaneous autoregression sigma^2 [(I - rho W_rs)(I - rho W_rs^T)]^{-1}.
  static CovComponent sar(Matrix neighbors, bool allow_negative_rho = false);

  Kind kind() const noexcept { return kind_; }
  Index n() const noexcept { return n_; }
  std::size_t param_count() const;
  /// Parameter descriptors, names prefixed with `label` (e.g. "c0.sigma2").
  std::vector<ParamInfo> params(const std::string& label) const;

  /// Throws DomainError when `theta` lies outside the component's domain.
  void validate(std::span<const double> theta) const;

  Matrix build(std::span<const double> theta) const;

  /// Finest partition under which this component is block-diagonal.
  linalg::Partition structure() const;

  /// Largest pairwise distance (exponential_geo only, else 0).
  double max_distance() const noexcept { return max_distance_; }

  /// Valid rho interval (1/lambda_min, 1) for car/sar.
  std::pair<double, double> rho_interval() const noexcept { return rho_interval_; }
  bool allows_negative_rho() const noexcept { return negative_rho_; }
  bool has_nugget() const noexcept { return with_nugget_; }

  const Matrix& design() const noexcept { return z_; }
  const std::vector<int>& times() const noexcept { return times_; }
  const std::vector<int>& groups() const noexcept { return groups_; }
  const Matrix& coords() const noexcept { return coords_; }
  const Matrix& neighbors() const noexcept { return w_; }

 private:
  Kind kind_ = Kind::iid_nugget;
  Index n_ = 0;
  Matrix z_;
  std::vector<int> times_;
  std::vector<int> groups_;
  Matrix coords_;
  Matrix dist_;
  double max_distance_ = 0.0;
  bool with_nugget_ = false;
  Matrix w_;
  Matrix w_rs_;
  Vector m_rs_;
  std::pair<double, double> rho_interval_{0.0, 1.0};
  bool negative_rho_ = false;
};

/// Ordered sum of components over the same n observations. The parameter
/// vector theta concatenates component parameters in declaration order.
class CovarianceSpec {
 public:
  CovarianceSpec() = default;
  explicit CovarianceSpec(std::vector<CovComponent> components,
                          std::vector<std::string> labels = {});

  Index n() const noexcept { return n_; }
  const std::vector<CovComponent>& components() const noexcept { return components_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t theta_size() const noexcept { return theta_size_; }
  std::vector<ParamInfo> params() const;
  /// Offset of component k's parameters inside theta.
  std::size_t offset(std::size_t k) const { return offsets_[k]; }

  void validate(std::span<const double> theta) const;

 private:
  std::vector<CovComponent> components_;
  std::vector<std::string> labels_;
  std::vector<std::size_t> offsets_;
  std::size_t theta_size_ = 0;
  Index n_ = 0;
};

/// Sigma_theta with its Cholesky factor (blocked when a common partition
/// with more than one block exists).
struct CovMatrix {
  Matrix dense;
  std::optional<linalg::Partition> structure;
  linalg::FactoredMatrix factor;
};

/// Sums every component at theta and factors the result (jitter policy applies).
CovMatrix build_sigma(const CovarianceSpec& spec, std::span<const double> theta,
                      const linalg::JitterPolicy& policy = {});

/// Factors an externally supplied covariance matrix.
CovMatrix make_cov_matrix(Matrix dense, std::optional<linalg::Partition> structure = {},
                          const linalg::JitterPolicy& policy = {});

/// sigma2 rho^|ti - tj| / (1 - rho^2).
Matrix ar1_block(const std::vector<int>& times, double sigma2, double rho);

/// Row-standardized neighbor matrix and the reciprocal row sums.
std::pair<Matrix, Vector> row_standardize(const Matrix& w);

Matrix car_cov(const Matrix& w, double sigma2, double rho);
Matrix sar_cov(const Matrix& w, double sigma2, double rho);

/// Checks a neighbor matrix: square, nonnegative, zero diagonal, symmetric,
/// positive row sums. Throws DomainError naming the offending index.
void validate_neighbors(const Matrix& w);

/// Binary symmetric neighbor matrix from an (i, j) edge list.
Matrix neighbors_from_edges(Index n, const std::vector<std::pair<Index, Index>>& edges,
                            bool one_based = false);

/// Binary neighbor matrix joining sites closer than `threshold` (exclusive of self).
Matrix neighbors_within(const Matrix& coords, double threshold);

/// Euclidean distances between rows of `a` and rows of `b`.
Matrix distances(const Matrix& a, const Matrix& b);

/// Per-component metadata for prediction sites.
struct ComponentPrediction {
  Matrix design;                 ///< random_effect: m x m_k rows of Z at new sites
  std::vector<int> times;        ///< ar1
  std::vector<int> groups;       ///< ar1
  Matrix coords;                 ///< exponential_geo: m x 2
  Matrix joint_neighbors;        ///< car/sar: (n+m) x (n+m)
};

struct PredictionMeta {
  Index m = 0;
  std::vector<ComponentPrediction> components;  ///< one per spec component
};

struct CrossCov {
  Matrix sigma_wu;  ///< n x m
  Matrix sigma_uu;  ///< m x m
};

/// Builds the joint (n+m) covariance over observed and prediction sites and
/// returns its off-diagonal and prediction blocks.
CrossCov cross_cov(const CovarianceSpec& spec, std::span<const double> theta,
                   const PredictionMeta& meta);

/// The joint (n+m) x (n+m) covariance used by cross_cov.
Matrix joint_sigma(const CovarianceSpec& spec, std::span<const double> theta,
                   const PredictionMeta& meta);

}  // namespace hglmm::covariance

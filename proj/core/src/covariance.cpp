#include "hglmm/covariance.hpp"

#include "hglmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hglmm::covariance {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt_index(Index i) { return std::to_string(i); }

// Connected components of the undirected graph with an edge wherever
// adjacency(i, j) != 0.
linalg::Partition components_of(const Matrix& adjacency) {
  const Index n = adjacency.rows();
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  int next = 0;
  std::vector<Index> stack;
  for (Index s = 0; s < n; ++s) {
    if (label[static_cast<std::size_t>(s)] >= 0) continue;
    label[static_cast<std::size_t>(s)] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const Index i = stack.back();
      stack.pop_back();
      for (Index j = 0; j < n; ++j) {
        if (adjacency(i, j) != 0.0 && label[static_cast<std::size_t>(j)] < 0) {
          label[static_cast<std::size_t>(j)] = next;
          stack.push_back(j);
        }
      }
    }
    ++next;
  }
  return linalg::Partition::from_labels(label);
}

void require_variance(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DomainError(std::string(what) + " must be positive and finite, got " + std::to_string(v));
  }
}

}  // namespace

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::iid_nugget: return "iid_nugget";
    case Kind::random_effect: return "random_effect";
    case Kind::ar1: return "ar1";
    case Kind::exponential_geo: return "exponential_geo";
    case Kind::car: return "car";
    case Kind::sar: return "sar";
  }
  return "unknown";
}

Kind kind_from_string(const std::string& name) {
  for (Kind k : {Kind::iid_nugget, Kind::random_effect, Kind::ar1, Kind::exponential_geo,
                 Kind::car, Kind::sar}) {
    if (to_string(k) == name) return k;
  }
  throw DomainError("unknown covariance kind '" + name + "'");
}

// Free helpers --------------------------------------------------------------

Matrix distances(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("distances: coordinate dimensions differ");
  Matrix d(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) d(i, j) = (a.row(i) - b.row(j)).norm();
  }
  return d;
}

Matrix ar1_block(const std::vector<int>& times, double sigma2, double rho) {
  require_variance(sigma2, "ar1 sigma2");
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw DomainError("ar1 rho must lie in [0, 1), got " + std::to_string(rho));
  }
  const auto n = static_cast<Index>(times.size());
  const double scale = sigma2 / (1.0 - rho * rho);
  Matrix v(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const int lag = std::abs(times[static_cast<std::size_t>(i)] - times[static_cast<std::size_t>(j)]);
      v(i, j) = scale * std::pow(rho, lag);
    }
  }
  return v;
}

void validate_neighbors(const Matrix& w) {
  if (w.rows() != w.cols()) throw DimensionError("neighbor matrix must be square");
  const Index n = w.rows();
  for (Index i = 0; i < n; ++i) {
    if (w(i, i) != 0.0) throw DomainError("neighbor matrix has nonzero diagonal at " + fmt_index(i));
    double sum = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (w(i, j) < 0.0 || !std::isfinite(w(i, j))) {
        throw DomainError("neighbor matrix entry (" + fmt_index(i) + "," + fmt_index(j) +
                          ") is negative or not finite");
      }
      if (w(i, j) != w(j, i)) {
        throw DomainError("neighbor matrix is not symmetric at (" + fmt_index(i) + "," +
                          fmt_index(j) + ")");
      }
      sum += w(i, j);
    }
    if (!(sum > 0.0)) throw DomainError("site " + fmt_index(i) + " has no neighbors");
  }
}

std::pair<Matrix, Vector> row_standardize(const Matrix& w) {
  validate_neighbors(w);
  const Vector sums = w.rowwise().sum();
  Matrix w_rs = sums.cwiseInverse().asDiagonal() * w;
  return {std::move(w_rs), sums.cwiseInverse()};
}

Matrix car_cov(const Matrix& w, double sigma2, double rho) {
  require_variance(sigma2, "car sigma2");
  validate_neighbors(w);
  // (I - rho D^{-1} W)^{-1} D^{-1} = (D - rho W)^{-1}, symmetric positive
  // definite on the validity interval.
  Matrix a = -rho * w;
  a.diagonal() += w.rowwise().sum();
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("car: I - rho W_rs is singular or rho is outside its validity interval");
  }
  Matrix sigma = sigma2 * llt.solve(Matrix::Identity(w.rows(), w.rows()));
  return 0.5 * (sigma + sigma.transpose());
}

Matrix sar_cov(const Matrix& w, double sigma2, double rho) {
  require_variance(sigma2, "sar sigma2");
  auto [w_rs, m_rs] = row_standardize(w);
  const Index n = w.rows();
  Matrix a = Matrix::Identity(n, n) - rho * w_rs;
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) {
    throw NumericalError("sar: I - rho W_rs is singular at rho = " + std::to_string(rho));
  }
  const Matrix a_inv = lu.inverse();
  // [(A)(A^T)]^{-1} = A^{-T} A^{-1}
  return sigma2 * (a_inv.transpose() * a_inv);
}

Matrix neighbors_from_edges(Index n, const std::vector<std::pair<Index, Index>>& edges,
                            bool one_based) {
  Matrix w = Matrix::Zero(n, n);
  const Index shift = one_based ? 1 : 0;
  for (const auto& [a, b] : edges) {
    const Index i = a - shift;
    const Index j = b - shift;
    if (i < 0 || j < 0 || i >= n || j >= n) {
      throw DomainError("edge (" + fmt_index(a) + "," + fmt_index(b) + ") is out of range");
    }
    if (i == j) throw DomainError("edge list contains self-loop at " + fmt_index(a));
    w(i, j) = 1.0;
    w(j, i) = 1.0;
  }
  return w;
}

Matrix neighbors_within(const Matrix& coords, double threshold) {
  if (!(threshold > 0.0)) throw DomainError("neighbor threshold must be positive");
  const Matrix d = distances(coords, coords);
  Matrix w = (d.array() < threshold).cast<double>().matrix();
  w.diagonal().setZero();
  return w;
}

// CovComponent --------------------------------------------------------------

CovComponent CovComponent::iid_nugget(Index n) {
  if (n <= 0) throw DimensionError("iid_nugget: n must be positive");
  CovComponent c;
  c.kind_ = Kind::iid_nugget;
  c.n_ = n;
  return c;
}

CovComponent CovComponent::random_effect(Matrix z) {
  if (z.rows() == 0 || z.cols() == 0) throw DimensionError("random_effect: empty design");
  if (!z.allFinite()) throw DomainError("random_effect: design has non-finite entries");
  CovComponent c;
  c.kind_ = Kind::random_effect;
  c.n_ = z.rows();
  c.z_ = std::move(z);
  return c;
}

CovComponent CovComponent::random_intercept(const std::vector<int>& groups) {
  std::vector<int> levels(groups);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  Matrix z = Matrix::Zero(static_cast<Index>(groups.size()), static_cast<Index>(levels.size()));
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto col = std::lower_bound(levels.begin(), levels.end(), groups[i]) - levels.begin();
    z(static_cast<Index>(i), static_cast<Index>(col)) = 1.0;
  }
  auto c = random_effect(std::move(z));
  c.groups_ = groups;
  return c;
}

CovComponent CovComponent::ar1(std::vector<int> times, std::vector<int> groups) {
  if (times.empty()) throw DimensionError("ar1: no time indices");
  if (groups.empty()) groups.assign(times.size(), 0);
  if (groups.size() != times.size()) throw DimensionError("ar1: times and groups differ in length");
  CovComponent c;
  c.kind_ = Kind::ar1;
  c.n_ = static_cast<Index>(times.size());
  c.times_ = std::move(times);
  c.groups_ = std::move(groups);
  return c;
}

CovComponent CovComponent::exponential_geo(Matrix coords, bool with_nugget) {
  if (coords.rows() == 0 || coords.cols() == 0) throw DimensionError("exponential_geo: no coordinates");
  if (!coords.allFinite()) throw DomainError("exponential_geo: non-finite coordinates");
  CovComponent c;
  c.kind_ = Kind::exponential_geo;
  c.n_ = coords.rows();
  c.dist_ = distances(coords, coords);
  c.max_distance_ = c.dist_.maxCoeff();
  c.coords_ = std::move(coords);
  c.with_nugget_ = with_nugget;
  return c;
}

CovComponent CovComponent::car(Matrix neighbors, bool allow_negative_rho) {
  CovComponent c;
  c.kind_ = Kind::car;
  c.n_ = neighbors.rows();
  auto [w_rs, m_rs] = row_standardize(neighbors);
  const Vector s = m_rs.cwiseSqrt();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s.asDiagonal() * neighbors * s.asDiagonal(),
                                            Eigen::EigenvaluesOnly);
  c.rho_interval_ = {1.0 / eig.eigenvalues().minCoeff(), 1.0 / eig.eigenvalues().maxCoeff()};
  c.w_ = std::move(neighbors);
  c.w_rs_ = std::move(w_rs);
  c.m_rs_ = std::move(m_rs);
  c.negative_rho_ = allow_negative_rho;
  return c;
}

CovComponent CovComponent::sar(Matrix neighbors, bool allow_negative_rho) {
  CovComponent c = car(std::move(neighbors), allow_negative_rho);
  c.kind_ = Kind::sar;
  return c;
}

std::size_t CovComponent::param_count() const {
  switch (kind_) {
    case Kind::iid_nugget:
    case Kind::random_effect: return 1;
    case Kind::ar1:
    case Kind::car:
    case Kind::sar: return 2;
    case Kind::exponential_geo: return with_nugget_ ? 3 : 2;
  }
  return 0;
}

std::vector<ParamInfo> CovComponent::params(const std::string& label) const {
  const std::string p = label.empty() ? "" : label + ".";
  switch (kind_) {
    case Kind::iid_nugget:
      return {{p + "nugget", ParamKind::variance, 0.0, kInf}};
    case Kind::random_effect:
      return {{p + "sigma2", ParamKind::variance, 0.0, kInf}};
    case Kind::ar1:
      return {{p + "sigma2", ParamKind::variance, 0.0, kInf},
              {p + "rho", ParamKind::correlation, 0.0, 1.0}};
    case Kind::exponential_geo: {
      std::vector<ParamInfo> out{{p + "sigma2", ParamKind::variance, 0.0, kInf},
                                 {p + "range", ParamKind::range, 0.0, kInf}};
      if (with_nugget_) out.push_back({p + "nugget", ParamKind::variance, 0.0, kInf});
      return out;
    }
    case Kind::car:
    case Kind::sar: {
      const double lo = negative_rho_ ? rho_interval_.first : 0.0;
      return {{p + "sigma2", ParamKind::variance, 0.0, kInf},
              {p + "rho", ParamKind::correlation, lo, rho_interval_.second}};
    }
  }
  return {};
}

void CovComponent::validate(std::span<const double> theta) const {
  if (theta.size() != param_count()) {
    throw DimensionError(to_string(kind_) + ": expected " + std::to_string(param_count()) +
                         " parameters, got " + std::to_string(theta.size()));
  }
  const std::string k = to_string(kind_);
  require_variance(theta[0], (k + " variance").c_str());
  switch (kind_) {
    case Kind::iid_nugget:
    case Kind::random_effect: break;
    case Kind::ar1:
      if (!(theta[1] >= 0.0 && theta[1] < 1.0)) {
        throw DomainError("ar1 rho must lie in [0, 1), got " + std::to_string(theta[1]));
      }
      break;
    case Kind::exponential_geo:
      if (!(theta[1] > 0.0) || !std::isfinite(theta[1])) {
        throw DomainError("exponential_geo range must be positive, got " + std::to_string(theta[1]));
      }
      if (with_nugget_ && !(theta[2] >= 0.0 && std::isfinite(theta[2]))) {
        throw DomainError("exponential_geo nugget must be nonnegative, got " +
                          std::to_string(theta[2]));
      }
      break;
    case Kind::car:
    case Kind::sar: {
      const double rho = theta[1];
      const bool ok = negative_rho_ ? (rho > rho_interval_.first && rho < rho_interval_.second)
                                    : (rho >= 0.0 && rho < rho_interval_.second);
      if (!ok) throw DomainError(k + " rho " + std::to_string(rho) + " is outside its validity interval");
      break;
    }
  }
}

Matrix CovComponent::build(std::span<const double> theta) const {
  validate(theta);
  switch (kind_) {
    case Kind::iid_nugget:
      return theta[0] * Matrix::Identity(n_, n_);
    case Kind::random_effect:
      return theta[0] * (z_ * z_.transpose());
    case Kind::ar1: {
      Matrix v = Matrix::Zero(n_, n_);
      const double scale = theta[0] / (1.0 - theta[1] * theta[1]);
      for (Index j = 0; j < n_; ++j) {
        for (Index i = 0; i < n_; ++i) {
          const auto si = static_cast<std::size_t>(i);
          const auto sj = static_cast<std::size_t>(j);
          if (groups_[si] != groups_[sj]) continue;
          v(i, j) = scale * std::pow(theta[1], std::abs(times_[si] - times_[sj]));
        }
      }
      return v;
    }
    case Kind::exponential_geo: {
      Matrix v = theta[0] * (-dist_.array() / theta[1]).exp().matrix();
      if (with_nugget_) v += theta[2] * (dist_.array() == 0.0).cast<double>().matrix();
      return v;
    }
    case Kind::car: {
      Matrix a = -theta[1] * w_;
      a.diagonal() += m_rs_.cwiseInverse();
      Eigen::LLT<Matrix> llt(a);
      if (llt.info() != Eigen::Success) throw NumericalError("car: I - rho W_rs is singular");
      Matrix v = theta[0] * llt.solve(Matrix::Identity(n_, n_));
      return 0.5 * (v + v.transpose());
    }
    case Kind::sar: {
      Eigen::FullPivLU<Matrix> lu(Matrix::Identity(n_, n_) - theta[1] * w_rs_);
      if (!lu.isInvertible()) throw NumericalError("sar: I - rho W_rs is singular");
      const Matrix a_inv = lu.inverse();
      return theta[0] * (a_inv.transpose() * a_inv);
    }
  }
  return {};
}

linalg::Partition CovComponent::structure() const {
  switch (kind_) {
    case Kind::iid_nugget: return linalg::Partition::singletons(n_);
    case Kind::random_effect: return components_of(z_ * z_.transpose());
    case Kind::ar1: return linalg::Partition::from_labels(groups_);
    case Kind::exponential_geo: return linalg::Partition::whole(n_);
    case Kind::car:
    case Kind::sar: return components_of(w_);
  }
  return linalg::Partition::whole(n_);
}

// CovarianceSpec ------------------------------------------------------------

CovarianceSpec::CovarianceSpec(std::vector<CovComponent> components, std::vector<std::string> labels)
    : components_(std::move(components)), labels_(std::move(labels)) {
  if (components_.empty()) throw DimensionError("covariance spec needs at least one component");
  n_ = components_.front().n();
  if (labels_.empty()) {
    for (std::size_t k = 0; k < components_.size(); ++k) labels_.push_back("c" + std::to_string(k));
  }
  if (labels_.size() != components_.size()) {
    throw DimensionError("covariance spec: label count does not match component count");
  }
  for (const auto& c : components_) {
    if (c.n() != n_) {
      throw DimensionError("covariance spec: components disagree on n (" + std::to_string(n_) +
                           " vs " + std::to_string(c.n()) + ")");
    }
    offsets_.push_back(theta_size_);
    theta_size_ += c.param_count();
  }
}

std::vector<ParamInfo> CovarianceSpec::params() const {
  std::vector<ParamInfo> out;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    auto p = components_[k].params(labels_[k]);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void CovarianceSpec::validate(std::span<const double> theta) const {
  if (theta.size() != theta_size_) {
    throw DimensionError("theta has " + std::to_string(theta.size()) + " entries, spec expects " +
                         std::to_string(theta_size_));
  }
  for (std::size_t k = 0; k < components_.size(); ++k) {
    components_[k].validate(theta.subspan(offsets_[k], components_[k].param_count()));
  }
}

CovMatrix make_cov_matrix(Matrix dense, std::optional<linalg::Partition> structure,
                          const linalg::JitterPolicy& policy) {
  if (dense.rows() != dense.cols()) throw DimensionError("covariance matrix must be square");
  if (structure && structure->block_count() > 1) {
    auto factor = linalg::FactoredMatrix::blocked(dense, *structure, policy);
    return {std::move(dense), std::move(structure), std::move(factor)};
  }
  auto factor = linalg::FactoredMatrix::dense(dense, policy);
  return {std::move(dense), std::nullopt, std::move(factor)};
}

CovMatrix build_sigma(const CovarianceSpec& spec, std::span<const double> theta,
                      const linalg::JitterPolicy& policy) {
  spec.validate(theta);
  Matrix sigma = Matrix::Zero(spec.n(), spec.n());
  std::vector<linalg::Partition> parts;
  for (std::size_t k = 0; k < spec.components().size(); ++k) {
    const auto& c = spec.components()[k];
    sigma += c.build(theta.subspan(spec.offset(k), c.param_count()));
    parts.push_back(c.structure());
  }
  auto common = linalg::Partition::join(parts);
  std::optional<linalg::Partition> structure;
  if (common.block_count() > 1) structure = std::move(common);
  return make_cov_matrix(std::move(sigma), std::move(structure), policy);
}

// Prediction ----------------------------------------------------------------

namespace {

CovComponent joint_component(const CovComponent& c, const ComponentPrediction& p, Index m) {
  const Index n = c.n();
  switch (c.kind()) {
    case Kind::iid_nugget: return CovComponent::iid_nugget(n + m);
    case Kind::random_effect: {
      if (p.design.rows() != m || p.design.cols() != c.design().cols()) {
        throw DimensionError("prediction: random_effect needs an m x " +
                             std::to_string(c.design().cols()) + " design");
      }
      Matrix z(n + m, c.design().cols());
      z << c.design(), p.design;
      return CovComponent::random_effect(std::move(z));
    }
    case Kind::ar1: {
      if (static_cast<Index>(p.times.size()) != m) {
        throw DimensionError("prediction: ar1 needs one time per prediction site");
      }
      std::vector<int> times = c.times();
      times.insert(times.end(), p.times.begin(), p.times.end());
      std::vector<int> groups = c.groups();
      if (p.groups.empty()) {
        groups.insert(groups.end(), static_cast<std::size_t>(m), c.groups().front());
      } else {
        if (static_cast<Index>(p.groups.size()) != m) {
          throw DimensionError("prediction: ar1 groups must have one entry per site");
        }
        groups.insert(groups.end(), p.groups.begin(), p.groups.end());
      }
      return CovComponent::ar1(std::move(times), std::move(groups));
    }
    case Kind::exponential_geo: {
      if (p.coords.rows() != m || p.coords.cols() != c.coords().cols()) {
        throw DimensionError("prediction: exponential_geo needs m x " +
                             std::to_string(c.coords().cols()) + " coordinates");
      }
      Matrix xy(n + m, c.coords().cols());
      xy << c.coords(), p.coords;
      return CovComponent::exponential_geo(std::move(xy), c.has_nugget());
    }
    case Kind::car:
    case Kind::sar: {
      if (p.joint_neighbors.rows() != n + m) {
        throw DimensionError("prediction: car/sar needs a joint (n+m) neighbor matrix");
      }
      return c.kind() == Kind::car ? CovComponent::car(p.joint_neighbors, true)
                                   : CovComponent::sar(p.joint_neighbors, true);
    }
  }
  throw DimensionError("prediction: unsupported component");
}

}  // namespace

Matrix joint_sigma(const CovarianceSpec& spec, std::span<const double> theta,
                   const PredictionMeta& meta) {
  spec.validate(theta);
  if (meta.components.size() != spec.components().size()) {
    throw DimensionError("prediction metadata must have one entry per covariance component");
  }
  if (meta.m <= 0) throw DimensionError("prediction metadata has no sites");
  const Index total = spec.n() + meta.m;
  Matrix joint = Matrix::Zero(total, total);
  for (std::size_t k = 0; k < spec.components().size(); ++k) {
    const auto& c = spec.components()[k];
    const auto jc = joint_component(c, meta.components[k], meta.m);
    joint += jc.build(theta.subspan(spec.offset(k), c.param_count()));
  }
  return joint;
}

CrossCov cross_cov(const CovarianceSpec& spec, std::span<const double> theta,
                   const PredictionMeta& meta) {
  const Matrix joint = joint_sigma(spec, theta, meta);
  const Index n = spec.n();
  const Index m = meta.m;
  return {joint.topRightCorner(n, m), joint.bottomRightCorner(m, m)};
}

}  // namespace hglmm::covariance

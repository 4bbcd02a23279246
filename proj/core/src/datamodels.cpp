#include "hglmm/datamodels.hpp"

#include "hglmm/error.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hglmm::datamodels {

namespace {

// log(1 + e^w) without overflow.
double softplus(double w) { return w > 0.0 ? w + std::log1p(std::exp(-w)) : std::log1p(std::exp(w)); }

double logistic(double w) {
  if (w >= 0.0) return 1.0 / (1.0 + std::exp(-w));
  const double e = std::exp(w);
  return e / (1.0 + e);
}

// Poles and overflow yield non-finite values instead of exceptions; the
// Newton step rule and the callers' finiteness checks deal with them.
using quiet_policy = boost::math::policies::policy<
    boost::math::policies::pole_error<boost::math::policies::ignore_error>,
    boost::math::policies::overflow_error<boost::math::policies::ignore_error>,
    boost::math::policies::domain_error<boost::math::policies::ignore_error>,
    boost::math::policies::evaluation_error<boost::math::policies::ignore_error>>;

double digamma(double x) { return boost::math::digamma(x, quiet_policy()); }
double trigamma(double x) { return boost::math::trigamma(x, quiet_policy()); }

double lchoose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

bool is_count(double y) { return y >= 0.0 && std::floor(y) == y && std::isfinite(y); }

void require_phi(const Family& f) {
  if (f.has_phi() && !(f.phi > 0.0 && std::isfinite(f.phi))) {
    throw DomainError(to_string(f.kind) + ": phi must be positive, got " + std::to_string(f.phi));
  }
}

// Inverse Gaussian draw by the transformation-with-rejection method of
// Michael, Schucany and Haas.
double draw_inverse_gaussian(double mu, double lambda, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double v = normal(rng);
  const double y = v * v;
  const double x = mu + mu * mu * y / (2.0 * lambda) -
                   mu / (2.0 * lambda) * std::sqrt(4.0 * mu * lambda * y + mu * mu * y * y);
  return unif(rng) <= mu / (mu + x) ? x : mu * mu / x;
}

}  // namespace

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::binomial: return "binomial";
    case FamilyKind::poisson: return "poisson";
    case FamilyKind::negative_binomial: return "negative_binomial";
    case FamilyKind::gamma: return "gamma";
    case FamilyKind::inverse_gaussian: return "inverse_gaussian";
    case FamilyKind::beta: return "beta";
  }
  return "unknown";
}

FamilyKind family_from_string(const std::string& name) {
  for (auto k : {FamilyKind::binomial, FamilyKind::poisson, FamilyKind::negative_binomial,
                 FamilyKind::gamma, FamilyKind::inverse_gaussian, FamilyKind::beta}) {
    if (to_string(k) == name) return k;
  }
  throw DomainError("unknown family '" + name + "'");
}

bool Family::has_phi() const noexcept {
  return kind != FamilyKind::binomial && kind != FamilyKind::poisson;
}

Link Family::link() const noexcept {
  return kind == FamilyKind::binomial || kind == FamilyKind::beta ? Link::logit : Link::log;
}

double inverse_link(Link link, double w) { return link == Link::logit ? logistic(w) : std::exp(w); }

void check_support(const Family& family, const DataVector& data) {
  require_phi(family);
  if (data.trials.size() != 0 && data.trials.size() != data.y.size()) {
    throw DimensionError("trials length does not match responses");
  }
  for (Index i = 0; i < data.size(); ++i) {
    const double y = data.y(i);
    bool ok = std::isfinite(y);
    switch (family.kind) {
      case FamilyKind::binomial: {
        const double n = data.trials_at(i);
        ok = ok && is_count(n) && n >= 1.0 && is_count(y) && y <= n;
        break;
      }
      case FamilyKind::poisson:
      case FamilyKind::negative_binomial: ok = ok && is_count(y); break;
      case FamilyKind::gamma:
      case FamilyKind::inverse_gaussian: ok = ok && y > 0.0; break;
      case FamilyKind::beta: ok = ok && y > 0.0 && y < 1.0; break;
    }
    if (!ok) {
      throw DomainError(to_string(family.kind) + ": observation " + std::to_string(i) +
                        " (y = " + std::to_string(y) + ") is outside the support");
    }
  }
}

double beta_k0(double w, double phi, double y) {
  const double mu = logistic(w);
  const double nu = logistic(-w);
  return digamma(mu * phi) - digamma(nu * phi) + std::log((1.0 - y) / y);
}

double beta_k1(double w, double phi, double y) {
  const double mu = logistic(w);
  const double nu = logistic(-w);
  return phi * (trigamma(mu * phi) + trigamma(nu * phi)) - 2.0 * std::sinh(w) * beta_k0(w, phi, y);
}

double log_density_at(const Family& f, double y, double trials, double w) {
  const double phi = f.phi;
  switch (f.kind) {
    case FamilyKind::binomial:
      return lchoose(trials, y) + y * w - trials * softplus(w);
    case FamilyKind::poisson:
      return y * w - std::exp(w) - std::lgamma(y + 1.0);
    case FamilyKind::negative_binomial: {
      // log(mu + phi) = logaddexp(w, log phi)
      const double lp = std::log(phi);
      const double hi = std::max(w, lp);
      const double log_mu_phi = hi + std::log1p(std::exp(std::min(w, lp) - hi));
      return std::lgamma(y + phi) - std::lgamma(phi) - std::lgamma(y + 1.0) + y * (w - log_mu_phi) +
             phi * (lp - log_mu_phi);
    }
    case FamilyKind::gamma:
      return -std::lgamma(phi) + phi * std::log(phi) - phi * w + (phi - 1.0) * std::log(y) -
             y * phi * std::exp(-w);
    case FamilyKind::inverse_gaussian: {
      const double mu = std::exp(w);
      return 0.5 * (std::log(phi) + w - std::log(2.0 * std::numbers::pi) - 3.0 * std::log(y)) -
             phi * (y - mu) * (y - mu) / (2.0 * mu * y);
    }
    case FamilyKind::beta: {
      const double mu = logistic(w);
      const double nu = logistic(-w);
      return std::lgamma(phi) - std::lgamma(mu * phi) - std::lgamma(nu * phi) +
             (mu * phi - 1.0) * std::log(y) + (nu * phi - 1.0) * std::log1p(-y);
    }
  }
  return 0.0;
}

double grad_at(const Family& f, double y, double trials, double w) {
  const double phi = f.phi;
  switch (f.kind) {
    case FamilyKind::binomial: return y - trials * logistic(w);
    case FamilyKind::poisson: return y - std::exp(w);
    case FamilyKind::negative_binomial: {
      const double mu = std::exp(w);
      return phi * (y - mu) / (phi + mu);
    }
    case FamilyKind::gamma: return -phi + y * phi * std::exp(-w);
    case FamilyKind::inverse_gaussian: {
      const double mu = std::exp(w);
      return phi * (y / (2.0 * mu) - mu / (2.0 * y)) + 0.5;
    }
    case FamilyKind::beta: {
      const double g = logistic(w) * logistic(-w);  // e^w / (1 + e^w)^2
      return -phi * g * beta_k0(w, phi, y);
    }
  }
  return 0.0;
}

double curvature_at(const Family& f, double y, double trials, double w) {
  const double phi = f.phi;
  switch (f.kind) {
    case FamilyKind::binomial: {
      const double mu = logistic(w);
      return -trials * mu * logistic(-w);
    }
    case FamilyKind::poisson: return -std::exp(w);
    case FamilyKind::negative_binomial: {
      const double mu = std::exp(w);
      return -phi * mu * (phi + y) / ((phi + mu) * (phi + mu));
    }
    case FamilyKind::gamma: return -y * phi * std::exp(-w);
    case FamilyKind::inverse_gaussian: {
      const double mu = std::exp(w);
      return -phi * (mu * mu + y * y) / (2.0 * y * mu);
    }
    case FamilyKind::beta: {
      // -phi g^2 k1 with g = mu (1 - mu); 2 sinh(w) g = 2 mu - 1 keeps this
      // finite for large |w|.
      const double mu = logistic(w);
      const double nu = logistic(-w);
      const double g = mu * nu;
      const double s1 = trigamma(mu * phi) + trigamma(nu * phi);
      return -phi * g * (phi * g * s1 + (nu - mu) * beta_k0(w, phi, y));
    }
  }
  return 0.0;
}

double log_density(const Family& family, const DataVector& data, const Eigen::Ref<const Vector>& w) {
  if (w.size() != data.size()) throw DimensionError("log_density: w and y differ in length");
  check_support(family, data);
  double total = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    total += log_density_at(family, data.y(i), data.trials_at(i), w(i));
  }
  if (!std::isfinite(total)) throw NumericalError("log_density: non-finite result");
  return total;
}

Vector grad_d(const Family& family, const DataVector& data, const Eigen::Ref<const Vector>& w) {
  if (w.size() != data.size()) throw DimensionError("grad_d: w and y differ in length");
  check_support(family, data);
  Vector d(data.size());
  for (Index i = 0; i < data.size(); ++i) d(i) = grad_at(family, data.y(i), data.trials_at(i), w(i));
  if (!d.allFinite()) throw NumericalError("grad_d: non-finite result");
  return d;
}

Vector hess_D(const Family& family, const DataVector& data, const Eigen::Ref<const Vector>& w) {
  if (w.size() != data.size()) throw DimensionError("hess_D: w and y differ in length");
  check_support(family, data);
  Vector d(data.size());
  for (Index i = 0; i < data.size(); ++i) {
    d(i) = curvature_at(family, data.y(i), data.trials_at(i), w(i));
  }
  if (!d.allFinite()) throw NumericalError("hess_D: non-finite result");
  return d;
}

DataVector sample(const Family& family, const Eigen::Ref<const Vector>& w, std::mt19937_64& rng,
                  const Vector& trials) {
  require_phi(family);
  if (!w.allFinite()) throw DomainError("sample: latent vector has non-finite entries");
  if (trials.size() != 0 && trials.size() != w.size()) {
    throw DimensionError("sample: trials length does not match w");
  }
  DataVector out{Vector(w.size()), trials};
  const double phi = family.phi;
  for (Index i = 0; i < w.size(); ++i) {
    const double mu = inverse_link(family.link(), w(i));
    double y = 0.0;
    switch (family.kind) {
      case FamilyKind::binomial: {
        const auto n = static_cast<long long>(out.trials_at(i));
        y = static_cast<double>(std::binomial_distribution<long long>(n, mu)(rng));
        break;
      }
      case FamilyKind::poisson:
        y = static_cast<double>(std::poisson_distribution<long long>(mu)(rng));
        break;
      case FamilyKind::negative_binomial: {
        const double rate = std::gamma_distribution<double>(phi, mu / phi)(rng);
        y = rate > 0.0 ? static_cast<double>(std::poisson_distribution<long long>(rate)(rng)) : 0.0;
        break;
      }
      case FamilyKind::gamma:
        y = std::gamma_distribution<double>(phi, mu / phi)(rng);
        y = std::max(y, std::numeric_limits<double>::min());
        break;
      case FamilyKind::inverse_gaussian:
        y = draw_inverse_gaussian(mu, phi * mu, rng);
        break;
      case FamilyKind::beta: {
        const double a = std::gamma_distribution<double>(mu * phi, 1.0)(rng);
        const double b = std::gamma_distribution<double>((1.0 - mu) * phi, 1.0)(rng);
        y = a / (a + b);
        if (!(y > 0.0)) y = std::numeric_limits<double>::min();
        if (!(y < 1.0)) y = std::nextafter(1.0, 0.0);
        break;
      }
    }
    out.y(i) = y;
  }
  return out;
}

Vector link_of_data(const Family& family, const DataVector& data) {
  Vector g(data.size());
  for (Index i = 0; i < data.size(); ++i) {
    const double y = data.y(i);
    switch (family.kind) {
      case FamilyKind::binomial: {
        const double n = data.trials_at(i);
        const double p = std::clamp(y / n, 0.25 / n, 1.0 - 0.25 / n);
        g(i) = std::log(p / (1.0 - p));
        break;
      }
      case FamilyKind::beta: g(i) = std::log(y / (1.0 - y)); break;
      default: g(i) = std::log(y > 0.0 ? y : 0.5); break;
    }
  }
  return g;
}

Vector initial_w(const Family& family, const DataVector& data) { return link_of_data(family, data); }

FamilyModel::FamilyModel(Family family, DataVector data)
    : family_(family), data_(std::move(data)) {
  check_support(family_, data_);
}

double FamilyModel::log_density(const Eigen::Ref<const Vector>& w) const {
  double total = 0.0;
  for (Index i = 0; i < data_.size(); ++i) {
    total += log_density_at(family_, data_.y(i), data_.trials_at(i), w(i));
  }
  return total;
}

Vector FamilyModel::gradient(const Eigen::Ref<const Vector>& w) const {
  Vector d(data_.size());
  for (Index i = 0; i < data_.size(); ++i) d(i) = grad_at(family_, data_.y(i), data_.trials_at(i), w(i));
  return d;
}

Vector FamilyModel::curvature(const Eigen::Ref<const Vector>& w) const {
  Vector d(data_.size());
  for (Index i = 0; i < data_.size(); ++i) {
    d(i) = curvature_at(family_, data_.y(i), data_.trials_at(i), w(i));
  }
  return d;
}

}  // namespace hglmm::datamodels

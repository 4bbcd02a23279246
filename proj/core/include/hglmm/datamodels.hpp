#pragma once

#include "hglmm/linalg.hpp"

#include <random>
#include <string>

namespace hglmm::datamodels {

enum class FamilyKind { binomial, poisson, negative_binomial, gamma, inverse_gaussian, beta };

std::string to_string(FamilyKind kind);
FamilyKind family_from_string(const std::string& name);

enum class Link { logit, log };

/// Response family with its dispersion. phi is ignored for binomial and
/// poisson. Parameterizations keep E(y) = mu:
///   negative_binomial  Var = mu + mu^2 / phi
///   gamma              Var = mu^2 / phi
///   inverse_gaussian   lambda = phi * mu, so Var = mu^2 / phi
///   beta               Var = mu (1 - mu) / (1 + phi)
struct Family {
  FamilyKind kind = FamilyKind::poisson;
  double phi = 1.0;

  bool has_phi() const noexcept;
  Link link() const noexcept;
};

/// Responses plus binomial trial counts. An empty `trials` means one trial
/// per observation.
struct DataVector {
  Vector y;
  Vector trials;

  Index size() const noexcept { return y.size(); }
  double trials_at(Index i) const { return trials.size() == 0 ? 1.0 : trials(i); }
};

/// Throws DomainError naming the first observation outside the family's support.
void check_support(const Family& family, const DataVector& data);

double inverse_link(Link link, double w);

/// Element-wise pieces for a single observation.
double log_density_at(const Family& family, double y, double trials, double w);
double grad_at(const Family& family, double y, double trials, double w);
double curvature_at(const Family& family, double y, double trials, double w);

/// Sum over observations of log[y_i | g^{-1}(w_i), phi].
double log_density(const Family& family, const DataVector& data, const Eigen::Ref<const Vector>& w);
/// d_i = d log[y_i|.] / d w_i.
Vector grad_d(const Family& family, const DataVector& data, const Eigen::Ref<const Vector>& w);
/// D_ii = d^2 log[y_i|.] / d w_i^2.
Vector hess_D(const Family& family, const DataVector& data, const Eigen::Ref<const Vector>& w);

/// Beta-family helpers: k0 = psi(mu phi) - psi((1-mu) phi) + log(1/y - 1) and
/// k1 = phi (psi'(mu phi) + psi'((1-mu) phi)) - 2 sinh(w) k0, so that
/// d = -phi e^w k0 / (1+e^w)^2 and D = -phi e^{2w} k1 / (1+e^w)^4.
double beta_k0(double w, double phi, double y);
double beta_k1(double w, double phi, double y);

/// Independent draws with E(y_i) = g^{-1}(w_i).
DataVector sample(const Family& family, const Eigen::Ref<const Vector>& w, std::mt19937_64& rng,
                  const Vector& trials = {});

/// Boundary-adjusted link g*(y): log links replace y = 0 by 0.5; logit links
/// clamp y/n to [0.25/n, 1 - 0.25/n].
Vector link_of_data(const Family& family, const DataVector& data);

/// Starting latent vector for Newton iterations, g*(y).
Vector initial_w(const Family& family, const DataVector& data);

/// The data term of the joint log-density as seen by the Laplace machinery.
/// Concrete families bind a Family to a DataVector; tests may inject others.
class DataModel {
 public:
  virtual ~DataModel() = default;
  virtual Index size() const = 0;
  virtual double log_density(const Eigen::Ref<const Vector>& w) const = 0;
  virtual Vector gradient(const Eigen::Ref<const Vector>& w) const = 0;
  virtual Vector curvature(const Eigen::Ref<const Vector>& w) const = 0;
};

class FamilyModel final : public DataModel {
 public:
  FamilyModel(Family family, DataVector data);

  Index size() const override { return data_.size(); }
  double log_density(const Eigen::Ref<const Vector>& w) const override;
  Vector gradient(const Eigen::Ref<const Vector>& w) const override;
  Vector curvature(const Eigen::Ref<const Vector>& w) const override;

  const Family& family() const noexcept { return family_; }
  const DataVector& data() const noexcept { return data_; }

 private:
  Family family_;
  DataVector data_;
};

}  // namespace hglmm::datamodels

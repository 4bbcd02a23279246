#pragma once

#include "hglmm/covariance.hpp"
#include "hglmm/datamodels.hpp"
#include "hglmm/laplace.hpp"
#include "hglmm/optimizer.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace hglmm::simulate {

/// mean + L z with L the Cholesky factor of Sigma and z iid N(0, 1).
Vector sim_mvn(const Vector& mean, const covariance::CovMatrix& sigma, std::mt19937_64& rng);

enum class Stream : std::uint32_t { locations = 0, covariates = 1, latent = 2, responses = 3 };

/// Independent generator for (seed, replicate, stream).
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t replicate, Stream stream);

/// Spatial regression experiment: random observation sites in the unit
/// square, a regular prediction grid, covariates (1, x, tau, x tau) with
/// x ~ N(0, 1) and tau ~ Bernoulli(0.5), an exponential latent field with
/// nugget, and conditionally independent responses.
struct ExperimentConfig {
  datamodels::Family family{datamodels::FamilyKind::poisson, 1.0};
  Vector beta = (Vector(4) << 0.5, 0.5, -0.5, 0.5).finished();
  double sigma2 = 1.0;
  double range = 1.0;
  double nugget = 1e-4;
  int n_obs = 100;
  /// Prediction sites form a pred_grid x pred_grid lattice of cell centres.
  int pred_grid = 5;
  int n_replicates = 500;
  std::uint64_t seed = 20240101;
  double level = 0.9;
  laplace::Mode mode = laplace::Mode::reml;
  int threads = 1;
  optimizer::FitOptions fit{};

  void validate() const;
};

/// One simulated data set with everything needed to score it.
struct Replicate {
  Matrix coords;       ///< n_obs x 2
  Matrix pred_coords;  ///< n_pred x 2
  Matrix x;
  Matrix x_u;
  Vector w;  ///< latent values at observation sites
  Vector u;  ///< latent values at prediction sites
  datamodels::DataVector data;
};

Replicate simulate_replicate(const ExperimentConfig& config, std::uint64_t replicate);

/// Coverage and error summaries for one quantity.
struct EffectRow {
  std::string name;
  double bias = 0.0;
  double mse = 0.0;
  double ratio = 0.0;  ///< bias^2 / MSE
  double coverage_corrected = 0.0;
  double coverage_uncorrected = 0.0;
};

struct ReplicateOutcome {
  bool ok = false;
  std::string error;
  Vector beta_hat;
  Vector se_u;
  Vector se_c;
  Vector u_error;  ///< u_hat - u
  Vector pred_se_c;
  Vector pred_se_u;
  Vector params;
  double max_grad = 0.0;
  int evaluations = 0;
};

struct ExperimentReport {
  std::string family;
  int replicates = 0;
  int completed = 0;
  int failures = 0;
  double level = 0.9;
  std::vector<EffectRow> rows;  ///< beta0..beta{p-1}, then u
  std::vector<std::string> failure_messages;
  /// Largest final max|v| over completed replicates.
  double worst_max_grad = 0.0;

  double failure_rate() const {
    return replicates == 0 ? 0.0 : static_cast<double>(failures) / replicates;
  }
  const EffectRow& row(const std::string& name) const;
};

/// Fits and scores a single replicate; errors are captured in the outcome.
ReplicateOutcome run_replicate(const ExperimentConfig& config, std::uint64_t replicate);

/// Aggregates outcomes in replicate order.
ExperimentReport summarize(const ExperimentConfig& config, const std::vector<ReplicateOutcome>& outcomes);

ExperimentReport run_experiment(const ExperimentConfig& config);

std::string report_csv(const ExperimentReport& report);
std::string report_table(const ExperimentReport& report);

}  // namespace hglmm::simulate

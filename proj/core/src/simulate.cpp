#include "hglmm/simulate.hpp"

#include "hglmm/error.hpp"
#include "hglmm/inference.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <thread>

namespace hglmm::simulate {

namespace {

covariance::CovarianceSpec fitted_spec(const Matrix& coords) {
  return covariance::CovarianceSpec({covariance::CovComponent::exponential_geo(coords, true)},
                                    {"geo"});
}

Matrix design(const Vector& xcov, const Vector& tau) {
  Matrix x(xcov.size(), 4);
  x.col(0).setOnes();
  x.col(1) = xcov;
  x.col(2) = tau;
  x.col(3) = xcov.cwiseProduct(tau);
  return x;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

Vector sim_mvn(const Vector& mean, const covariance::CovMatrix& sigma, std::mt19937_64& rng) {
  if (mean.size() != sigma.factor.size()) throw DimensionError("sim_mvn: mean and Sigma differ");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(mean.size());
  for (Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return mean + sigma.factor.lower_times(z);
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t replicate, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

void ExperimentConfig::validate() const {
  if (n_replicates < 1) throw DomainError("experiment: n_replicates must be at least 1");
  if (n_obs < 6) throw DomainError("experiment: n_obs must be at least 6");
  if (pred_grid < 1) throw DomainError("experiment: pred_grid must be at least 1");
  if (beta.size() != 4) throw DomainError("experiment: beta must have 4 entries (1, x, tau, x tau)");
  if (!(sigma2 > 0.0) || !(range > 0.0) || !(nugget >= 0.0)) {
    throw DomainError("experiment: covariance parameters must be positive");
  }
  if (!(level > 0.0 && level < 1.0)) throw DomainError("experiment: level must lie in (0, 1)");
  if (family.has_phi() && !(family.phi > 0.0)) throw DomainError("experiment: phi must be positive");
  if (threads < 1) throw DomainError("experiment: threads must be at least 1");
}

Replicate simulate_replicate(const ExperimentConfig& config, std::uint64_t replicate) {
  const Index n = config.n_obs;
  const Index g = config.pred_grid;
  const Index m = g * g;
  Replicate r;

  auto loc_rng = substream(config.seed, replicate, Stream::locations);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  r.coords.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    r.coords(i, 0) = unif(loc_rng);
    r.coords(i, 1) = unif(loc_rng);
  }
  r.pred_coords.resize(m, 2);
  for (Index i = 0; i < g; ++i) {
    for (Index j = 0; j < g; ++j) {
      r.pred_coords(i * g + j, 0) = (static_cast<double>(i) + 0.5) / static_cast<double>(g);
      r.pred_coords(i * g + j, 1) = (static_cast<double>(j) + 0.5) / static_cast<double>(g);
    }
  }

  auto cov_rng = substream(config.seed, replicate, Stream::covariates);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  Vector xc(n + m), tau(n + m);
  for (Index i = 0; i < n + m; ++i) {
    xc(i) = normal(cov_rng);
    tau(i) = coin(cov_rng) ? 1.0 : 0.0;
  }
  const Matrix x_all = design(xc, tau);
  r.x = x_all.topRows(n);
  r.x_u = x_all.bottomRows(m);

  Matrix all_coords(n + m, 2);
  all_coords << r.coords, r.pred_coords;
  const auto joint = covariance::CovarianceSpec(
      {covariance::CovComponent::exponential_geo(all_coords, config.nugget > 0.0)});
  std::vector<double> theta{config.sigma2, config.range};
  if (config.nugget > 0.0) theta.push_back(config.nugget);
  const auto sigma = covariance::build_sigma(joint, theta);
  auto lat_rng = substream(config.seed, replicate, Stream::latent);
  const Vector w_all = sim_mvn(x_all * config.beta, sigma, lat_rng);
  r.w = w_all.head(n);
  r.u = w_all.tail(m);

  auto resp_rng = substream(config.seed, replicate, Stream::responses);
  r.data = datamodels::sample(config.family, r.w, resp_rng);
  return r;
}

const EffectRow& ExperimentReport::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw DomainError("report has no row '" + name + "'");
}

ReplicateOutcome run_replicate(const ExperimentConfig& config, std::uint64_t replicate) {
  ReplicateOutcome out;
  try {
    const Replicate rep = simulate_replicate(config, replicate);
    const auto spec = fitted_spec(rep.coords);
    auto opts = config.fit;
    opts.mode = config.mode;
    const auto fit = optimizer::fit(rep.data, config.family, rep.x, spec, opts);
    if (fit.status != optimizer::FitStatus::converged) {
      throw ConvergenceError("search hit the evaluation limit");
    }
    const auto fe = inference::fixed_effects(fit);
    covariance::PredictionMeta meta;
    meta.m = rep.pred_coords.rows();
    meta.components.resize(1);
    meta.components[0].coords = rep.pred_coords;
    const auto pred = inference::predict(fit, rep.x_u, meta);
    out.beta_hat = fe.estimate;
    out.se_u = fe.se_u;
    out.se_c = fe.se_c;
    out.u_error = pred.u_hat - rep.u;
    out.pred_se_c = pred.se();
    out.pred_se_u = pred.se_blup();
    out.params = fit.params();
    out.max_grad = fit.max_grad;
    out.evaluations = fit.evaluations;
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = "replicate " + std::to_string(replicate) + ": " + e.what();
  }
  return out;
}

ExperimentReport summarize(const ExperimentConfig& config, const std::vector<ReplicateOutcome>& outcomes) {
  ExperimentReport rep;
  rep.family = datamodels::to_string(config.family.kind);
  rep.replicates = static_cast<int>(outcomes.size());
  rep.level = config.level;
  const double z = inference::z_multiplier(config.level);
  const Index p = config.beta.size();

  std::vector<EffectRow> rows(static_cast<std::size_t>(p) + 1);
  for (Index j = 0; j < p; ++j) rows[static_cast<std::size_t>(j)].name = "beta" + std::to_string(j);
  rows.back().name = "u";
  double u_count = 0.0;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++rep.failures;
      rep.failure_messages.push_back(o.error);
      continue;
    }
    ++rep.completed;
    rep.worst_max_grad = std::max(rep.worst_max_grad, o.max_grad);
    for (Index j = 0; j < p; ++j) {
      auto& r = rows[static_cast<std::size_t>(j)];
      const double err = o.beta_hat(j) - config.beta(j);
      r.bias += err;
      r.mse += err * err;
      r.coverage_corrected += std::abs(err) <= z * o.se_c(j) ? 1.0 : 0.0;
      r.coverage_uncorrected += std::abs(err) <= z * o.se_u(j) ? 1.0 : 0.0;
    }
    auto& r = rows.back();
    const double m = static_cast<double>(o.u_error.size());
    r.bias += o.u_error.mean();
    r.mse += o.u_error.squaredNorm() / m;
    for (Index k = 0; k < o.u_error.size(); ++k) {
      r.coverage_corrected += std::abs(o.u_error(k)) <= z * o.pred_se_c(k) ? 1.0 : 0.0;
      r.coverage_uncorrected += std::abs(o.u_error(k)) <= z * o.pred_se_u(k) ? 1.0 : 0.0;
    }
    u_count += m;
  }
  if (rep.completed > 0) {
    const double c = rep.completed;
    for (Index j = 0; j < p; ++j) {
      auto& r = rows[static_cast<std::size_t>(j)];
      r.bias /= c;
      r.mse /= c;
      r.coverage_corrected /= c;
      r.coverage_uncorrected /= c;
    }
    auto& r = rows.back();
    r.bias /= c;
    r.mse /= c;
    r.coverage_corrected /= u_count;
    r.coverage_uncorrected /= u_count;
    for (auto& row : rows) row.ratio = row.mse > 0.0 ? row.bias * row.bias / row.mse : 0.0;
  }
  rep.rows = std::move(rows);
  return rep;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto count = static_cast<std::size_t>(config.n_replicates);
  std::vector<ReplicateOutcome> outcomes(count);
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config.threads), count);
  if (workers <= 1) {
    for (std::size_t r = 0; r < count; ++r) outcomes[r] = run_replicate(config, r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < count; r = next++) outcomes[r] = run_replicate(config, r);
      });
    }
  }
  return summarize(config, outcomes);
}

std::string report_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "effect,bias,mse,ratio,coverage_corrected,coverage_uncorrected\n";
  for (const auto& r : report.rows) {
    os << r.name << ',' << fmt(r.bias) << ',' << fmt(r.mse) << ',' << fmt(r.ratio) << ','
       << fmt(r.coverage_corrected) << ',' << fmt(r.coverage_uncorrected) << '\n';
  }
  return os.str();
}

std::string report_table(const ExperimentReport& report) {
  std::ostringstream os;
  const int pct = static_cast<int>(std::lround(report.level * 100.0));
  os << "family: " << report.family << "  replicates: " << report.replicates
     << "  completed: " << report.completed << "  failures: " << report.failures << '\n';
  os << std::left << std::setw(8) << "Effect" << std::right << std::setw(11) << "Bias"
     << std::setw(11) << "MSE" << std::setw(9) << "Ratio" << std::setw(10)
     << ("CI" + std::to_string(pct) + "_c") << std::setw(10) << ("CI" + std::to_string(pct) + "_u")
     << '\n';
  os << std::fixed;
  for (const auto& r : report.rows) {
    os << std::left << std::setw(8) << r.name << std::right << std::setprecision(4) << std::setw(11)
       << r.bias << std::setw(11) << r.mse << std::setprecision(3) << std::setw(9) << r.ratio
       << std::setw(10) << r.coverage_corrected << std::setw(10) << r.coverage_uncorrected << '\n';
  }
  return os.str();
}

}  // namespace hglmm::simulate

#include "hglmm/optimizer.hpp"

#include "hglmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hglmm::optimizer {

namespace {

constexpr double kCorrelationMargin = 1e-6;

bool positive_kind(EntryKind k) { return k != EntryKind::correlation; }

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_inputs(const datamodels::DataVector& data, const datamodels::Family& family,
                  const Matrix& x, const covariance::CovarianceSpec& spec) {
  datamodels::check_support(family, data);
  if (spec.n() != data.size()) {
    throw DimensionError("covariance spec covers " + std::to_string(spec.n()) +
                         " observations but the data has " + std::to_string(data.size()));
  }
  if (x.rows() != data.size()) throw DimensionError("design rows do not match observations");
  if (x.cols() == 0 || !x.allFinite()) throw DomainError("design must be non-empty and finite");
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  if (qr.rank() < x.cols()) throw DomainError("design matrix is rank deficient");
}

void apply_overrides(ParamSpace& space, const FitOptions& opts) {
  for (const auto& [name, bounds] : opts.bounds) {
    auto& e = space.entries()[space.find(name)];
    if (!(bounds.first < bounds.second)) {
      throw DomainError("bounds for '" + name + "' must satisfy lower < upper");
    }
    if (positive_kind(e.kind) && bounds.first <= 0.0) {
      throw DomainError("lower bound for '" + name + "' must be positive");
    }
    e.lower = bounds.first;
    e.upper = bounds.second;
  }
}

covariance::CovMatrix sigma_at(const covariance::CovarianceSpec& spec, const Vector& theta,
                               const linalg::JitterPolicy& jitter) {
  return covariance::build_sigma(spec, std::span<const double>(theta.data(), theta.size()), jitter);
}

datamodels::Family with_phi(datamodels::Family family, const ParamSpace& space, const Vector& params) {
  if (space.has_phi()) family.phi = params(static_cast<Index>(space.theta_len()));
  return family;
}

}  // namespace

std::string to_string(EntryKind kind) {
  switch (kind) {
    case EntryKind::variance: return "variance";
    case EntryKind::range: return "range";
    case EntryKind::correlation: return "correlation";
    case EntryKind::dispersion: return "dispersion";
  }
  return "unknown";
}

std::string to_string(FitStatus status) {
  return status == FitStatus::converged ? "converged" : "evaluation_limit";
}

ParamSpace::ParamSpace(std::vector<ParamEntry> entries, std::size_t theta_len, bool has_phi)
    : entries_(std::move(entries)), theta_len_(theta_len), has_phi_(has_phi) {
  if (entries_.size() != theta_len_ + (has_phi_ ? 1 : 0)) {
    throw DimensionError("ParamSpace: entry count does not match theta length and phi flag");
  }
  for (const auto& e : entries_) {
    if (!(e.lower < e.upper) || (positive_kind(e.kind) && !(e.lower > 0.0))) {
      throw DomainError("ParamSpace: invalid bounds for '" + e.name + "'");
    }
  }
}

ParamSpace ParamSpace::defaults(const covariance::CovarianceSpec& spec,
                                const datamodels::Family& family,
                                const datamodels::DataVector& data) {
  double v = link_variance(family, data);
  if (!(v > 0.0) || !std::isfinite(v)) v = 1.0;
  std::vector<ParamEntry> entries;
  for (std::size_t k = 0; k < spec.components().size(); ++k) {
    const auto& comp = spec.components()[k];
    for (const auto& info : comp.params(spec.labels()[k])) {
      ParamEntry e{info.name, EntryKind::variance, 0.0, 0.0};
      switch (info.kind) {
        case covariance::ParamKind::variance:
          e = {info.name, EntryKind::variance, 1e-6 * v, 10.0 * v};
          break;
        case covariance::ParamKind::range: {
          const double d = comp.max_distance() > 0.0 ? comp.max_distance() : 1.0;
          e = {info.name, EntryKind::range, 1e-4 * d, 10.0 * d};
          break;
        }
        case covariance::ParamKind::correlation: {
          const double lo = info.lower < 0.0 ? info.lower + kCorrelationMargin : 0.0;
          e = {info.name, EntryKind::correlation, lo, std::min(info.upper, 1.0) - kCorrelationMargin};
          break;
        }
      }
      entries.push_back(e);
    }
  }
  const std::size_t theta_len = entries.size();
  if (family.has_phi()) entries.push_back({"phi", EntryKind::dispersion, 1e-6, 1e6});
  return ParamSpace(std::move(entries), theta_len, family.has_phi());
}

std::size_t ParamSpace::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw DomainError("unknown parameter '" + name + "'");
}

Vector ParamSpace::to_internal(const Vector& natural) const {
  if (static_cast<std::size_t>(natural.size()) != size()) {
    throw DimensionError("to_internal: wrong parameter count");
  }
  Vector z(natural.size());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& e = entries_[i];
    const double x = natural(static_cast<Index>(i));
    if (positive_kind(e.kind)) {
      z(static_cast<Index>(i)) = std::log(x);
    } else {
      const double u = (x - e.lower) / (e.upper - e.lower);
      z(static_cast<Index>(i)) = std::log(u) - std::log1p(-u);
    }
  }
  return z;
}

Vector ParamSpace::to_natural(const Vector& internal) const {
  if (static_cast<std::size_t>(internal.size()) != size()) {
    throw DimensionError("to_natural: wrong parameter count");
  }
  Vector x(internal.size());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& e = entries_[i];
    const double z = internal(static_cast<Index>(i));
    if (positive_kind(e.kind)) {
      x(static_cast<Index>(i)) = std::clamp(std::exp(z), e.lower, e.upper);
    } else {
      x(static_cast<Index>(i)) = std::clamp(e.lower + (e.upper - e.lower) * logistic(z), e.lower, e.upper);
    }
  }
  return x;
}

Vector ParamSpace::clamp(const Vector& natural) const {
  Vector x = natural;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& e = entries_[i];
    auto& xi = x(static_cast<Index>(i));
    if (positive_kind(e.kind)) {
      xi = std::clamp(xi, e.lower, e.upper);
    } else {
      const double margin = 1e-6 * (e.upper - e.lower);
      xi = std::clamp(xi, e.lower + margin, e.upper - margin);
    }
  }
  return x;
}

std::vector<int> ParamSpace::bound_activity(const Vector& natural, double tol) const {
  std::vector<int> out(size(), 0);
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& e = entries_[i];
    const double x = natural(static_cast<Index>(i));
    if (positive_kind(e.kind)) {
      const double z = std::log(x);
      if (z - std::log(e.lower) < tol) out[i] = -1;
      else if (std::log(e.upper) - z < tol) out[i] = 1;
    } else {
      const double u = (x - e.lower) / (e.upper - e.lower);
      if (u < tol) out[i] = -1;
      else if (1.0 - u < tol) out[i] = 1;
    }
  }
  return out;
}

double link_variance(const datamodels::Family& family, const datamodels::DataVector& data) {
  const Vector g = datamodels::link_of_data(family, data);
  if (g.size() < 2) return 0.0;
  const double mean = g.mean();
  return (g.array() - mean).square().sum() / static_cast<double>(g.size() - 1);
}

Vector init_params(const datamodels::DataVector& data, const datamodels::Family& family,
                   const covariance::CovarianceSpec& spec, const Matrix& /*x*/) {
  const auto infos = spec.params();
  double v = link_variance(family, data);
  if (!(v > 0.0) || !std::isfinite(v)) v = 1.0;
  const auto variance_count = std::count_if(infos.begin(), infos.end(), [](const auto& p) {
    return p.kind == covariance::ParamKind::variance;
  });
  Vector out(static_cast<Index>(infos.size() + (family.has_phi() ? 1 : 0)));
  Index i = 0;
  for (std::size_t k = 0; k < spec.components().size(); ++k) {
    const auto& comp = spec.components()[k];
    for (const auto& info : comp.params(spec.labels()[k])) {
      switch (info.kind) {
        case covariance::ParamKind::variance:
          out(i) = v / static_cast<double>(variance_count);
          break;
        case covariance::ParamKind::range:
          out(i) = (comp.max_distance() > 0.0 ? comp.max_distance() : 1.0) / 4.0;
          break;
        case covariance::ParamKind::correlation:
          out(i) = std::clamp(0.5, info.lower, info.upper);
          break;
      }
      ++i;
    }
  }
  if (family.has_phi()) out(i) = 1.0;
  return out;
}

Vector FitResult::params() const {
  Vector p(theta_hat.size() + (space.has_phi() ? 1 : 0));
  p.head(theta_hat.size()) = theta_hat;
  if (space.has_phi()) p(theta_hat.size()) = phi_hat;
  return p;
}

std::size_t FitResult::aic_param_count() const {
  std::size_t k = static_cast<std::size_t>(theta_hat.size()) + (family.has_phi() ? 1 : 0);
  if (mode == laplace::Mode::ml) k += static_cast<std::size_t>(x.cols());
  return k;
}

FitResult evaluate_at(const datamodels::DataVector& data, const datamodels::Family& family,
                      const Matrix& x, const covariance::CovarianceSpec& spec, const Vector& params,
                      laplace::Mode mode, const laplace::SolverOptions& solver) {
  check_inputs(data, family, x, spec);
  FitResult r;
  r.space = ParamSpace::defaults(spec, family, data);
  if (static_cast<std::size_t>(params.size()) != r.space.size()) {
    throw DimensionError("evaluate_at: expected " + std::to_string(r.space.size()) + " parameters");
  }
  r.family = with_phi(family, r.space, params);
  r.data = data;
  r.x = x;
  r.spec = spec;
  r.mode = mode;
  r.theta_hat = params.head(static_cast<Index>(r.space.theta_len()));
  r.phi_hat = r.space.has_phi() ? r.family.phi : 0.0;
  r.sigma_hat = sigma_at(spec, r.theta_hat, solver.jitter);
  laplace::SolverOptions keep = solver;
  keep.keep_hessian = true;
  auto ev = laplace::laplace_loglik(datamodels::FamilyModel(r.family, data), x, r.sigma_hat, mode,
                                    std::nullopt, keep);
  r.a = ev.mode.a;
  r.H = std::move(ev.mode.H);
  r.curvature = ev.mode.curvature;
  r.max_grad = ev.mode.max_grad;
  r.inner_iterations = ev.mode.iterations;
  r.parts = ev.value;
  r.loglik = ev.value.loglik;
  r.minus2ll = -2.0 * r.loglik;
  r.beta_hat = laplace::Gls(r.sigma_hat.factor, r.x).beta(r.a);
  r.bound_activity = r.space.bound_activity(params);
  r.evaluations = 1;
  return r;
}

FitResult fit(const datamodels::DataVector& data, const datamodels::Family& family, const Matrix& x,
              const covariance::CovarianceSpec& spec, const FitOptions& opts) {
  check_inputs(data, family, x, spec);
  ParamSpace space = ParamSpace::defaults(spec, family, data);
  apply_overrides(space, opts);

  Vector start = init_params(data, family, spec, x);
  for (const auto& [name, value] : opts.initial) start(static_cast<Index>(space.find(name))) = value;
  start = space.clamp(start);

  laplace::SolverOptions search_solver = opts.solver;
  search_solver.keep_hessian = false;

  std::optional<Vector> warm;
  int evaluation = 0;
  double best = -std::numeric_limits<double>::infinity();
  auto objective = [&](const Vector& z) {
    const Vector p = space.to_natural(z);
    EvaluationTrace trace{++evaluation, p, -std::numeric_limits<double>::infinity(), best, 0.0, 0, true};
    double value = std::numeric_limits<double>::infinity();
    try {
      const Vector theta = p.head(static_cast<Index>(space.theta_len()));
      spec.validate(std::span<const double>(theta.data(), theta.size()));
      const auto sigma = sigma_at(spec, theta, opts.solver.jitter);
      const datamodels::FamilyModel model(with_phi(family, space, p), data);
      std::optional<laplace::Evaluation> ev;
      try {
        ev = laplace::laplace_loglik(model, x, sigma, opts.mode, warm, search_solver);
      } catch (const Error&) {
        if (!warm) throw;
        ev = laplace::laplace_loglik(model, x, sigma, opts.mode, std::nullopt, search_solver);
      }
      warm = ev->mode.a;
      value = -ev->value.loglik;
      best = std::max(best, ev->value.loglik);
      trace = {evaluation, p, ev->value.loglik, best, ev->mode.max_grad, ev->mode.iterations, false};
    } catch (const Error&) {
    }
    if (opts.on_evaluation) opts.on_evaluation(trace);
    return value;
  };

  // An unusable start (beta responses near 0 or 1 at phi = 1 leave -H
  // indefinite) moves phi along a fixed ladder before the search begins.
  Vector z0 = space.to_internal(start);
  int probes = 1;
  if (!std::isfinite(objective(z0)) && space.has_phi()) {
    const auto phi_at = static_cast<Index>(space.theta_len());
    for (double phi : {10.0, 100.0, 1000.0, 0.1}) {
      Vector s = start;
      s(phi_at) = phi;
      const Vector z = space.to_internal(space.clamp(s));
      ++probes;
      if (std::isfinite(objective(z))) {
        z0 = z;
        break;
      }
    }
  }

  optim::NelderMeadOptions nm = opts.search;
  nm.max_evals = std::max(1, opts.search.max_evals - probes);
  auto result = optim::nelder_mead(objective, z0, nm);
  std::vector<double> trace = result.best_trace;
  int evaluations = result.evaluations + probes;
  int iterations = result.iterations;
  for (int r = 0; r < opts.restarts && evaluations < opts.search.max_evals; ++r) {
    nm.max_evals = opts.search.max_evals - evaluations;
    auto again = optim::nelder_mead(objective, result.x, nm);
    for (double b : again.best_trace) trace.push_back(std::min(b, trace.empty() ? b : trace.back()));
    evaluations += again.evaluations;
    iterations += again.iterations;
    if (again.f <= result.f) {
      result.x = again.x;
      result.f = again.f;
    }
    result.converged = again.converged;
  }
  if (!std::isfinite(result.f)) {
    throw ConvergenceError("fit: no parameter value produced a finite objective");
  }

  const Vector best_params = space.to_natural(result.x);
  FitResult r;
  try {
    r = evaluate_at(data, family, x, spec, best_params, opts.mode, opts.solver);
  } catch (const Error& e) {
    throw ConvergenceError(std::string("fit: inner solver failed at the optimum: ") + e.what());
  }
  r.space = space;
  r.bound_activity = space.bound_activity(best_params);
  r.evaluations = evaluations;
  r.search_iterations = iterations;
  r.status = result.converged ? FitStatus::converged : FitStatus::evaluation_limit;
  r.best_trace.reserve(trace.size());
  for (double f : trace) r.best_trace.push_back(-f);

  std::ostringstream settings;
  settings << "nelder-mead step=" << opts.search.initial_step << " f_tol=" << opts.search.f_tol
           << " f_abs=" << opts.search.f_abs << " x_tol=" << opts.search.x_tol << " max_evals=" << opts.search.max_evals
           << " restarts=" << opts.restarts << "; newton grad_tol=" << opts.solver.grad_tol
           << " max_iter=" << opts.solver.max_iter << " alpha=" << opts.solver.alpha;
  r.search_settings = settings.str();
  return r;
}

std::vector<RankedFit> compare(const std::vector<const FitResult*>& fits) {
  if (fits.empty()) return {};
  const FitResult& ref = *fits.front();
  for (std::size_t i = 1; i < fits.size(); ++i) {
    const FitResult& f = *fits[i];
    if (f.family.kind != ref.family.kind || f.data.y.size() != ref.data.y.size() ||
        f.data.y != ref.data.y || f.data.trials != ref.data.trials) {
      throw DomainError("compare: fit " + std::to_string(i) + " uses different data or family");
    }
    if (f.mode != ref.mode) {
      throw DomainError("compare: fits mix ML and REML");
    }
    if (f.mode == laplace::Mode::reml &&
        (f.x.rows() != ref.x.rows() || f.x.cols() != ref.x.cols() || f.x != ref.x)) {
      throw DomainError("compare: REML fits with different fixed effects are not comparable");
    }
  }
  std::vector<RankedFit> rows;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    rows.push_back({i, fits[i]->minus2ll, fits[i]->aic(), fits[i]->aic_param_count(), fits[i]->mode});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.aic < b.aic; });
  return rows;
}

std::vector<RankedFit> compare(const std::vector<FitResult>& fits) {
  std::vector<const FitResult*> ptrs;
  for (const auto& f : fits) ptrs.push_back(&f);
  return compare(ptrs);
}

}  // namespace hglmm::optimizer

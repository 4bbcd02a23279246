#include "hglmm/laplace.hpp"

#include "hglmm/error.hpp"

#include <cmath>
#include <numbers>

namespace hglmm::laplace {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

void check_shapes(const Matrix& x, Index n) {
  if (x.rows() != n) {
    throw DimensionError("design has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(n));
  }
  if (x.cols() == 0 || x.cols() > n) {
    throw DimensionError("design must have between 1 and n columns");
  }
}

linalg::NegHessian neg_hessian(const Vector& curvature, const Gls& gls, const Matrix* projection,
                               const linalg::JitterPolicy& jitter) {
  if (projection != nullptr) return linalg::NegHessian::dense(curvature, *projection, jitter);
  return linalg::NegHessian::woodbury(curvature, gls.sigma(), gls.x(), jitter);
}

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::ml ? "ml" : "reml"; }

Mode mode_from_string(const std::string& name) {
  if (name == "ml" || name == "ML") return Mode::ml;
  if (name == "reml" || name == "REML") return Mode::reml;
  throw DomainError("unknown estimation mode '" + name + "' (expected ml or reml)");
}

Gls::Gls(const linalg::FactoredMatrix& sigma, const Matrix& x) : sigma_(&sigma), x_(&x) {
  check_shapes(x, sigma.size());
  u_ = sigma.solve(x);
  Matrix c = x.transpose() * u_;
  c = 0.5 * (c + c.transpose()).eval();
  c_.compute(c);
  if (c_.info() != Eigen::Success || !(c_.rcond() > 1e-13)) {
    throw NumericalError("X^T Sigma^{-1} X is singular; the design is rank deficient");
  }
  logdet_c_ = 2.0 * c_.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

Matrix Gls::xtsx_inverse() const {
  return c_.solve(Matrix::Identity(u_.cols(), u_.cols()));
}

Vector Gls::beta(const Eigen::Ref<const Vector>& w) const { return c_.solve(u_.transpose() * w); }

Matrix Gls::b_matrix() const { return c_.solve(u_.transpose()); }

Vector Gls::apply_p(const Eigen::Ref<const Vector>& w) const {
  return sigma_->solve(w) - u_ * beta(w);
}

double Gls::quad_p(const Eigen::Ref<const Vector>& w) const {
  const Vector r = w - (*x_) * beta(w);
  return sigma_->quad_inverse(r);
}

Matrix Gls::projection() const {
  Matrix p = sigma_->inverse() - u_ * c_.solve(u_.transpose());
  return 0.5 * (p + p.transpose());
}

Vector profile_beta(const covariance::CovMatrix& sigma, const Matrix& x,
                    const Eigen::Ref<const Vector>& w) {
  if (w.size() != sigma.factor.size()) throw DimensionError("profile_beta: w has wrong length");
  return Gls(sigma.factor, x).beta(w);
}

Matrix projection_P(const covariance::CovMatrix& sigma, const Matrix& x) {
  return Gls(sigma.factor, x).projection();
}

double gaussian_loglik(const Eigen::Ref<const Vector>& a, const Matrix& x,
                       const covariance::CovMatrix& sigma, Mode mode) {
  const Index n = sigma.factor.size();
  if (a.size() != n) throw DimensionError("gaussian_loglik: a has wrong length");
  const Gls gls(sigma.factor, x);
  const double quad = gls.quad_p(a);
  const double p = static_cast<double>(x.cols());
  const double nn = static_cast<double>(n);
  if (mode == Mode::ml) return -0.5 * nn * kLog2Pi - 0.5 * sigma.factor.logdet() - 0.5 * quad;
  return -0.5 * (nn - p) * kLog2Pi - 0.5 * sigma.factor.logdet() - 0.5 * gls.logdet_xtsx() -
         0.5 * quad;
}

ModeResult nr_mode(const datamodels::DataModel& model, const Matrix& x,
                   const covariance::CovMatrix& sigma, const Eigen::Ref<const Vector>& w0,
                   const SolverOptions& opts) {
  const Index n = model.size();
  if (sigma.factor.size() != n || w0.size() != n) {
    throw DimensionError("nr_mode: data, Sigma and starting vector differ in size");
  }
  const Gls gls(sigma.factor, x);
  const bool woodbury = sigma.factor.is_blocked();
  std::optional<Matrix> projection;
  if (!woodbury || opts.keep_hessian) projection = gls.projection();
  const Matrix* dense_p = woodbury ? nullptr : &*projection;

  auto inner_objective = [&](const Vector& w) { return model.log_density(w) - 0.5 * gls.quad_p(w); };
  auto gradient = [&](const Vector& w) -> Vector { return model.gradient(w) - gls.apply_p(w); };

  ModeResult out;
  out.woodbury = woodbury;
  Vector w = w0;
  Vector v = gradient(w);
  double gmax = max_abs(v);
  if (!std::isfinite(gmax)) throw NumericalError("nr_mode: gradient is not finite at the start");
  out.grad_history.push_back(gmax);
  double objective = inner_objective(w);
  bool converged = gmax < opts.grad_tol;

  while (!converged) {
    if (out.iterations >= opts.max_iter) {
      throw ConvergenceError("nr_mode: no convergence in " + std::to_string(opts.max_iter) +
                             " iterations (max|v| = " + std::to_string(gmax) + ")");
    }
    ++out.iterations;
    const Vector curvature = model.curvature(w);
    Vector delta;
    try {
      delta = neg_hessian(curvature, gls, dense_p, opts.jitter).solve(v);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("nr_mode: -H is not positive definite at iteration ") +
                           std::to_string(out.iterations) + ": " + e.what());
    }
    double step = 1.0;
    Vector w_next = w + delta;
    Vector v_next = gradient(w_next);
    double g_next = max_abs(v_next);
    if (!(g_next <= gmax)) {
      step = opts.alpha;
      w_next = w + step * delta;
      v_next = gradient(w_next);
      g_next = max_abs(v_next);
    }
    const double step_size = step * max_abs(delta);
    if (!std::isfinite(g_next)) {
      throw NumericalError("nr_mode: gradient overflowed at iteration " +
                           std::to_string(out.iterations));
    }
    w = std::move(w_next);
    v = std::move(v_next);
    gmax = g_next;
    out.grad_history.push_back(gmax);
    const double next_objective = inner_objective(w);
    const bool flat = std::abs(next_objective - objective) < opts.obj_tol ||
                      step_size <= opts.step_tol * (1.0 + max_abs(w));
    objective = next_objective;
    converged = gmax < opts.grad_tol;
    if (!converged && flat && gmax < opts.stall_grad_tol) {
      converged = true;
      out.stalled = true;
    }
  }

  out.curvature = model.curvature(w);
  const auto neg_h = neg_hessian(out.curvature, gls, dense_p, opts.jitter);
  out.logdet_negH = neg_h.logdet();
  if (opts.keep_hessian) {
    out.H = -*projection;
    out.H.diagonal() += out.curvature;
  }
  out.a = std::move(w);
  out.max_grad = gmax;
  return out;
}

ModeResult nr_mode(const datamodels::DataVector& data, const datamodels::Family& family,
                   const Matrix& x, const covariance::CovMatrix& sigma,
                   const Eigen::Ref<const Vector>& w0, const SolverOptions& opts) {
  return nr_mode(datamodels::FamilyModel(family, data), x, sigma, w0, opts);
}

Evaluation laplace_loglik(const datamodels::DataModel& model, const Matrix& x,
                          const covariance::CovMatrix& sigma, Mode mode,
                          const std::optional<Vector>& warm_start, const SolverOptions& opts) {
  Vector w0;
  if (warm_start && warm_start->size() == model.size() && warm_start->allFinite()) {
    w0 = *warm_start;
  } else if (const auto* fm = dynamic_cast<const datamodels::FamilyModel*>(&model)) {
    w0 = datamodels::initial_w(fm->family(), fm->data());
  } else {
    w0 = Vector::Zero(model.size());
  }
  Evaluation ev{{}, nr_mode(model, x, sigma, w0, opts)};
  auto& val = ev.value;
  val.data_term = model.log_density(ev.mode.a);
  val.gaussian_term = gaussian_loglik(ev.mode.a, x, sigma, mode);
  val.logdet_term = ev.mode.logdet_negH;
  val.loglik = val.data_term + val.gaussian_term - 0.5 * val.logdet_term;
  if (!std::isfinite(val.loglik)) throw NumericalError("laplace_loglik: objective is not finite");
  return ev;
}

Evaluation laplace_loglik(const datamodels::DataVector& data, const datamodels::Family& family,
                          const Matrix& x, const covariance::CovarianceSpec& spec,
                          std::span<const double> theta, Mode mode,
                          const std::optional<Vector>& warm_start, const SolverOptions& opts) {
  const auto sigma = covariance::build_sigma(spec, theta, opts.jitter);
  return laplace_loglik(datamodels::FamilyModel(family, data), x, sigma, mode, warm_start, opts);
}

}  // namespace hglmm::laplace

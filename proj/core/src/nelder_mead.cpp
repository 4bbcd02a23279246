#include "hglmm/nelder_mead.hpp"

#include "hglmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hglmm::optim {

namespace {

double sanitize(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::infinity(); }

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                             const NelderMeadOptions& opts) {
  const Index d = x0.size();
  NelderMeadResult out;
  struct Exhausted {};
  double best = std::numeric_limits<double>::infinity();
  Vector best_x = x0;
  auto eval = [&](const Vector& x) {
    if (out.evaluations >= std::max(1, opts.max_evals)) throw Exhausted{};
    const double v = sanitize(f(x));
    ++out.evaluations;
    if (v < best || out.evaluations == 1) {
      best = v;
      best_x = x;
    }
    out.best_trace.push_back(best);
    return v;
  };

  if (d == 0) {
    out.x = x0;
    out.f = eval(x0);
    out.converged = true;
    return out;
  }

  std::vector<Vector> pts;
  std::vector<double> vals;
  try {
    pts.push_back(x0);
    vals.push_back(eval(x0));
    for (Index i = 0; i < d; ++i) {
      Vector p = x0;
      p(i) += opts.initial_step;
      pts.push_back(p);
      vals.push_back(eval(p));
    }

    std::vector<std::size_t> order(pts.size());
    auto sort_simplex = [&] {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
      std::vector<Vector> p2;
      std::vector<double> v2;
      for (auto k : order) {
        p2.push_back(pts[k]);
        v2.push_back(vals[k]);
      }
      pts = std::move(p2);
      vals = std::move(v2);
    };

    while (true) {
      sort_simplex();
      const double spread = vals.back() - vals.front();
      double diam = 0.0;
      for (std::size_t k = 1; k < pts.size(); ++k) {
        diam = std::max(diam, (pts[k] - pts[0]).cwiseAbs().maxCoeff());
      }
      const bool flat = spread <= opts.f_tol * (std::abs(vals.front()) + opts.f_tol);
      const bool small = spread <= opts.f_abs && diam <= opts.x_tol;
      const bool collapsed = diam <= opts.x_collapse;
      if (std::isfinite(vals.front()) && (flat || small || collapsed)) {
        out.converged = true;
        break;
      }
      if (out.evaluations >= opts.max_evals) break;
      ++out.iterations;

      Vector centroid = Vector::Zero(d);
      for (Index k = 0; k < d; ++k) centroid += pts[static_cast<std::size_t>(k)];
      centroid /= static_cast<double>(d);
      const Vector& worst = pts.back();
      const double f_worst = vals.back();
      const double f_second = vals[vals.size() - 2];

      const Vector xr = centroid + (centroid - worst);
      const double fr = eval(xr);
      if (fr < vals.front()) {
        const Vector xe = centroid + 2.0 * (centroid - worst);
        const double fe = eval(xe);
        if (fe < fr) {
          pts.back() = xe;
          vals.back() = fe;
        } else {
          pts.back() = xr;
          vals.back() = fr;
        }
        continue;
      }
      if (fr < f_second) {
        pts.back() = xr;
        vals.back() = fr;
        continue;
      }
      if (fr < f_worst) {
        const Vector xc = centroid + 0.5 * (xr - centroid);
        const double fc = eval(xc);
        if (fc <= fr) {
          pts.back() = xc;
          vals.back() = fc;
          continue;
        }
      } else {
        const Vector xc = centroid + 0.5 * (worst - centroid);
        const double fc = eval(xc);
        if (fc < f_worst) {
          pts.back() = xc;
          vals.back() = fc;
          continue;
        }
      }
      for (std::size_t k = 1; k < pts.size(); ++k) {
        pts[k] = pts[0] + 0.5 * (pts[k] - pts[0]);
        vals[k] = eval(pts[k]);
      }
    }
  } catch (const Exhausted&) {
    out.converged = false;
  }
  out.x = best_x;
  out.f = best;
  return out;
}

}  // namespace hglmm::optim

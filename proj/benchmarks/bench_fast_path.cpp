// Dense against block-diagonal/Woodbury evaluation of the Laplace objective
// for site x year panels (AR1 within site plus a site random intercept).

#include "hglmm/covariance.hpp"
#include "hglmm/datamodels.hpp"
#include "hglmm/laplace.hpp"
#include "hglmm/linalg.hpp"
#include "hglmm/simulate.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

using namespace hglmm;

namespace {

struct Panel {
  covariance::CovMatrix blocked;
  covariance::CovMatrix dense;
  Matrix x;
  datamodels::DataVector data;
};

Panel make_panel(int sites, int years) {
  std::vector<int> site, year;
  for (int s = 0; s < sites; ++s)
    for (int t = 0; t < years; ++t) {
      site.push_back(s);
      year.push_back(t);
    }
  const Index n = static_cast<Index>(site.size());
  const covariance::CovarianceSpec spec({covariance::CovComponent::random_intercept(site),
                                         covariance::CovComponent::ar1(year, site)});
  Panel p;
  p.blocked = covariance::build_sigma(spec, std::vector<double>{0.4, 0.3, 0.6});
  p.dense = covariance::make_cov_matrix(p.blocked.dense);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z(0.0, 1.0);
  p.x = Matrix::Ones(n, 2);
  for (Index i = 0; i < n; ++i) p.x(i, 1) = z(rng);
  const datamodels::Family fam{datamodels::FamilyKind::poisson};
  p.data = datamodels::sample(fam, simulate::sim_mvn(Vector::Constant(n, 1.0), p.blocked, rng), rng);
  return p;
}

void run_laplace(benchmark::State& state, bool blocked) {
  const auto p = make_panel(static_cast<int>(state.range(0)), 6);
  const datamodels::FamilyModel model({datamodels::FamilyKind::poisson}, p.data);
  laplace::SolverOptions opts;
  opts.keep_hessian = false;
  for (auto _ : state) {
    auto ev = laplace::laplace_loglik(model, p.x, blocked ? p.blocked : p.dense, laplace::Mode::reml,
                                      std::nullopt, opts);
    benchmark::DoNotOptimize(ev.value.loglik);
  }
  state.counters["n"] = static_cast<double>(p.x.rows());
}

void BM_LaplaceDense(benchmark::State& state) { run_laplace(state, false); }
void BM_LaplaceBlocked(benchmark::State& state) { run_laplace(state, true); }

void run_neg_hessian(benchmark::State& state, bool woodbury) {
  const auto p = make_panel(static_cast<int>(state.range(0)), 6);
  const Index n = p.x.rows();
  const Vector curvature = Vector::Constant(n, -1.5);
  const Matrix proj = woodbury ? Matrix() : laplace::projection_P(p.dense, p.x);
  const Vector b = Vector::Ones(n);
  for (auto _ : state) {
    const auto h = woodbury ? linalg::smw_apply(curvature, p.blocked.factor, p.x)
                            : linalg::NegHessian::dense(curvature, proj);
    benchmark::DoNotOptimize(h.solve(b));
  }
}

void BM_NegHessianDense(benchmark::State& state) { run_neg_hessian(state, false); }
void BM_NegHessianWoodbury(benchmark::State& state) { run_neg_hessian(state, true); }

void BM_SigmaFactor(benchmark::State& state) {
  const auto p = make_panel(static_cast<int>(state.range(0)), 6);
  const bool blocked = state.range(1) != 0;
  for (auto _ : state) {
    auto f = blocked ? linalg::FactoredMatrix::blocked(p.blocked.dense, *p.blocked.structure)
                     : linalg::FactoredMatrix::dense(p.blocked.dense);
    benchmark::DoNotOptimize(f.logdet());
  }
}

}  // namespace

BENCHMARK(BM_LaplaceDense)->Arg(20)->Arg(74)->Arg(150)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LaplaceBlocked)->Arg(20)->Arg(74)->Arg(150)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NegHessianDense)->Arg(74)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NegHessianWoodbury)->Arg(74)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SigmaFactor)->Args({74, 0})->Args({74, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

#include "hglmm/linalg.hpp"

#include "hglmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace hglmm::linalg {

namespace {

struct Factorized {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

Factorized factor_with_jitter(const Matrix& a, const JitterPolicy& policy) {
  if (a.rows() != a.cols()) {
    throw DimensionError("cholesky: matrix is " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + ", expected square");
  }
  Factorized out;
  out.llt.compute(a);
  if (out.llt.info() == Eigen::Success && a.allFinite()) {
    return out;
  }
  const double mean_diag = a.rows() > 0 ? a.diagonal().mean() : 0.0;
  double scale = policy.base;
  for (int attempt = 0; attempt < policy.retries; ++attempt, scale *= policy.escalation) {
    const double add = scale * std::abs(mean_diag);
    Matrix shifted = a;
    shifted.diagonal().array() += add;
    out.llt.compute(shifted);
    if (out.llt.info() == Eigen::Success) {
      out.jitter = add;
      return out;
    }
  }
  throw NumericalError("cholesky: matrix of order " + std::to_string(a.rows()) +
                       " is not positive definite after jitter");
}

double llt_logdet(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

// Partition -----------------------------------------------------------------

Partition Partition::from_labels(const std::vector<int>& labels) {
  Partition p;
  p.n_ = static_cast<Index>(labels.size());
  std::vector<int> order_of_label;
  std::vector<int> seen;
  for (Index i = 0; i < p.n_; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    auto it = std::find(seen.begin(), seen.end(), label);
    if (it == seen.end()) {
      seen.push_back(label);
      p.groups_.push_back({i});
    } else {
      p.groups_[static_cast<std::size_t>(it - seen.begin())].push_back(i);
    }
  }
  return p;
}

Partition Partition::whole(Index n) {
  Partition p;
  p.n_ = n;
  if (n > 0) {
    p.groups_.emplace_back(static_cast<std::size_t>(n));
    std::iota(p.groups_.front().begin(), p.groups_.front().end(), Index{0});
  }
  return p;
}

Partition Partition::singletons(Index n) {
  Partition p;
  p.n_ = n;
  for (Index i = 0; i < n; ++i) p.groups_.push_back({i});
  return p;
}

Partition Partition::join(const std::vector<Partition>& parts) {
  if (parts.empty()) return {};
  const Index n = parts.front().size();
  std::vector<Index> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index i) {
    while (parent[static_cast<std::size_t>(i)] != i) {
      auto& pi = parent[static_cast<std::size_t>(i)];
      pi = parent[static_cast<std::size_t>(pi)];
      i = pi;
    }
    return i;
  };
  for (const auto& part : parts) {
    if (part.size() != n) throw DimensionError("partition join: sizes differ");
    for (const auto& g : part.groups_) {
      for (std::size_t k = 1; k < g.size(); ++k) {
        const Index a = find(g[0]);
        const Index b = find(g[k]);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
      }
    }
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(find(i));
  return from_labels(labels);
}

bool Partition::is_block_diagonal(const Matrix& a, double tol) const {
  if (a.rows() != n_ || a.cols() != n_) return false;
  std::vector<std::size_t> owner(static_cast<std::size_t>(n_));
  for (std::size_t b = 0; b < groups_.size(); ++b) {
    for (Index i : groups_[b]) owner[static_cast<std::size_t>(i)] = b;
  }
  for (Index j = 0; j < n_; ++j) {
    for (Index i = 0; i < n_; ++i) {
      if (owner[static_cast<std::size_t>(i)] != owner[static_cast<std::size_t>(j)] &&
          std::abs(a(i, j)) > tol) {
        return false;
      }
    }
  }
  return true;
}

Matrix Partition::extract(const Matrix& a, std::size_t b) const {
  const auto& g = groups_[b];
  const auto m = static_cast<Index>(g.size());
  Matrix out(m, m);
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < m; ++i) {
      out(i, j) = a(g[static_cast<std::size_t>(i)], g[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

Vector Partition::gather(const Eigen::Ref<const Vector>& x, std::size_t b) const {
  const auto& g = groups_[b];
  Vector out(static_cast<Index>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) out(static_cast<Index>(i)) = x(g[i]);
  return out;
}

// FactoredMatrix ------------------------------------------------------------

FactoredMatrix FactoredMatrix::dense(const Matrix& a, const JitterPolicy& policy) {
  FactoredMatrix f;
  auto fac = factor_with_jitter(a, policy);
  f.n_ = a.rows();
  f.logdet_ = llt_logdet(fac.llt);
  f.jitter_ = fac.jitter;
  f.factors_.push_back(std::move(fac.llt));
  return f;
}

FactoredMatrix FactoredMatrix::blocked(const Matrix& a, Partition partition,
                                       const JitterPolicy& policy) {
  if (a.rows() != partition.size() || a.cols() != partition.size()) {
    throw DimensionError("blocked factor: matrix does not match partition size");
  }
  if (!partition.is_block_diagonal(a)) {
    throw DomainError("blocked factor: matrix has entries linking different blocks");
  }
  std::vector<Matrix> blocks;
  blocks.reserve(partition.block_count());
  for (std::size_t b = 0; b < partition.block_count(); ++b) {
    blocks.push_back(partition.extract(a, b));
  }
  return blocked(std::move(partition), blocks, policy);
}

FactoredMatrix FactoredMatrix::blocked(Partition partition, const std::vector<Matrix>& blocks,
                                       const JitterPolicy& policy) {
  if (blocks.size() != partition.block_count()) {
    throw DimensionError("blocked factor: block count does not match partition");
  }
  FactoredMatrix f;
  f.n_ = partition.size();
  f.factors_.reserve(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].rows() != static_cast<Index>(partition.block(b).size())) {
      throw DimensionError("blocked factor: block " + std::to_string(b) + " has wrong order");
    }
    Factorized fac;
    try {
      fac = factor_with_jitter(blocks[b], policy);
    } catch (const NumericalError&) {
      throw NumericalError("blocked factor: block " + std::to_string(b) +
                           " is not positive definite");
    }
    f.logdet_ += llt_logdet(fac.llt);
    f.jitter_ += fac.jitter;
    f.factors_.push_back(std::move(fac.llt));
  }
  f.partition_ = std::move(partition);
  return f;
}

Matrix FactoredMatrix::solve_matrix(const Eigen::Ref<const Matrix>& b) const {
  if (b.rows() != n_) throw DimensionError("solve: right-hand side has wrong row count");
  if (!partition_) return factors_.front().solve(b);
  Matrix out(b.rows(), b.cols());
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    const auto& g = partition_->block(k);
    const auto m = static_cast<Index>(g.size());
    Matrix local(m, b.cols());
    for (Index i = 0; i < m; ++i) local.row(i) = b.row(g[static_cast<std::size_t>(i)]);
    local = factors_[k].solve(local);
    for (Index i = 0; i < m; ++i) out.row(g[static_cast<std::size_t>(i)]) = local.row(i);
  }
  return out;
}

Matrix FactoredMatrix::inverse() const {
  return solve_matrix(Matrix::Identity(n_, n_));
}

double FactoredMatrix::quad_inverse(const Eigen::Ref<const Vector>& x) const {
  if (!partition_) {
    const Vector z = factors_.front().matrixL().solve(x);
    return z.squaredNorm();
  }
  double total = 0.0;
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    const Vector local = partition_->gather(x, k);
    total += factors_[k].matrixL().solve(local).squaredNorm();
  }
  return total;
}

Vector FactoredMatrix::lower_times(const Eigen::Ref<const Vector>& z) const {
  if (z.size() != n_) throw DimensionError("lower_times: vector length does not match");
  if (!partition_) return factors_.front().matrixL() * z;
  Vector out(n_);
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    const Vector local = factors_[k].matrixL() * partition_->gather(z, k);
    const auto& idx = partition_->block(k);
    for (std::size_t i = 0; i < idx.size(); ++i) out(idx[i]) = local(static_cast<Index>(i));
  }
  return out;
}

Matrix FactoredMatrix::factor_inverse(std::size_t b) const {
  const auto m = factors_[b].rows();
  return factors_[b].solve(Matrix::Identity(m, m));
}

FactoredMatrix chol_logdet(const Matrix& a, const JitterPolicy& policy) {
  return FactoredMatrix::dense(a, policy);
}

Vector block_solve(const Partition& partition, const std::vector<Matrix>& blocks,
                   const Eigen::Ref<const Vector>& b) {
  if (blocks.size() != partition.block_count() || b.size() != partition.size()) {
    throw DimensionError("block_solve: partition, blocks and rhs do not conform");
  }
  Vector x(b.size());
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& g = partition.block(k);
    if (blocks[k].rows() != static_cast<Index>(g.size()) || blocks[k].cols() != blocks[k].rows()) {
      throw DimensionError("block_solve: block " + std::to_string(k) + " has wrong shape");
    }
    Eigen::FullPivLU<Matrix> lu(blocks[k]);
    if (!lu.isInvertible()) {
      throw NumericalError("block_solve: block " + std::to_string(k) + " is singular");
    }
    const Vector local = lu.solve(partition.gather(b, k));
    for (std::size_t i = 0; i < g.size(); ++i) x(g[i]) = local(static_cast<Index>(i));
  }
  return x;
}

// NegHessian ----------------------------------------------------------------

NegHessian NegHessian::dense(const Eigen::Ref<const Vector>& curvature, const Matrix& projection,
                             const JitterPolicy& policy) {
  if (projection.rows() != curvature.size() || projection.cols() != curvature.size()) {
    throw DimensionError("neg-hessian: projection and curvature sizes differ");
  }
  Matrix neg_h = projection;
  neg_h.diagonal() -= curvature;
  auto factor = FactoredMatrix::dense(neg_h, policy);
  const double logdet = factor.logdet();
  return NegHessian(std::move(factor), curvature.size(), logdet);
}

NegHessian NegHessian::woodbury(const Eigen::Ref<const Vector>& curvature,
                                const FactoredMatrix& sigma, const Matrix& x,
                                const JitterPolicy& policy) {
  const Index n = sigma.size();
  if (curvature.size() != n || x.rows() != n) {
    throw DimensionError("woodbury: curvature, covariance and design do not conform");
  }

  // inner = S^{-1} - D, factored with the same structure as S.
  std::optional<FactoredMatrix> inner;
  if (sigma.is_blocked()) {
    const Partition& part = *sigma.partition();
    std::vector<Matrix> blocks;
    blocks.reserve(part.block_count());
    for (std::size_t b = 0; b < part.block_count(); ++b) {
      Matrix blk = sigma.factor_inverse(b);
      blk.diagonal() -= part.gather(curvature, b);
      blocks.push_back(std::move(blk));
    }
    inner = FactoredMatrix::blocked(part, blocks, policy);
  } else {
    Matrix full = sigma.inverse();
    full.diagonal() -= curvature;
    inner = FactoredMatrix::dense(full, policy);
  }

  WoodburyParts parts{std::move(*inner), sigma.solve(x), Matrix{}, {}};
  parts.inner_u = parts.inner.solve(parts.u);
  const Matrix gram = x.transpose() * parts.u;  // X^T S^{-1} X
  Eigen::LLT<Matrix> gram_llt(gram);
  if (gram_llt.info() != Eigen::Success) {
    throw NumericalError("woodbury: X^T S^{-1} X is singular");
  }
  Matrix core = gram - parts.u.transpose() * parts.inner_u;
  core = 0.5 * (core + core.transpose()).eval();
  parts.core.compute(core);
  if (parts.core.info() != Eigen::Success) {
    throw NumericalError("woodbury: inner p x p core is not positive definite");
  }
  const double logdet =
      parts.inner.logdet() + llt_logdet(parts.core) - llt_logdet(gram_llt);
  return NegHessian(std::move(parts), n, logdet);
}

Matrix NegHessian::solve_matrix(const Eigen::Ref<const Matrix>& b) const {
  if (b.rows() != n_) throw DimensionError("neg-hessian solve: wrong row count");
  if (const auto* f = std::get_if<FactoredMatrix>(&repr_)) return f->solve(b);
  const auto& w = std::get<WoodburyParts>(repr_);
  Matrix base = w.inner.solve(b);
  return base + w.inner_u * w.core.solve(w.u.transpose() * base);
}

Matrix NegHessian::inverse() const {
  return solve_matrix(Matrix::Identity(n_, n_));
}

NegHessian smw_apply(const Eigen::Ref<const Vector>& curvature, const FactoredMatrix& sigma,
                     const Matrix& x, const JitterPolicy& policy) {
  return NegHessian::woodbury(curvature, sigma, x, policy);
}

double asymmetry(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

}  // namespace hglmm::linalg

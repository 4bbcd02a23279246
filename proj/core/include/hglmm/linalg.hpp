#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

namespace hglmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace linalg {

/// Diagonal rescue applied when a Cholesky factorization fails: add
/// `base * mean(diag)` and retry, escalating by `escalation` each time.
struct JitterPolicy {
  double base = 1e-10;
  int retries = 3;
  double escalation = 10.0;
};

/// A block-diagonal partition of {0, ..., n-1} into index groups. Indices
/// inside a group are kept sorted; groups are ordered by their first index.
class Partition {
 public:
  Partition() = default;

  /// Builds the partition from one block label per index.
  static Partition from_labels(const std::vector<int>& labels);

  /// A single group holding every index.
  static Partition whole(Index n);

  /// Each index in its own group.
  static Partition singletons(Index n);

  /// The finest partition under which every input is block-diagonal, i.e.
  /// indices sharing a group in any input end up in the same group.
  static Partition join(const std::vector<Partition>& parts);

  Index size() const noexcept { return n_; }
  std::size_t block_count() const noexcept { return groups_.size(); }
  const std::vector<Index>& block(std::size_t b) const { return groups_[b]; }
  const std::vector<std::vector<Index>>& blocks() const noexcept { return groups_; }

  /// True when `a` has no entries (beyond `tol` in magnitude) linking two groups.
  bool is_block_diagonal(const Matrix& a, double tol = 0.0) const;

  Matrix extract(const Matrix& a, std::size_t b) const;
  Vector gather(const Eigen::Ref<const Vector>& x, std::size_t b) const;

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  Index n_ = 0;
  std::vector<std::vector<Index>> groups_;
};

/// Cholesky factor of a symmetric positive-definite matrix, either dense or
/// as independent block factors over a Partition. Immutable once built.
class FactoredMatrix {
 public:
  static FactoredMatrix dense(const Matrix& a, const JitterPolicy& policy = {});
  static FactoredMatrix blocked(const Matrix& a, Partition partition,
                                const JitterPolicy& policy = {});
  static FactoredMatrix blocked(Partition partition, const std::vector<Matrix>& blocks,
                                const JitterPolicy& policy = {});

  Index size() const noexcept { return n_; }
  double logdet() const noexcept { return logdet_; }
  /// Total diagonal jitter added across all factorizations (0 when none).
  double jitter() const noexcept { return jitter_; }
  bool is_blocked() const noexcept { return partition_.has_value(); }
  const std::optional<Partition>& partition() const noexcept { return partition_; }

  Matrix solve_matrix(const Eigen::Ref<const Matrix>& b) const;
  /// A^{-1} b, returning a vector for vector arguments.
  template <class Derived>
  typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& b) const {
    return solve_matrix(b.derived().eval());
  }
  Matrix inverse() const;
  /// x^T A^{-1} x.
  double quad_inverse(const Eigen::Ref<const Vector>& x) const;
  /// L z for the lower Cholesky factor L (blockwise when blocked).
  Vector lower_times(const Eigen::Ref<const Vector>& z) const;

  /// Number of independent factors (1 when dense).
  std::size_t factor_count() const noexcept { return factors_.size(); }
  /// Inverse of the matrix restricted to factor `b`, in the index order of
  /// the corresponding partition group.
  Matrix factor_inverse(std::size_t b) const;

 private:
  using Llt = Eigen::LLT<Matrix>;

  Index n_ = 0;
  double logdet_ = 0.0;
  double jitter_ = 0.0;
  std::optional<Partition> partition_;
  std::vector<Llt> factors_;
};

/// Dense Cholesky with log-determinant, applying the jitter policy.
FactoredMatrix chol_logdet(const Matrix& a, const JitterPolicy& policy = {});

/// Solves the block-diagonal system given by `blocks` over `partition`.
/// Throws NumericalError naming the first singular block.
Vector block_solve(const Partition& partition, const std::vector<Matrix>& blocks,
                   const Eigen::Ref<const Vector>& b);

/// The negated Laplace Hessian -H = P - D, where D is the diagonal data
/// curvature (negative) and P the projection of the latent Gaussian model.
/// Offers solves against -H and log|-H| through either a dense Cholesky or the
/// Woodbury form -H = (S^{-1} - D) - S^{-1}X (X^T S^{-1} X)^{-1} X^T S^{-1}.
class NegHessian {
 public:
  /// Forms -H = P - diag(curvature) densely and factors it.
  static NegHessian dense(const Eigen::Ref<const Vector>& curvature, const Matrix& projection,
                          const JitterPolicy& policy = {});

  /// Woodbury form. When `sigma` is blocked, S^{-1} - D is factored block by
  /// block and no dense n x n inverse is built.
  static NegHessian woodbury(const Eigen::Ref<const Vector>& curvature,
                             const FactoredMatrix& sigma, const Matrix& x,
                             const JitterPolicy& policy = {});

  Index size() const noexcept { return n_; }
  double logdet() const noexcept { return logdet_; }
  bool is_woodbury() const noexcept { return std::holds_alternative<WoodburyParts>(repr_); }

  Matrix solve_matrix(const Eigen::Ref<const Matrix>& b) const;
  /// A^{-1} b, returning a vector for vector arguments.
  template <class Derived>
  typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& b) const {
    return solve_matrix(b.derived().eval());
  }
  /// Dense (-H)^{-1}; for diagnostics and small problems.
  Matrix inverse() const;

 private:
  struct WoodburyParts {
    FactoredMatrix inner;  // S^{-1} - D
    Matrix u;              // S^{-1} X
    Matrix inner_u;        // (S^{-1} - D)^{-1} S^{-1} X
    Eigen::LLT<Matrix> core;  // X^T S^{-1} X - U^T (S^{-1} - D)^{-1} U
  };

  Index n_ = 0;
  double logdet_ = 0.0;
  std::variant<FactoredMatrix, WoodburyParts> repr_;

  explicit NegHessian(std::variant<FactoredMatrix, WoodburyParts> repr, Index n, double logdet)
      : n_(n), logdet_(logdet), repr_(std::move(repr)) {}
};

/// Woodbury-form operator for (-H)^{-1} and log|-H|.
NegHessian smw_apply(const Eigen::Ref<const Vector>& curvature, const FactoredMatrix& sigma,
                     const Matrix& x, const JitterPolicy& policy = {});

/// Relative symmetry defect max|A - A^T| / max(1, max|A|).
double asymmetry(const Matrix& a);

}  // namespace linalg
}  // namespace hglmm

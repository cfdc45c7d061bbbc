#pragma once

#include <Eigen/Dense>

namespace lrtl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thin singular value decomposition A = U diag(sigma) V^T with q = min(m, n).
///
/// Singular values are sorted in descending order. Columns are sign-normalised
/// so that the first entry of each U column with magnitude above 1e-10 is
/// positive (the paired V column is flipped with it), which makes the factors
/// a deterministic function of A.
struct SvdFactors {
  Matrix U;      // m x q
  Vector sigma;  // q, descending, >= 0
  Matrix V;      // n x q

  [[nodiscard]] Index rank_bound() const noexcept { return sigma.size(); }
};

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
struct SymEig {
  Vector values;
  Matrix vectors;  // column i pairs with values(i)
};

/// Throws InvalidInput when any entry is NaN or infinite.
void require_finite(const Matrix& a, const char* what);

SvdFactors svd(const Matrix& a);

/// Singular values only, descending.
Vector singular_values(const Matrix& a);

/// Best rank-r approximation floor(U)_r floor(Sigma)_r floor(V)_r^T.
/// r = 0 yields the zero matrix; r > q throws RangeError.
Matrix truncate(const SvdFactors& f, Index r);

/// Least-squares solution of E theta ~ F via ridge-regularised normal
/// equations with eps = 1e-8 trace(E^T E) / p. Well defined for rank-deficient E.
Matrix lstsq(const Matrix& e, const Matrix& f);

SymEig sym_eig(const Matrix& s);

/// Sum of singular values sigma_r + ... + sigma_q (1-based, r included).
double tail_singular_sum(const Matrix& a, Index r);
double tail_singular_sum(const SvdFactors& f, Index r);

/// Gradient of tail_singular_sum: sum_{i=r}^{q} u_i v_i^T. Terms for
/// vanishing singular values are kept, giving a valid subgradient.
Matrix tail_singular_grad(const Matrix& a, Index r);
Matrix tail_singular_grad(const SvdFactors& f, Index r);

}  // namespace lrtl

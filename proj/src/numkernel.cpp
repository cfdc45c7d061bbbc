#include "lrtl/numkernel.hpp"

#include <string>

#include "lrtl/errors.hpp"

namespace lrtl {

namespace {

constexpr double kSignThreshold = 1e-10;

void normalise_signs(Matrix& u, Matrix* v) {
  for (Index j = 0; j < u.cols(); ++j) {
    for (Index i = 0; i < u.rows(); ++i) {
      const double x = u(i, j);
      if (std::abs(x) > kSignThreshold) {
        if (x < 0) {
          u.col(j) = -u.col(j);
          if (v != nullptr) v->col(j) = -v->col(j);
        }
        break;
      }
    }
  }
}

void require_rank_index(Index r, Index q, const char* what) {
  if (r < 1 || r > q) {
    throw RangeError(std::string(what) + ": rank index " + std::to_string(r) +
                     " outside [1, " + std::to_string(q) + "]");
  }
}

}  // namespace

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) {
    throw InvalidInput(std::string(what) + ": non-finite entry");
  }
}

SvdFactors svd(const Matrix& a) {
  require_finite(a, "svd");
  if (a.rows() == 0 || a.cols() == 0) throw InvalidInput("svd: empty matrix");

  Eigen::JacobiSVD<Matrix> dec(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdFactors f{dec.matrixU(), dec.singularValues(), dec.matrixV()};
  normalise_signs(f.U, &f.V);
  return f;
}

Vector singular_values(const Matrix& a) {
  require_finite(a, "singular_values");
  if (a.rows() == 0 || a.cols() == 0) throw InvalidInput("singular_values: empty matrix");
  return Eigen::JacobiSVD<Matrix>(a).singularValues();
}

Matrix truncate(const SvdFactors& f, Index r) {
  const Index q = f.sigma.size();
  if (r < 0 || r > q) {
    throw RangeError("truncate: rank " + std::to_string(r) + " outside [0, " +
                     std::to_string(q) + "]");
  }
  if (r == 0) return Matrix::Zero(f.U.rows(), f.V.rows());
  return f.U.leftCols(r) * f.sigma.head(r).asDiagonal() * f.V.leftCols(r).transpose();
}

Matrix lstsq(const Matrix& e, const Matrix& f) {
  require_finite(e, "lstsq");
  require_finite(f, "lstsq");
  if (e.rows() < 1 || e.rows() != f.rows()) {
    throw InvalidInput("lstsq: design has " + std::to_string(e.rows()) +
                       " rows, target has " + std::to_string(f.rows()));
  }
  const Index p = e.cols();
  Matrix gram = e.transpose() * e;
  const double trace = gram.trace();
  if (!(trace > 0.0)) return Matrix::Zero(p, f.cols());

  Matrix reg = gram;
  reg.diagonal().array() += 1e-8 * trace / static_cast<double>(p);
  const Matrix rhs = e.transpose() * f;
  // Iterated refinement removes the ridge bias in well-determined directions.
  Eigen::LLT<Matrix> llt(reg);
  if (llt.info() != Eigen::Success) return reg.ldlt().solve(rhs);
  Matrix theta = llt.solve(rhs);
  for (int it = 0; it < 3; ++it) theta += llt.solve(rhs - gram * theta);
  return theta;
}

SymEig sym_eig(const Matrix& s) {
  require_finite(s, "sym_eig");
  if (s.rows() != s.cols()) throw InvalidInput("sym_eig: matrix is not square");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidInput("sym_eig: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  SymEig out{es.eigenvalues(), es.eigenvectors()};
  normalise_signs(out.vectors, nullptr);
  return out;
}

double tail_singular_sum(const SvdFactors& f, Index r) {
  const Index q = f.sigma.size();
  require_rank_index(r, q, "tail_singular_sum");
  return f.sigma.tail(q - r + 1).sum();
}

double tail_singular_sum(const Matrix& a, Index r) {
  return tail_singular_sum(svd(a), r);
}

Matrix tail_singular_grad(const SvdFactors& f, Index r) {
  const Index q = f.sigma.size();
  require_rank_index(r, q, "tail_singular_grad");
  const Index k = q - r + 1;
  return f.U.rightCols(k) * f.V.rightCols(k).transpose();
}

Matrix tail_singular_grad(const Matrix& a, Index r) {
  return tail_singular_grad(svd(a), r);
}

}  // namespace lrtl

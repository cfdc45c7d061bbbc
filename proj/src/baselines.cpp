#include "lrtl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "lrtl/errors.hpp"
#include "lrtl/metrics.hpp"
#include "lrtl/rng.hpp"

namespace lrtl {

namespace {

double assign(const Matrix& data, const Matrix& centers, std::vector<int>& labels) {
  double total = 0.0;
  for (Index n = 0; n < data.rows(); ++n) {
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < centers.rows(); ++c) {
      const double dist = (data.row(n) - centers.row(c)).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    labels[static_cast<std::size_t>(n)] = static_cast<int>(best);
    total += best_d;
  }
  return total;
}

double objective(const Matrix& data, const Matrix& centers, const std::vector<int>& labels) {
  double total = 0.0;
  for (Index n = 0; n < data.rows(); ++n) total += (data.row(n) - centers.row(labels[static_cast<std::size_t>(n)])).squaredNorm();
  return total;
}

Matrix plus_plus_seeds(const Matrix& data, Index k, Rng& rng) {
  const Index n = data.rows();
  Matrix centers(k, data.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centers.row(0) = data.row(first(rng));
  Vector d2(n);
  for (Index i = 0; i < n; ++i) d2(i) = (data.row(i) - centers.row(0)).squaredNorm();
  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        target -= d2(pick);
        if (target < 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    centers.row(c) = data.row(pick);
    for (Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (data.row(i) - centers.row(c)).squaredNorm());
  }
  return centers;
}

}  // namespace

KMeansResult lloyd(const Matrix& data, Matrix centers, Index max_iter) {
  KMeansResult out;
  out.labels.assign(static_cast<std::size_t>(data.rows()), -1);
  std::vector<int> next(out.labels.size());
  for (Index it = 0; it < max_iter; ++it) {
    assign(data, centers, next);
    const bool stable = next == out.labels;
    out.labels = next;
    if (stable) break;
    Matrix sums = Matrix::Zero(centers.rows(), centers.cols());
    Vector counts = Vector::Zero(centers.rows());
    for (Index n = 0; n < data.rows(); ++n) {
      sums.row(out.labels[static_cast<std::size_t>(n)]) += data.row(n);
      counts(out.labels[static_cast<std::size_t>(n)]) += 1.0;
    }
    for (Index c = 0; c < centers.rows(); ++c) {
      if (counts(c) > 0.0) centers.row(c) = sums.row(c) / counts(c);
    }
    out.history.push_back(objective(data, centers, out.labels));
    out.iterations = it + 1;
  }
  out.centers = std::move(centers);
  out.wcss = objective(data, out.centers, out.labels);
  return out;
}

KMeansResult kmeans(const Matrix& data, Index k, Index restarts, std::uint64_t seed) {
  if (k < 1) throw InvalidInput("kmeans: k must be at least 1");
  if (k > data.rows()) {
    throw InvalidInput("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(data.rows()) + " points");
  }
  if (!data.allFinite()) throw InvalidInput("kmeans: data has non-finite entries");
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (Index r = 0; r < std::max<Index>(restarts, 1); ++r) {
    Rng rng = make_rng(seed, 4, static_cast<std::uint64_t>(r));
    KMeansResult run = lloyd(data, plus_plus_seeds(data, k, rng));
    if (run.wcss < best.wcss) best = std::move(run);
  }
  return best;
}

Matrix trajectory_offsets(const TrajectoryMatrix& p) {
  Matrix out = p.positions.transpose();
  for (Index t = 0; t < p.frames(); ++t) {
    out.col(2 * t) -= p.positions.row(0).transpose();
    out.col(2 * t + 1) -= p.positions.row(1).transpose();
  }
  return out;
}

namespace {

Matrix soft_threshold(const Matrix& x, double tau) {
  return x.unaryExpr([tau](double v) { return std::copysign(std::max(std::abs(v) - tau, 0.0), v); });
}

Matrix unit_columns(const Matrix& d) {
  Matrix out = d;
  for (Index j = 0; j < out.cols(); ++j) {
    const double n = out.col(j).norm();
    if (n > 0.0) out.col(j) /= n;
  }
  return out;
}

void require_data(const Matrix& d, const char* who) {
  if (d.cols() < 2) throw InvalidInput(std::string(who) + ": need at least 2 columns");
  if (!d.allFinite()) throw InvalidInput(std::string(who) + ": data has non-finite entries");
}

}  // namespace

CoefficientMatrix ssc_admm(const Matrix& d, double alpha, Index max_iter, double tol) {
  require_data(d, "ssc_admm");
  const Index n = d.cols();
  const Matrix y = unit_columns(d);
  const Matrix gram = y.transpose() * y;
  Matrix off = gram.cwiseAbs();
  off.diagonal().setZero();
  const double mu = off.colwise().maxCoeff().minCoeff();
  if (!(mu > 0.0)) throw DegenerateInput("ssc_admm: a column is orthogonal to all others (mu = 0)");
  const double mu1 = alpha / mu;
  const double mu2 = alpha;

  Matrix sys = mu1 * gram;
  sys.diagonal().array() += mu2;
  const Eigen::LLT<Matrix> llt(sys);
  Matrix c = Matrix::Zero(n, n);
  Matrix lambda = Matrix::Zero(n, n);
  CoefficientMatrix out;
  out.method = "ssc";
  for (Index it = 0; it < max_iter; ++it) {
    Matrix z = llt.solve(mu1 * gram + mu2 * c - lambda);
    z.diagonal().setZero();
    Matrix c_next = soft_threshold(z + lambda / mu2, 1.0 / mu2);
    c_next.diagonal().setZero();
    lambda += mu2 * (z - c_next);
    const double change = (c_next - c).cwiseAbs().maxCoeff();
    out.residual = (z - c_next).cwiseAbs().maxCoeff();
    c = std::move(c_next);
    out.iterations = it + 1;
    if (change < tol) break;
  }
  out.C = std::move(c);
  return out;
}

CoefficientMatrix lrr(const Matrix& d, double lambda, double rho, Index max_iter, double tol) {
  require_data(d, "lrr");
  if (!(rho > 1.0)) throw InvalidInput("lrr: rho must exceed 1");
  // Restrict the dictionary to an orthonormal basis Q of the row space.
  const Eigen::JacobiSVD<Matrix> basis(d.transpose(), Eigen::ComputeThinU);
  const double s1 = basis.singularValues().size() > 0 ? basis.singularValues()(0) : 0.0;
  Index rank = 0;
  for (Index i = 0; i < basis.singularValues().size(); ++i) rank += basis.singularValues()(i) > 1e-10 * s1;
  if (rank == 0) throw DegenerateInput("lrr: data matrix is zero");
  const Matrix q = basis.matrixU().leftCols(rank);  // N x m
  const Matrix a = d * q;                           // dim x m
  const Index m = rank, n = d.cols();

  Matrix inv_sys = a.transpose() * a;
  inv_sys.diagonal().array() += 1.0;
  const Eigen::LLT<Matrix> llt(inv_sys);
  const Matrix atx = a.transpose() * d;

  Matrix j = Matrix::Zero(m, n), z = Matrix::Zero(m, n), e = Matrix::Zero(d.rows(), n);
  Matrix y1 = Matrix::Zero(d.rows(), n), y2 = Matrix::Zero(m, n);
  double mu = 1e-6;
  const double max_mu = 1e10;
  CoefficientMatrix out;
  out.method = "lrr";
  double previous = std::numeric_limits<double>::infinity();
  Index growth = 0;
  for (Index it = 0; it < max_iter; ++it) {
    const Eigen::JacobiSVD<Matrix> svt(z + y2 / mu, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector shrunk = (svt.singularValues().array() - 1.0 / mu).cwiseMax(0.0);
    j = svt.matrixU() * shrunk.asDiagonal() * svt.matrixV().transpose();

    z = llt.solve(atx - a.transpose() * e + j + (a.transpose() * y1 - y2) / mu);
    const Matrix xmaz = d - a * z;
    const Matrix target = xmaz + y1 / mu;
    const double thresh = lambda / mu;
    for (Index c = 0; c < n; ++c) {
      const double norm = target.col(c).norm();
      e.col(c) = (norm > thresh ? (norm - thresh) / norm : 0.0) * target.col(c);
    }
    const Matrix leq1 = xmaz - e;
    const Matrix leq2 = z - j;
    const double stop = std::max(leq1.cwiseAbs().maxCoeff(), leq2.cwiseAbs().maxCoeff());
    out.iterations = it + 1;
    out.residual = leq1.cwiseAbs().maxCoeff();
    if (!std::isfinite(stop)) throw SolverDiverged("lrr: non-finite residual at iteration " + std::to_string(it));
    if (stop < tol) break;
    growth = stop > previous ? growth + 1 : 0;
    if (growth >= 500) {
      throw SolverDiverged("lrr: constraint residual grew for 500 consecutive iterations (now " +
                           std::to_string(stop) + ")");
    }
    previous = stop;
    y1 += mu * leq1;
    y2 += mu * leq2;
    mu = std::min(max_mu, mu * rho);
  }
  out.C = q * z;
  out.E = std::move(e);
  return out;
}

Matrix affinity(const CoefficientMatrix& c) {
  if (c.C.rows() != c.C.cols()) throw InvalidInput("affinity: coefficient matrix is not square");
  Matrix w = c.C.cwiseAbs() + c.C.transpose().cwiseAbs();
  w.diagonal().setZero();
  return w;
}

std::vector<int> spectral_cluster(const Matrix& w, Index k, std::uint64_t seed, Index restarts) {
  const Index n = w.rows();
  if (w.cols() != n) throw InvalidInput("spectral_cluster: affinity is not square");
  if (k < 1) throw InvalidInput("spectral_cluster: k must be at least 1");
  if (k > n) throw InvalidInput("spectral_cluster: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
  if (k == 1) return std::vector<int>(static_cast<std::size_t>(n), 0);
  Vector deg = w.rowwise().sum();
  for (Index i = 0; i < n; ++i) {
    if (!(deg(i) > 0.0)) deg(i) = 1.0;
  }
  const Vector inv_sqrt = deg.cwiseSqrt().cwiseInverse();
  Matrix lap = -(inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal());
  lap.diagonal().array() += 1.0;
  lap = 0.5 * (lap + lap.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Matrix> es(lap);
  Matrix emb = es.eigenvectors().leftCols(k);
  for (Index i = 0; i < n; ++i) {
    const double norm = emb.row(i).norm();
    if (norm > 0.0) emb.row(i) /= norm;
  }
  return kmeans(emb, k, restarts, seed).labels;
}

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::kmeans: return "kmeans";
    case Baseline::ssc: return "ssc";
    case Baseline::lrr: return "lrr";
  }
  return "kmeans";
}

Baseline baseline_from_string(const std::string& name) {
  if (name == "kmeans") return Baseline::kmeans;
  if (name == "ssc") return Baseline::ssc;
  if (name == "lrr") return Baseline::lrr;
  throw ConfigError("unknown baseline '" + name + "' (expected kmeans, ssc or lrr)");
}

namespace {

// Per-method data computed once and reused across k.
struct Prepared {
  Baseline method;
  Matrix data;  // offsets for k-means, affinity otherwise
  Index restarts = 10;
};

Prepared prepare(Baseline method, const TrajectoryMatrix& p, const BaselineParams& params) {
  p.validate();
  if (params.restarts < 1) throw RangeError("baseline: restarts must be positive");
  switch (method) {
    case Baseline::kmeans: return {method, trajectory_offsets(p), params.restarts};
    case Baseline::ssc: return {method, affinity(ssc_admm(p.positions, params.ssc_alpha)), params.restarts};
    case Baseline::lrr: return {method, affinity(lrr(p.positions, params.lrr_lambda)), params.restarts};
  }
  return {method, {}, params.restarts};
}

std::vector<int> labels_for(const Prepared& prep, Index k, std::uint64_t seed) {
  if (prep.method == Baseline::kmeans) return kmeans(prep.data, k, prep.restarts, seed).labels;
  return spectral_cluster(prep.data, k, seed, prep.restarts);
}

}  // namespace

std::vector<int> run_baseline(Baseline method, const TrajectoryMatrix& p, Index k, std::uint64_t seed,
                              const BaselineParams& params) {
  return labels_for(prepare(method, p, params), k, seed);
}

BaselineRun best_over_k(Baseline method, const TrajectoryMatrix& p, Index k_min, Index k_max, std::uint64_t seed,
                        const BaselineParams& params) {
  if (!p.has_labels()) throw InvalidInput("best_over_k: trajectories carry no ground-truth labels");
  if (k_min < 1 || k_max < k_min) throw RangeError("best_over_k: need 1 <= k_min <= k_max");
  const Prepared prep = prepare(method, p, params);
  BaselineRun best;
  best.method = method;
  best.ari = -std::numeric_limits<double>::infinity();
  for (Index k = k_min; k <= std::min(k_max, p.points()); ++k) {
    auto labels = labels_for(prep, k, seed);
    const double score = ari(labels, p.labels);
    if (score > best.ari) {
      best.k = k;
      best.labels = std::move(labels);
      best.ari = score;
    }
  }
  return best;
}

}  // namespace lrtl

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrtl/trajectory.hpp"

namespace lrtl {

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;  // k x d
  double wcss = 0.0;
  Index iterations = 0;
  std::vector<double> history;  // objective after each Lloyd iteration
};

/// Lloyd iterations from the given centres until assignments stop changing or
/// max_iter is reached.
KMeansResult lloyd(const Matrix& data, Matrix centers, Index max_iter = 300);

/// k-means++ seeding, best of `restarts` Lloyd runs by within-cluster sum of
/// squares. Rows of `data` are points.
KMeansResult kmeans(const Matrix& data, Index k, Index restarts, std::uint64_t seed);

/// N x 2T offsets of every track from its position at frame 0.
Matrix trajectory_offsets(const TrajectoryMatrix& p);

struct CoefficientMatrix {
  Matrix C;  // N x N
  Matrix E;  // column-sparse error term (LRR only)
  std::string method;
  Index iterations = 0;
  double residual = 0.0;
};

/// Sparse subspace clustering by ADMM on
/// min ||C||_1 + lambda/2 ||D - DC||_F^2 s.t. diag(C) = 0.
CoefficientMatrix ssc_admm(const Matrix& d, double alpha = 100.0, Index max_iter = 200, double tol = 1e-4);

/// Low-rank representation by inexact ALM on
/// min ||C||_* + lambda ||E||_{2,1} s.t. D = DC + E.
CoefficientMatrix lrr(const Matrix& d, double lambda = 0.2, double rho = 1.01, Index max_iter = 10000,
                      double tol = 1e-7);

/// W = |C| + |C|^T with a zero diagonal.
Matrix affinity(const CoefficientMatrix& c);

/// Normalised spectral clustering on an affinity matrix.
std::vector<int> spectral_cluster(const Matrix& w, Index k, std::uint64_t seed, Index restarts = 10);

enum class Baseline { kmeans, ssc, lrr };

std::string to_string(Baseline b);
Baseline baseline_from_string(const std::string& name);

struct BaselineParams {
  double ssc_alpha = 100.0;
  double lrr_lambda = 0.2;
  Index restarts = 10;  // k-means restarts, also inside spectral clustering
};

struct BaselineRun {
  Baseline method = Baseline::kmeans;
  Index k = 0;
  std::vector<int> labels;
  double ari = 0.0;
};

/// Runs a baseline for every k in [k_min, k_max] and keeps the labelling with
/// the best ARI against the track labels (smallest k on ties).
BaselineRun best_over_k(Baseline method, const TrajectoryMatrix& p, Index k_min, Index k_max, std::uint64_t seed,
                        const BaselineParams& params = {});

/// Labels for a single k.
std::vector<int> run_baseline(Baseline method, const TrajectoryMatrix& p, Index k, std::uint64_t seed,
                              const BaselineParams& params = {});

}  // namespace lrtl

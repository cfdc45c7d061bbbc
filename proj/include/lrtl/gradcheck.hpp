#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lrtl/numkernel.hpp"

namespace lrtl {

struct GradcheckConfig {
  Index instances = 10;  // checked instances per loss
  Index frames = 8;
  Index points = 40;
  Index segments = 3;
  Index r = 5;
  Index height = 12;
  Index width = 12;
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Minimum singular-value gap at the tail boundary, relative to sigma_1.
  double min_gap = 1e-3;
  /// Adds one instance with a repeated singular value at the tail boundary.
  bool degenerate = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

struct GradcheckEntry {
  std::string loss;  // "lt" or "flow"
  Index instance = 0;
  double rel_error = 0.0;
  bool skipped = false;
  std::string warning;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_error_lt = 0.0;
  double max_error_flow = 0.0;
  Index checked_lt = 0;
  Index checked_flow = 0;
  Index skipped = 0;
  bool passed = false;
};

/// Central differences of f at x.
Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x, double h);

/// ||got - want|| / max(||got||, ||want||).
double relative_error(const Matrix& got, const Matrix& want);

/// Smallest gap among sigma_{r-1} - sigma_r and sigma_q over the soft-masked
/// groups P diag(a_k), relative to each group's sigma_1.
double tail_gap(const Matrix& weights, const Matrix& p, Index r);

/// Compares traj_loss_lt_grad and flow_loss_grad with finite differences on
/// seeded random instances. Instances with a tail gap below min_gap are
/// redrawn and reported as skipped.
GradcheckReport gradcheck(const GradcheckConfig& cfg);

}  // namespace lrtl

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lrtl/errors.hpp"
#include "lrtl/losses.hpp"

namespace lrtl {

/// Trajectory term minimised by optimize_sequence.
enum class TrajectoryLoss { lt, rec, per, taf };

std::string to_string(TrajectoryLoss loss);
TrajectoryLoss trajectory_loss_from_string(const std::string& name);

struct OptimConfig {
  Index segments = 25;  // K
  Index steps = 5000;
  Index r = 5;
  double step_size = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  LossWeights weights;
  TrajectoryLoss trajectory_loss = TrajectoryLoss::lt;
  /// Frames on each side of center_frame; -1 uses the whole sequence.
  Index window_half_width = -1;
  Index center_frame = 0;
  /// Image size used to scale displacements and sample flow.
  Index height = 256;
  Index width = 256;
  /// Stop as soon as the converged criterion holds.
  bool early_stop = false;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

struct StepRecord {
  Index step = 0;
  double total = 0.0;
  double l_f = 0.0;
  double l_t = 0.0;
  double l_tau = 0.0;
};

struct OptimTrace {
  std::vector<StepRecord> steps;
  Matrix final_logits;
  double wall_seconds = 0.0;
  bool converged = false;
};

struct OptimResult {
  SoftAssignment assignment;
  OptimTrace trace;
};

/// Raised when a loss becomes non-finite; carries the trace up to that step.
class NonFiniteLoss : public SolverDiverged {
 public:
  NonFiniteLoss(const std::string& what, OptimTrace trace);
  [[nodiscard]] const OptimTrace& trace() const noexcept { return trace_; }

 private:
  OptimTrace trace_;
};

/// Loss value and logit gradient of the configured objective.
struct Objective {
  StepRecord value;
  Matrix grad;
};

/// Evaluates the objective at the given logits. `flow` is the dense HW x 2
/// flow of the reference frame, sampled at the track positions.
Objective evaluate_objective(const Matrix& logits, const TrajectoryMatrix& p, const std::optional<Matrix>& flow,
                             const OptimConfig& cfg);

/// Adam on per-track logits. Deterministic for a fixed seed.
OptimResult optimize_sequence(const TrajectoryMatrix& p, const std::optional<Matrix>& flow, const OptimConfig& cfg);

/// True when the relative loss change over the last 100 steps is below 1e-7.
/// Losses under 1e-12 count as converged zero.
bool has_converged(const std::vector<StepRecord>& steps);

/// Row-wise argmax; ties go to the lowest segment index.
std::vector<int> hard_labels(const SoftAssignment& a);
std::vector<int> hard_labels(const Matrix& weights);

/// CSV with header step,loss_total,l_f,l_t,l_tau.
void write_trace_csv(std::ostream& os, const OptimTrace& trace);

/// CSV with header track_id,label.
void write_labels_csv(std::ostream& os, const std::vector<int>& labels);

}  // namespace lrtl

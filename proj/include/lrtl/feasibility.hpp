#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lrtl/optimizer.hpp"
#include "lrtl/scene.hpp"

namespace lrtl {

/// Resamples each pixel uniformly from {0..num_classes-1} with probability eta.
std::vector<LabelGrid> corrupt_noise(const std::vector<LabelGrid>& masks, double eta, int num_classes,
                                     std::uint64_t seed);

struct StructuralResult {
  std::vector<LabelGrid> masks;
  std::vector<std::string> diagnostics;
};

/// s < 0 merges |s| random objects into the background; s > 0 splits s random
/// objects along an axis-parallel line through each frame's centroid.
StructuralResult corrupt_structural(const std::vector<LabelGrid>& masks, int s, std::uint64_t seed,
                                    int background = 0);

/// Pixel-mode softmax(c * onehot / tau) over num_classes segments.
SoftAssignment corrupt_temperature(const LabelGrid& mask, double tau, int num_classes, double logit_scale = 10.0);

/// Point-mode version of corrupt_temperature for a label vector.
Matrix temperature_assignment(const std::vector<int>& labels, double tau, int num_classes,
                              double logit_scale = 10.0);

/// Labels at normalised positions (n x 2), nearest pixel, clamped to the grid.
std::vector<int> labels_at_points(const LabelGrid& mask, const Matrix& xy);

struct SweepGrid {
  std::vector<double> etas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<int> structure{0};
  std::vector<double> taus{1e-3, 2.5, 5.0, 10.0};
  Index trials = 25;
  std::uint64_t seed = 0;
  TrajectoryLoss loss = TrajectoryLoss::lt;
  Index r = 5;
  /// Classes drawn by noise corruption; 0 picks max(20, labels in use).
  int noise_classes = 0;
  double logit_scale = 10.0;

  /// Default axes with s in -m..m, m = min(4, objects).
  static SweepGrid defaults(int objects);

  /// Throws ConfigError on invalid ranges.
  void validate(int objects) const;
};

struct SweepCell {
  double eta = 0.0;
  int s = 0;
  double tau = 0.0;
  Index trials = 0;
  double loss_mean = 0.0;
  double loss_std = 0.0;
  double loss_mean_per_track = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  Index tracks = 0;  // tracks visible at the reference frame
  std::vector<std::string> diagnostics;

  /// Cell lookup; throws RangeError when absent.
  [[nodiscard]] const SweepCell& at(double eta, int s, double tau) const;
};

/// Loss of a soft point assignment under the chosen trajectory loss.
double assignment_loss(const Matrix& a, const TrajectoryMatrix& p, TrajectoryLoss loss, Index r, Index height,
                       Index width);

/// Corrupts the reference-frame mask of `scene` for every grid cell and trial
/// and evaluates the loss on the point-sampled assignment.
SweepResult sweep(const SceneTruth& scene, const SweepGrid& grid);

/// Same as above for a scene given by its tracks and reference-frame mask;
/// `num_labels` counts the background.
SweepResult sweep(const TrajectoryMatrix& p, const LabelGrid& reference_mask, int num_labels, const SweepGrid& grid);

struct SweepChecks {
  bool eta_monotone = false;  // along eta at s = 0, smallest tau
  bool tau_monotone = false;  // along tau at s = 0, smallest eta
  bool asymmetry = false;     // loss(s = -m) > loss(s = +m) for m in {1, 2} on the grid
  bool min_at_truth = false;  // clean cell is a global minimum
  /// Slack for ties, relative to the dynamic range of the sweep.
  double tolerance = 1e-6;
  /// Required rise between extreme cells, relative to the dynamic range.
  double margin = 0.05;
};

struct CheckOutcome {
  std::string name;
  bool passed = true;
  std::string detail;  // names the violated cell pair
};

/// Evaluates the configured landscape assertions. Throws ConfigError when the
/// grid lacks the cells an assertion needs.
std::vector<CheckOutcome> check_sweep(const SweepResult& result, const SweepGrid& grid, const SweepChecks& checks);

/// CSV with header eta,s,tau,trials,loss_mean,loss_std,loss_mean_per_track.
void write_sweep_csv(std::ostream& os, const SweepResult& result);

}  // namespace lrtl

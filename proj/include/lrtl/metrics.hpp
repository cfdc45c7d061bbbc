#pragma once

#include <vector>

#include "lrtl/trajectory.hpp"

namespace lrtl {

/// Counts n_ij over (predicted i, true j) with dense relabelled ids.
struct ContingencyTable {
  Eigen::MatrixXd counts;
  Vector pred_marginals;
  Vector true_marginals;
  Index total = 0;
};

ContingencyTable contingency(const std::vector<int>& pred, const std::vector<int>& truth);

/// Adjusted Rand index. Returns 0 when max - E vanishes.
double ari(const std::vector<int>& pred, const std::vector<int>& truth);

/// ARI over the elements flagged in fg_mask.
double fg_ari(const std::vector<int>& pred, const std::vector<int>& truth, const std::vector<bool>& fg_mask);

/// ARI over elements whose true label differs from `background`.
double fg_ari(const std::vector<int>& pred, const std::vector<int>& truth, int background = 0);

/// Fraction of elements whose predicted cluster's majority true label is
/// their own.
double purity(const std::vector<int>& pred, const std::vector<int>& truth);

struct Matching {
  std::vector<int> row_to_col;  // -1 when a row is unassigned
  double cost = 0.0;
};

/// Minimum-cost maximum matching. Among optimal matchings the one whose
/// row-to-column vector is lexicographically smallest is returned; padding
/// columns sort after real ones.
Matching hungarian(const Matrix& cost);

/// Boolean masks, one row per segment over HW pixels (or tracks).
using MaskSet = BoolMatrix;

/// Intersection over union; 0 when both masks are empty.
double iou(const MaskSet& a, Index i, const MaskSet& b, Index j);

/// Mean IoU over true masks after Hungarian matching on -IoU.
double jaccard_matched(const MaskSet& pred, const MaskSet& truth);

/// Rows of a label vector as boolean masks, one per distinct label in order.
MaskSet masks_from_labels(const std::vector<int>& labels, const std::vector<int>& ids);

/// Per frame: matched Jaccard over the tracks visible in that frame, using
/// true labels present in the frame; frames without visible tracks are
/// skipped. Returns the mean over frames.
double track_jaccard(const std::vector<int>& pred, const std::vector<int>& truth, const BoolMatrix& visible);

struct MetricReport {
  double ari = 0.0;
  double fg_ari = 0.0;
  double jaccard = 0.0;
  Index k_pred = 0;
  Index k_true = 0;
};

/// All metrics for a track labelling. FG-ARI falls back to NaN when fewer
/// than two foreground tracks exist.
MetricReport evaluate_labels(const std::vector<int>& pred, const std::vector<int>& truth, const BoolMatrix& visible,
                             int background = 0);

/// Distinct label ids in ascending order.
std::vector<int> distinct_labels(const std::vector<int>& labels);

}  // namespace lrtl

#pragma once

#include <vector>

#include "lrtl/numkernel.hpp"

namespace lrtl {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Point tracks stacked as a 2T x N matrix. Row 2t holds x and row 2t+1 holds
/// y of frame t, both normalised to [0, 1] by (W - 1) and (H - 1).
struct TrajectoryMatrix {
  Matrix positions;         // 2T x N
  BoolMatrix visible;       // T x N
  std::vector<int> labels;  // N ground-truth ids, empty when unknown
  Index reference_frame = 0;

  [[nodiscard]] Index frames() const noexcept { return positions.rows() / 2; }
  [[nodiscard]] Index points() const noexcept { return positions.cols(); }
  [[nodiscard]] bool has_labels() const noexcept { return !labels.empty(); }

  /// N x 2 positions of frame t.
  [[nodiscard]] Matrix frame_xy(Index t) const;

  /// Columns visible at the reference frame.
  [[nodiscard]] std::vector<bool> reference_visible() const;

  /// Throws InvalidInput when shapes disagree or positions are not finite.
  void validate() const;
};

/// Frame index after reflection padding into [0, T).
Index reflect_frame(Index t, Index frames);

/// Frames center - f ... center + f with reflection at the video ends. The
/// result's reference frame is the window centre.
TrajectoryMatrix window(const TrajectoryMatrix& p, Index center, Index half_width);

/// Column subset of a trajectory matrix.
TrajectoryMatrix select_points(const TrajectoryMatrix& p, const std::vector<Index>& columns);

}  // namespace lrtl

#include "lrtl/trajectory.hpp"

#include <string>

#include "lrtl/errors.hpp"

namespace lrtl {

Matrix TrajectoryMatrix::frame_xy(Index t) const {
  if (t < 0 || t >= frames()) {
    throw RangeError("frame " + std::to_string(t) + " outside [0, " + std::to_string(frames()) + ")");
  }
  Matrix xy(points(), 2);
  xy.col(0) = positions.row(2 * t).transpose();
  xy.col(1) = positions.row(2 * t + 1).transpose();
  return xy;
}

std::vector<bool> TrajectoryMatrix::reference_visible() const {
  std::vector<bool> out(static_cast<std::size_t>(points()), true);
  if (visible.size() == 0) return out;
  for (Index n = 0; n < points(); ++n) out[static_cast<std::size_t>(n)] = visible(reference_frame, n);
  return out;
}

void TrajectoryMatrix::validate() const {
  if (positions.rows() < 2 || positions.rows() % 2 != 0) {
    throw InvalidInput("trajectory matrix needs an even, positive row count");
  }
  require_finite(positions, "trajectory matrix");
  if (visible.size() != 0 && (visible.rows() != frames() || visible.cols() != points())) {
    throw InvalidInput("visibility must be T x N");
  }
  if (has_labels() && static_cast<Index>(labels.size()) != points()) {
    throw InvalidInput("label count differs from trajectory count");
  }
  if (reference_frame < 0 || reference_frame >= frames()) {
    throw RangeError("reference frame outside the trajectory window");
  }
}

Index reflect_frame(Index t, Index frames) {
  if (frames <= 1) return 0;
  const Index period = 2 * (frames - 1);
  t %= period;
  if (t < 0) t += period;
  return t < frames ? t : period - t;
}

TrajectoryMatrix window(const TrajectoryMatrix& p, Index center, Index half_width) {
  const Index T = p.frames();
  if (center < 0 || center >= T) {
    throw RangeError("window centre " + std::to_string(center) + " outside [0, " + std::to_string(T) + ")");
  }
  if (half_width < 0) throw RangeError("window half-width must be nonnegative");
  const Index len = 2 * half_width + 1;
  TrajectoryMatrix out;
  out.positions.resize(2 * len, p.points());
  out.visible.resize(len, p.points());
  for (Index i = 0; i < len; ++i) {
    const Index src = reflect_frame(center - half_width + i, T);
    out.positions.middleRows(2 * i, 2) = p.positions.middleRows(2 * src, 2);
    if (p.visible.size() != 0) {
      out.visible.row(i) = p.visible.row(src);
    } else {
      out.visible.row(i).setConstant(true);
    }
  }
  out.labels = p.labels;
  out.reference_frame = half_width;
  return out;
}

TrajectoryMatrix select_points(const TrajectoryMatrix& p, const std::vector<Index>& columns) {
  TrajectoryMatrix out;
  const auto n = static_cast<Index>(columns.size());
  out.positions.resize(p.positions.rows(), n);
  out.visible.resize(p.frames(), n);
  for (Index j = 0; j < n; ++j) {
    const Index c = columns[static_cast<std::size_t>(j)];
    out.positions.col(j) = p.positions.col(c);
    if (p.visible.size() != 0) {
      out.visible.col(j) = p.visible.col(c);
    } else {
      out.visible.col(j).setConstant(true);
    }
    if (p.has_labels()) out.labels.push_back(p.labels[static_cast<std::size_t>(c)]);
  }
  out.reference_frame = p.reference_frame;
  return out;
}

}  // namespace lrtl

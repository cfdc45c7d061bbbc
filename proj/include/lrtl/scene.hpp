#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrtl/trajectory.hpp"

namespace lrtl {

enum class CameraMode { planar2d, rigid3d_affine, rigid3d_perspective };

std::string to_string(CameraMode mode);
CameraMode camera_mode_from_string(const std::string& name);

struct SceneConfig {
  CameraMode mode = CameraMode::rigid3d_affine;
  int num_objects = 3;
  int frames = 16;
  int height = 256;
  int width = 256;
  int stride = 14;             // grid spacing of sampled tracks in pixels
  int points_per_object = 0;   // > 0 derives the stride from the mean object area
  std::uint64_t motion_seed = 0;
  double noise_sigma = 0.0;    // pixels
  double camera_motion = 1.0;  // background motion relative to object motion
  double rotation_amplitude = 0.15;     // radians per frame
  double translation_amplitude = 0.01;  // fraction of min(H, W) per frame
  double object_scale = 1.0;            // multiplies the object radius range
  bool constant_depth = false;          // flat surfaces, in-plane motion only
  bool dense_fields = true;             // compute flows (masks are always built)

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Affine map from homogeneous reference coordinates [x, y, z, 1] to the
/// 3D position of a surface point at one frame.
using Pose = Eigen::Matrix<double, 3, 4>;

/// Height field z = h(x, y) over an object's footprint, in pixel units.
struct Surface {
  enum class Kind { flat, cap, saddle };
  Kind kind = Kind::flat;
  double cx = 0.0;
  double cy = 0.0;
  double radius = 1.0;
  double amplitude = 0.0;

  [[nodiscard]] double height(double x, double y) const;
  [[nodiscard]] Eigen::Vector2d slope(double x, double y) const;
};

struct SceneObject {
  std::vector<Eigen::Vector2d> footprint;  // convex, counter-clockwise; empty = whole plane
  Surface surface;
  std::vector<Pose> poses;                 // one per frame, poses[0] = [I | 0]

  [[nodiscard]] bool contains(const Eigen::Vector2d& p) const;
};

/// Pinhole parameters used by the perspective mode. A reference point at
/// depth z projects with projective depth (distance - z) / distance.
struct Camera {
  CameraMode mode = CameraMode::rigid3d_affine;
  double cx = 0.0;
  double cy = 0.0;
  double distance = 0.0;

  [[nodiscard]] Eigen::Vector2d project(const Eigen::Vector3d& y) const;
  [[nodiscard]] double depth(const Eigen::Vector3d& y) const;
  /// 2 x 3 Jacobian of project at y.
  [[nodiscard]] Eigen::Matrix<double, 2, 3> jacobian(const Eigen::Vector3d& y) const;
};

using LabelGrid = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SceneTruth {
  SceneConfig config;
  Camera camera;
  std::vector<SceneObject> objects;   // index = label, 0 is the background
  TrajectoryMatrix trajectories;      // carries ground-truth labels
  std::vector<LabelGrid> masks;       // T grids of H x W labels
  std::vector<Matrix> flows;          // T - 1 fields of HW x 2, pixels per frame
  Matrix reference_points;            // 4 x N homogeneous [x, y, z, 1] at t = 0
  Matrix depths;                      // T x N projective depths (1 in affine modes)
  int regenerations = 0;

  [[nodiscard]] Index frames() const noexcept { return config.frames; }
  [[nodiscard]] int num_labels() const noexcept { return static_cast<int>(objects.size()); }
};

/// Maps a reference point of `object` to image coordinates at frame t.
Eigen::Vector2d project_point(const SceneTruth& scene, int object, Index t, const Eigen::Vector3d& x);

SceneTruth make_scene(const SceneConfig& cfg);

/// Renders masks, tracks and flows for explicit objects. Object 0 must be the
/// background (empty footprint); every object needs cfg.frames poses.
SceneTruth render_scene(const SceneConfig& cfg, std::vector<SceneObject> objects);

/// Flow field between frames t and t + 1 (HW x 2, row y * W + x).
const Matrix& flow_field(const SceneTruth& scene, Index t);

TrajectoryMatrix window(const SceneTruth& scene, Index center, Index half_width);

/// Columns of the trajectory matrix carrying ground-truth label k.
std::vector<Index> group_columns(const TrajectoryMatrix& p, int label);

}  // namespace lrtl

#include "lrtl/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "lrtl/errors.hpp"
#include "lrtl/rng.hpp"

namespace lrtl {

namespace {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

constexpr int kMaxRegenerations = 16;
constexpr int kPlacementTries = 200;
constexpr int kNewtonIterations = 30;

double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i > 0; --i) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

Eigen::Matrix3d axis_rotation(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Pose identity_pose() {
  Pose p = Pose::Zero();
  p.leftCols<3>().setIdentity();
  return p;
}

Pose pose_about(const Eigen::Matrix3d& a, const Vec3& pivot, const Vec3& shift) {
  Pose p;
  p.leftCols<3>() = a;
  p.col(3) = pivot - a * pivot + shift;
  return p;
}

struct MotionDraw {
  Vec3 axis;
  double w0 = 0.0;
  double w1 = 0.0;
  Vec2 v0 = Vec2::Zero();
  Vec2 a0 = Vec2::Zero();
  double scale_rate = 0.0;
  double shear_rate = 0.0;
};

MotionDraw draw_motion(Rng& rng, const SceneConfig& cfg, double rot_amp, double trans_amp) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double T = cfg.frames;
  MotionDraw m;
  const bool in_plane = cfg.mode == CameraMode::planar2d || cfg.constant_depth;
  if (in_plane) {
    m.axis = Vec3::UnitZ();
  } else {
    m.axis = Vec3(normal(rng), normal(rng), normal(rng));
    if (m.axis.norm() < 1e-12) m.axis = Vec3::UnitZ();
  }
  const double sign = in_plane && unit(rng) < 0.5 ? -1.0 : 1.0;
  m.w0 = sign * (0.5 + unit(rng)) * rot_amp;
  m.w1 = (unit(rng) - 0.5) * rot_amp / T;
  const double ang = 2.0 * std::numbers::pi * unit(rng);
  const double speed = (0.5 + 0.5 * unit(rng)) * trans_amp;
  m.v0 = speed * Vec2(std::cos(ang), std::sin(ang));
  m.a0 = Vec2(normal(rng), normal(rng)) * trans_amp / T;
  if (cfg.mode == CameraMode::planar2d) {
    m.scale_rate = (2.0 * unit(rng) - 1.0) * 0.2 * rot_amp;
    m.shear_rate = (2.0 * unit(rng) - 1.0) * 0.2 * rot_amp;
  }
  return m;
}

std::vector<Pose> motion_poses(const MotionDraw& m, const SceneConfig& cfg, const Vec3& pivot) {
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(cfg.frames));
  for (int t = 0; t < cfg.frames; ++t) {
    const double angle = m.w0 * t + m.w1 * t * t;
    const Vec2 tr = m.v0 * t + 0.5 * m.a0 * t * t;
    Eigen::Matrix3d a = axis_rotation(m.axis, angle);
    if (cfg.mode == CameraMode::planar2d) {
      Eigen::Matrix3d shear = Eigen::Matrix3d::Identity();
      shear(0, 1) = m.shear_rate * t;
      a = (1.0 + m.scale_rate * t) * a * shear;
      a(2, 2) = 1.0;
    }
    poses.push_back(t == 0 ? identity_pose() : pose_about(a, pivot, Vec3(tr.x(), tr.y(), 0.0)));
  }
  return poses;
}

std::vector<Vec2> random_footprint(Rng& rng, const Vec2& c, double r) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = 5 + static_cast<int>(unit(rng) * 4.0);
  const double phase = unit(rng);
  std::vector<Vec2> pts;
  for (int i = 0; i < n; ++i) {
    const double ang = 2.0 * std::numbers::pi * (i + phase + 0.6 * (unit(rng) - 0.5)) / n;
    const double rad = r * (0.7 + 0.3 * unit(rng));
    pts.emplace_back(c.x() + rad * std::cos(ang), c.y() + rad * std::sin(ang));
  }
  return convex_hull(std::move(pts));
}

/// Returns false when the layout is degenerate and must be redrawn.
bool draw_layout(const SceneConfig& cfg, std::uint64_t seed, std::vector<SceneObject>& objects) {
  Rng rng = make_rng(seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double W = cfg.width;
  const double H = cfg.height;
  const double S = std::min(W, H);
  const bool flat = cfg.mode == CameraMode::planar2d || cfg.constant_depth;

  objects.assign(static_cast<std::size_t>(cfg.num_objects) + 1, SceneObject{});
  SceneObject& bg = objects[0];
  bg.surface.cx = 0.5 * W;
  bg.surface.cy = 0.5 * H;
  bg.surface.radius = 0.5 * S;
  if (!flat) {
    bg.surface.kind = Surface::Kind::saddle;
    bg.surface.amplitude = 0.1 * S;
  }

  std::vector<Vec2> centers;
  std::vector<double> radii;
  for (int k = 1; k <= cfg.num_objects; ++k) {
    const double r = (0.14 + 0.06 * unit(rng)) * S * cfg.object_scale;
    Vec2 c;
    for (int attempt = 0; attempt < kPlacementTries; ++attempt) {
      c = Vec2((0.2 + 0.6 * unit(rng)) * W, (0.2 + 0.6 * unit(rng)) * H);
      bool clear = true;
      for (std::size_t j = 0; j < centers.size(); ++j) {
        if ((c - centers[j]).norm() <= r + radii[j]) clear = false;
      }
      if (clear) break;
    }
    centers.push_back(c);
    radii.push_back(r);
    SceneObject& obj = objects[static_cast<std::size_t>(k)];
    obj.footprint = random_footprint(rng, c, r);
    if (obj.footprint.size() < 3 || polygon_area(obj.footprint) < 1.0) return false;
    obj.surface.cx = c.x();
    obj.surface.cy = c.y();
    obj.surface.radius = r;
    if (!flat) {
      obj.surface.kind = Surface::Kind::cap;
      obj.surface.amplitude = 0.8 * r;
    }
  }

  for (int g = 0; g <= cfg.num_objects; ++g) {
    const bool background = g == 0;
    const double rot_amp = cfg.rotation_amplitude * (background ? 0.1 * cfg.camera_motion : 1.0);
    const double trans_amp = cfg.translation_amplitude * S * (background ? 0.3 * cfg.camera_motion : 1.0);
    const MotionDraw m = draw_motion(rng, cfg, rot_amp, trans_amp);
    SceneObject& obj = objects[static_cast<std::size_t>(g)];
    obj.poses = motion_poses(m, cfg, Vec3(obj.surface.cx, obj.surface.cy, 0.0));
  }
  return true;
}

Vec3 lift(const SceneObject& obj, const Vec2& x) {
  return Vec3(x.x(), x.y(), obj.surface.height(x.x(), x.y()));
}

Vec2 forward(const Camera& cam, const SceneObject& obj, Index t, const Vec2& x) {
  return cam.project(obj.poses[static_cast<std::size_t>(t)] * lift(obj, x).homogeneous());
}

/// Reference coordinates of the surface point of obj seen at pixel p.
bool invert(const Camera& cam, const SceneObject& obj, Index t, const Vec2& p, Vec2& x) {
  const Pose& pose = obj.poses[static_cast<std::size_t>(t)];
  const double h0 = obj.surface.height(obj.surface.cx, obj.surface.cy);
  const Eigen::Matrix2d a = pose.topLeftCorner<2, 2>();
  const Vec2 b = pose.topRightCorner<2, 1>() + pose.block<2, 1>(0, 2) * h0;
  if (std::abs(a.determinant()) < 1e-12) return false;
  x = a.inverse() * (p - b);
  for (int it = 0; it < kNewtonIterations; ++it) {
    const Vec3 y = pose * lift(obj, x).homogeneous();
    const Vec2 r = cam.project(y) - p;
    if (r.norm() < 1e-10) return true;
    Eigen::Matrix<double, 3, 2> dlift;
    const Vec2 s = obj.surface.slope(x.x(), x.y());
    dlift << 1.0, 0.0, 0.0, 1.0, s.x(), s.y();
    const Eigen::Matrix2d j = cam.jacobian(y) * pose.leftCols<3>() * dlift;
    if (std::abs(j.determinant()) < 1e-12) return false;
    x -= j.inverse() * r;
    if (!x.allFinite()) return false;
  }
  return (cam.project(pose * lift(obj, x).homogeneous()) - p).norm() < 1e-6;
}

/// Pixel bounding box of an object's image at frame t, clipped to the grid.
std::array<int, 4> image_bounds(const Camera& cam, const SceneObject& obj, Index t, int W, int H) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& v : obj.footprint) {
    x0 = std::min(x0, v.x());
    x1 = std::max(x1, v.x());
    y0 = std::min(y0, v.y());
    y1 = std::max(y1, v.y());
  }
  const double zmax = std::max(0.0, obj.surface.amplitude);
  const double zmin = std::min(0.0, obj.surface.kind == Surface::Kind::saddle ? -obj.surface.amplitude : 0.0);
  double u0 = 1e300, u1 = -1e300, v0 = 1e300, v1 = -1e300;
  const Pose& pose = obj.poses[static_cast<std::size_t>(t)];
  for (double xx : {x0, x1}) {
    for (double yy : {y0, y1}) {
      for (double zz : {zmin, zmax}) {
        const Vec2 q = cam.project(pose * Eigen::Vector4d(xx, yy, zz, 1.0));
        u0 = std::min(u0, q.x());
        u1 = std::max(u1, q.x());
        v0 = std::min(v0, q.y());
        v1 = std::max(v1, q.y());
      }
    }
  }
  auto clip = [](double v, int hi) { return static_cast<int>(std::clamp(v, -1.0, static_cast<double>(hi) + 1.0)); };
  return {std::max(0, clip(std::floor(u0), W) - 1), std::min(W - 1, clip(std::ceil(u1), W) + 1),
          std::max(0, clip(std::floor(v0), H) - 1), std::min(H - 1, clip(std::ceil(v1), H) + 1)};
}

int derived_stride(const SceneConfig& cfg, const std::vector<SceneObject>& objects) {
  if (cfg.points_per_object <= 0) return cfg.stride;
  double area = 0.0;
  for (std::size_t k = 1; k < objects.size(); ++k) area += polygon_area(objects[k].footprint);
  area /= static_cast<double>(std::max<std::size_t>(1, objects.size() - 1));
  return std::max(1, static_cast<int>(std::floor(std::sqrt(area / cfg.points_per_object))));
}

}  // namespace

std::string to_string(CameraMode mode) {
  switch (mode) {
    case CameraMode::planar2d: return "planar2d";
    case CameraMode::rigid3d_affine: return "rigid3d_affine";
    case CameraMode::rigid3d_perspective: return "rigid3d_perspective";
  }
  return "unknown";
}

CameraMode camera_mode_from_string(const std::string& name) {
  if (name == "planar2d") return CameraMode::planar2d;
  if (name == "rigid3d_affine") return CameraMode::rigid3d_affine;
  if (name == "rigid3d_perspective") return CameraMode::rigid3d_perspective;
  throw ConfigError("mode: unknown camera mode '" + name + "'");
}

void SceneConfig::validate() const {
  if (frames < 2) throw ConfigError("frames: need at least 2");
  if (num_objects < 1) throw ConfigError("num_objects: need at least 1");
  if (height < 8 || width < 8) throw ConfigError("height/width: grid must be at least 8 x 8");
  if (stride < 1) throw ConfigError("stride: must be positive");
  if (points_per_object < 0) throw ConfigError("points_per_object: must be nonnegative");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma: must be nonnegative");
  if (!(camera_motion >= 0.0)) throw ConfigError("camera_motion: must be nonnegative");
  if (!(rotation_amplitude >= 0.0) || !(translation_amplitude >= 0.0)) {
    throw ConfigError("rotation_amplitude/translation_amplitude: must be nonnegative");
  }
  if (!(object_scale > 0.0)) throw ConfigError("object_scale: must be positive");
}

double Surface::height(double x, double y) const {
  const double dx = (x - cx) / radius;
  const double dy = (y - cy) / radius;
  switch (kind) {
    case Kind::flat: return 0.0;
    case Kind::cap: return amplitude * (1.0 - dx * dx - dy * dy);
    case Kind::saddle: return amplitude * (dx * dx - dy * dy);
  }
  return 0.0;
}

Eigen::Vector2d Surface::slope(double x, double y) const {
  const double dx = (x - cx) / radius;
  const double dy = (y - cy) / radius;
  const double c = 2.0 * amplitude / radius;
  switch (kind) {
    case Kind::flat: return Vec2::Zero();
    case Kind::cap: return Vec2(-c * dx, -c * dy);
    case Kind::saddle: return Vec2(c * dx, -c * dy);
  }
  return Vec2::Zero();
}

bool SceneObject::contains(const Eigen::Vector2d& p) const {
  if (footprint.empty()) return true;
  for (std::size_t i = 0; i < footprint.size(); ++i) {
    if (cross(footprint[i], footprint[(i + 1) % footprint.size()], p) < -1e-9) return false;
  }
  return true;
}

Eigen::Vector2d Camera::project(const Eigen::Vector3d& y) const {
  if (mode != CameraMode::rigid3d_perspective) return y.head<2>();
  const double d = depth(y);
  return Vec2(cx + (y.x() - cx) / d, cy + (y.y() - cy) / d);
}

double Camera::depth(const Eigen::Vector3d& y) const {
  if (mode != CameraMode::rigid3d_perspective) return 1.0;
  return (distance - y.z()) / distance;
}

Eigen::Matrix<double, 2, 3> Camera::jacobian(const Eigen::Vector3d& y) const {
  Eigen::Matrix<double, 2, 3> j = Eigen::Matrix<double, 2, 3>::Zero();
  if (mode != CameraMode::rigid3d_perspective) {
    j(0, 0) = 1.0;
    j(1, 1) = 1.0;
    return j;
  }
  const double d = depth(y);
  j(0, 0) = 1.0 / d;
  j(1, 1) = 1.0 / d;
  j(0, 2) = (y.x() - cx) / (d * d * distance);
  j(1, 2) = (y.y() - cy) / (d * d * distance);
  return j;
}

Eigen::Vector2d project_point(const SceneTruth& scene, int object, Index t, const Eigen::Vector3d& x) {
  const auto& obj = scene.objects.at(static_cast<std::size_t>(object));
  return scene.camera.project(obj.poses.at(static_cast<std::size_t>(t)) * x.homogeneous());
}

SceneTruth make_scene(const SceneConfig& cfg) {
  cfg.validate();
  std::vector<SceneObject> objects;
  int attempt = 0;
  while (!draw_layout(cfg, cfg.motion_seed + 1000003ULL * static_cast<std::uint64_t>(attempt), objects)) {
    if (++attempt > kMaxRegenerations) {
      throw DegenerateInput("scene: no valid layout after " + std::to_string(kMaxRegenerations) + " redraws");
    }
  }
  SceneTruth scene = render_scene(cfg, std::move(objects));
  scene.regenerations = attempt;
  return scene;
}

SceneTruth render_scene(const SceneConfig& cfg, std::vector<SceneObject> objects) {
  cfg.validate();
  if (objects.empty() || !objects[0].footprint.empty()) {
    throw InvalidInput("render_scene: object 0 must be the background");
  }
  for (const auto& obj : objects) {
    if (static_cast<int>(obj.poses.size()) != cfg.frames) {
      throw InvalidInput("render_scene: every object needs one pose per frame");
    }
  }
  const int H = cfg.height;
  const int W = cfg.width;
  const Index T = cfg.frames;
  const double S = std::min(H, W);

  SceneTruth scene;
  scene.config = cfg;
  scene.config.num_objects = static_cast<int>(objects.size()) - 1;
  scene.camera.mode = cfg.mode;
  scene.camera.cx = 0.5 * (W - 1);
  scene.camera.cy = 0.5 * (H - 1);
  scene.camera.distance = 2.0 * S;
  scene.objects = std::move(objects);
  const Camera& cam = scene.camera;
  const auto& objs = scene.objects;
  const int G = static_cast<int>(objs.size());

  // Masks, painted background first and then objects in index order.
  const Index HW = static_cast<Index>(H) * W;
  std::vector<Matrix> preimage(static_cast<std::size_t>(T), Matrix::Constant(HW, 2, std::nan("")));
  scene.masks.assign(static_cast<std::size_t>(T), LabelGrid::Zero(H, W));
  for (Index t = 0; t < T; ++t) {
    LabelGrid& mask = scene.masks[static_cast<std::size_t>(t)];
    Matrix& pre = preimage[static_cast<std::size_t>(t)];
    for (int g = 1; g < G; ++g) {
      const auto& obj = objs[static_cast<std::size_t>(g)];
      const auto box = image_bounds(cam, obj, t, W, H);
      for (int y = box[2]; y <= box[3]; ++y) {
        for (int x = box[0]; x <= box[1]; ++x) {
          Vec2 ref;
          if (invert(cam, obj, t, Vec2(x, y), ref) && obj.contains(ref)) {
            mask(y, x) = g;
            pre.row(static_cast<Index>(y) * W + x) = ref.transpose();
          }
        }
      }
    }
  }

  // Tracks seeded on the stride grid at t = 0.
  const int stride = derived_stride(cfg, scene.objects);
  std::vector<Vec3> seeds;
  std::vector<int> labels;
  for (double y = 0.5 * stride; y < H; y += stride) {
    for (double x = 0.5 * stride; x < W; x += stride) {
      int label = 0;
      Vec2 ref(x, y);
      for (int g = G - 1; g >= 1; --g) {
        const auto& obj = objs[static_cast<std::size_t>(g)];
        if (invert(cam, obj, 0, Vec2(x, y), ref) && obj.contains(ref)) {
          label = g;
          break;
        }
      }
      if (label == 0 && !invert(cam, objs[0], 0, Vec2(x, y), ref)) continue;
      seeds.push_back(lift(objs[static_cast<std::size_t>(label)], ref));
      labels.push_back(label);
    }
  }
  const auto N = static_cast<Index>(seeds.size());
  TrajectoryMatrix& traj = scene.trajectories;
  traj.positions.resize(2 * T, N);
  traj.visible.resize(T, N);
  traj.labels = labels;
  scene.reference_points.resize(4, N);
  scene.depths.resize(T, N);
  for (Index n = 0; n < N; ++n) {
    const auto& obj = objs[static_cast<std::size_t>(labels[static_cast<std::size_t>(n)])];
    const Vec3& x = seeds[static_cast<std::size_t>(n)];
    scene.reference_points.col(n) = x.homogeneous();
    for (Index t = 0; t < T; ++t) {
      const Vec3 y = obj.poses[static_cast<std::size_t>(t)] * x.homogeneous();
      const Vec2 p = cam.project(y);
      traj.positions(2 * t, n) = p.x();
      traj.positions(2 * t + 1, n) = p.y();
      scene.depths(t, n) = cam.depth(y);
      const long px = std::lround(p.x());
      const long py = std::lround(p.y());
      const bool in_frame = p.x() >= 0.0 && p.x() <= W - 1 && p.y() >= 0.0 && p.y() <= H - 1;
      traj.visible(t, n) = in_frame && scene.masks[static_cast<std::size_t>(t)](py, px) == labels[static_cast<std::size_t>(n)];
    }
  }
  if (cfg.noise_sigma > 0.0) {
    Rng rng = make_rng(cfg.motion_seed, 2);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (Index n = 0; n < N; ++n) {
      for (Index r = 0; r < 2 * T; ++r) traj.positions(r, n) += noise(rng);
    }
  }
  for (Index t = 0; t < T; ++t) {
    traj.positions.row(2 * t) /= static_cast<double>(W - 1);
    traj.positions.row(2 * t + 1) /= static_cast<double>(H - 1);
  }

  // Dense flow from the owning object's motion between t and t + 1.
  if (cfg.dense_fields) {
    scene.flows.assign(static_cast<std::size_t>(T - 1), Matrix::Zero(HW, 2));
    for (Index t = 0; t + 1 < T; ++t) {
      const LabelGrid& mask = scene.masks[static_cast<std::size_t>(t)];
      const Matrix& pre = preimage[static_cast<std::size_t>(t)];
      Matrix& flow = scene.flows[static_cast<std::size_t>(t)];
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const Index i = static_cast<Index>(y) * W + x;
          const auto& obj = objs[static_cast<std::size_t>(mask(y, x))];
          Vec2 ref;
          if (mask(y, x) != 0) {
            ref = pre.row(i).transpose();
          } else if (!invert(cam, obj, t, Vec2(x, y), ref)) {
            continue;
          }
          flow.row(i) = (forward(cam, obj, t + 1, ref) - Vec2(x, y)).transpose();
        }
      }
    }
  }
  return scene;
}

const Matrix& flow_field(const SceneTruth& scene, Index t) {
  const auto count = static_cast<Index>(scene.flows.size());
  if (t < 0 || t >= scene.frames() - 1) {
    throw RangeError("flow_field: frame " + std::to_string(t) + " outside [0, " +
                     std::to_string(scene.frames() - 1) + ")");
  }
  if (t >= count) throw InvalidInput("flow_field: scene was generated without dense fields");
  return scene.flows[static_cast<std::size_t>(t)];
}

TrajectoryMatrix window(const SceneTruth& scene, Index center, Index half_width) {
  return window(scene.trajectories, center, half_width);
}

std::vector<Index> group_columns(const TrajectoryMatrix& p, int label) {
  std::vector<Index> cols;
  for (Index n = 0; n < static_cast<Index>(p.labels.size()); ++n) {
    if (p.labels[static_cast<std::size_t>(n)] == label) cols.push_back(n);
  }
  return cols;
}

}  // namespace lrtl

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lrtl/errors.hpp"
#include "lrtl/losses.hpp"
#include "lrtl/metrics.hpp"
#include "lrtl/optimizer.hpp"
#include "lrtl/scene.hpp"
#include "oracles.hpp"

using namespace lrtl;

namespace {

SceneConfig small_scene(std::uint64_t seed, double noise = 0.0) {
  SceneConfig cfg;
  cfg.mode = CameraMode::rigid3d_affine;
  cfg.num_objects = 2;
  cfg.frames = 12;
  cfg.height = 128;
  cfg.width = 128;
  cfg.stride = 8;
  cfg.motion_seed = seed;
  cfg.noise_sigma = noise;
  return cfg;
}

OptimConfig trajectory_only(Index steps, Index k = 8) {
  OptimConfig cfg;
  cfg.segments = k;
  cfg.steps = steps;
  cfg.weights = {0.0, 1.0, 0.0};
  cfg.height = 128;
  cfg.width = 128;
  return cfg;
}

Matrix one_hot(const std::vector<int>& labels, Index k) {
  Matrix a = Matrix::Zero(static_cast<Index>(labels.size()), k);
  for (std::size_t i = 0; i < labels.size(); ++i) a(static_cast<Index>(i), labels[i]) = 1.0;
  return a;
}

}  // namespace

TEST(OptimConfig, Validation) {
  OptimConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.segments, 25);
  EXPECT_EQ(cfg.steps, 5000);
  EXPECT_EQ(cfg.step_size, 0.05);
  cfg.segments = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(trajectory_loss_from_string("l2"), ConfigError);
  EXPECT_EQ(trajectory_loss_from_string(to_string(TrajectoryLoss::taf)), TrajectoryLoss::taf);
}

TEST(HardLabels, Examples) {
  Matrix a(4, 3);
  a << 1, 0, 0, 0, 0, 1, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0.2, 0.5, 0.3;
  EXPECT_EQ(hard_labels(a), (std::vector<int>{0, 2, 0, 1}));
}

TEST(HardLabels, InvariantUnderMonotoneRowTransforms) {
  const Matrix z = oracle::gaussian(50, 6, 1);
  const auto base = hard_labels(softmax_rows(z));
  EXPECT_EQ(hard_labels(z), base);
  EXPECT_EQ(hard_labels(Matrix((3.0 * z.array() + 2.0).exp())), base);
  EXPECT_EQ(hard_labels(Matrix(z.array().cube())), base);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  const SceneTruth s = make_scene(small_scene(3, 0.5));
  const auto& p = s.trajectories;
  const Matrix logits = oracle::gaussian(p.points(), 3, 2);
  for (auto loss : {TrajectoryLoss::lt, TrajectoryLoss::rec, TrajectoryLoss::per, TrajectoryLoss::taf}) {
    OptimConfig cfg = trajectory_only(1, 3);
    cfg.trajectory_loss = loss;
    auto f = [&](const Matrix& z) { return evaluate_objective(z, p, std::nullopt, cfg).value.total; };
    const Matrix num = oracle::central_difference(f, logits, 1e-6);
    EXPECT_LT(oracle::relative_error(evaluate_objective(logits, p, std::nullopt, cfg).grad, num), 1e-5)
        << to_string(loss);
  }
}

TEST(Objective, FlowTermGradientMatchesFiniteDifferences) {
  SceneConfig sc = small_scene(4);
  sc.mode = CameraMode::planar2d;
  sc.height = 48;
  sc.width = 48;
  sc.stride = 6;
  const SceneTruth s = make_scene(sc);
  OptimConfig cfg = trajectory_only(1, 3);
  cfg.weights = {0.5, 0.0, 0.0};
  cfg.height = 48;
  cfg.width = 48;
  const std::optional<Matrix> flow = flow_field(s, 0);
  const Matrix logits = oracle::gaussian(s.trajectories.points(), 3, 5);
  auto f = [&](const Matrix& z) { return evaluate_objective(z, s.trajectories, flow, cfg).value.total; };
  const auto obj = evaluate_objective(logits, s.trajectories, flow, cfg);
  EXPECT_GT(obj.value.l_f, 0.0);
  EXPECT_EQ(obj.value.l_tau, 0.0);
  EXPECT_EQ(obj.value.total, 0.5 * obj.value.l_f);
  EXPECT_LT(oracle::relative_error(obj.grad, oracle::central_difference(f, logits, 1e-6)), 1e-5);
}

TEST(Optimize, StaticSingleMotionReachesZeroLoss) {
  SceneConfig sc = small_scene(0);
  sc.num_objects = 1;
  sc.rotation_amplitude = 0.0;
  sc.translation_amplitude = 0.0;
  const SceneTruth s = make_scene(sc);
  const auto res = optimize_sequence(s.trajectories, std::nullopt, trajectory_only(50));
  EXPECT_LT(res.trace.steps.back().total, 1e-8);
  EXPECT_NO_THROW(res.assignment.validate());
}

TEST(Optimize, DeterministicForFixedSeed) {
  const SceneTruth s = make_scene(small_scene(1, 1.0));
  const auto cfg = trajectory_only(60);
  const auto a = optimize_sequence(s.trajectories, std::nullopt, cfg);
  const auto b = optimize_sequence(s.trajectories, std::nullopt, cfg);
  ASSERT_EQ(a.trace.steps.size(), b.trace.steps.size());
  for (std::size_t i = 0; i < a.trace.steps.size(); ++i) EXPECT_EQ(a.trace.steps[i].total, b.trace.steps[i].total);
  EXPECT_EQ(a.trace.final_logits, b.trace.final_logits);
  auto other = cfg;
  other.seed = 9;
  EXPECT_NE(optimize_sequence(s.trajectories, std::nullopt, other).trace.final_logits, a.trace.final_logits);
}

TEST(Optimize, RejectsTooFewTracks) {
  TrajectoryMatrix p;
  p.positions = oracle::gaussian(8, 5, 1);
  p.visible = BoolMatrix::Constant(4, 5, true);
  EXPECT_THROW(optimize_sequence(p, std::nullopt, trajectory_only(5, 6)), InvalidInput);
}

TEST(Optimize, NonFiniteLossAbortsWithTrace) {
  TrajectoryMatrix p;
  p.positions = oracle::gaussian(8, 20, 2) * 1e200;
  p.visible = BoolMatrix::Constant(4, 20, true);
  try {
    optimize_sequence(p, std::nullopt, trajectory_only(5, 3));
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.trace().final_logits.rows(), 20);
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
  }
}

TEST(Optimize, WindowRestrictsFrames) {
  const SceneTruth s = make_scene(small_scene(2, 1.0));
  auto cfg = trajectory_only(5);
  cfg.window_half_width = 2;
  cfg.center_frame = 6;
  const auto w = window(s.trajectories, 6, 2);
  const auto a = optimize_sequence(s.trajectories, std::nullopt, cfg);
  auto full = cfg;
  full.window_half_width = -1;
  const auto b = optimize_sequence(w, std::nullopt, full);
  EXPECT_EQ(a.trace.final_logits, b.trace.final_logits);
}

TEST(Optimize, NoiseFreeGroupingIsPure) {
  // Every refinement of the true partition has zero loss, so per-track
  // logits over-segment; grouping quality is measured by purity.
  double worst = 1.0;
  int converged = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SceneTruth s = make_scene(small_scene(seed));
    const auto res = optimize_sequence(s.trajectories, std::nullopt, trajectory_only(1500, 8));
    worst = std::min(worst, purity(hard_labels(res.assignment), s.trajectories.labels));
    if (res.trace.steps.back().total < 1e-3 * res.trace.steps.front().total) ++converged;
    EXPECT_LT(res.trace.steps.back().total, res.trace.steps.front().total) << "seed " << seed;
  }
  EXPECT_GE(worst, 0.85);
  EXPECT_GE(converged, 3);
}

TEST(Optimize, NoisyScenesBeatTruthObjective) {
  // With noise the true partition is not the minimiser: objects partly merge
  // into the background and spare segments take small groups. The optimiser
  // should still find labellings at least as good as the truth.
  int better = 0;
  double mean_purity = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SceneTruth s = make_scene(small_scene(seed, 1.0));
    const auto res = optimize_sequence(s.trajectories, std::nullopt, trajectory_only(1500, 8));
    const auto labels = hard_labels(res.assignment);
    const Matrix p = effective_positions(s.trajectories);
    const double found = traj_loss_lt(one_hot(labels, 8), p, 5);
    const double truth = traj_loss_lt(one_hot(s.trajectories.labels, 8), p, 5);
    if (found < truth) ++better;
    mean_purity += purity(labels, s.trajectories.labels) / 5.0;
  }
  EXPECT_GE(better, 3);
  EXPECT_GE(mean_purity, 0.85);
}

TEST(Optimize, MovingAverageDescendsOnNoiseFreeScene) {
  const SceneTruth s = make_scene(small_scene(6));
  const auto res = optimize_sequence(s.trajectories, std::nullopt, trajectory_only(1500, 8));
  const auto& st = res.trace.steps;
  std::vector<double> avg;
  double window = 0.0;
  for (std::size_t i = 0; i < st.size(); ++i) {
    window += st[i].total;
    if (i >= 100) window -= st[i - 100].total;
    if (i >= 99) avg.push_back(window / 100.0);
  }
  std::size_t violations = 0, considered = 0;
  for (std::size_t i = 500; i + 1 < avg.size(); ++i) {
    ++considered;
    const double rise = avg[i + 1] - avg[i];
    if (rise > 0.0) {
      ++violations;
      EXPECT_LT(rise, 1e-6) << "window " << i;
    }
  }
  EXPECT_LE(static_cast<double>(violations), 0.01 * static_cast<double>(considered));
}

TEST(Optimize, ConvergenceFlagAndEarlyStop) {
  SceneConfig sc = small_scene(0);
  sc.num_objects = 1;
  sc.rotation_amplitude = 0.0;
  sc.translation_amplitude = 0.0;
  const SceneTruth s = make_scene(sc);
  auto cfg = trajectory_only(400);
  cfg.early_stop = true;
  const auto res = optimize_sequence(s.trajectories, std::nullopt, cfg);
  EXPECT_TRUE(res.trace.converged);
  EXPECT_EQ(res.trace.steps.size(), 101u);
}

TEST(TraceCsv, HeaderAndRows) {
  OptimTrace t;
  t.steps.push_back({0, 1.5, 0.25, 2.0, 0.0});
  t.steps.push_back({1, 1.0 / 3.0, 0.0, 1.0 / 3.0, 0.0});
  std::ostringstream os;
  write_trace_csv(os, t);
  EXPECT_EQ(os.str(), "step,loss_total,l_f,l_t,l_tau\n0,1.5,0.25,2,0\n1,0.333333333,0,0.333333333,0\n");
  std::ostringstream ls;
  write_labels_csv(ls, {2, 0});
  EXPECT_EQ(ls.str(), "track_id,label\n0,2\n1,0\n");
}

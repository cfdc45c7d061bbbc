#pragma once

#include <optional>

#include "lrtl/trajectory.hpp"

namespace lrtl {

/// Row-stochastic membership: N x K over tracks (point mode) or HW x K over
/// pixels (pixel mode).
struct SoftAssignment {
  enum class Mode { point, pixel };
  Matrix weights;
  Mode mode = Mode::point;

  /// Throws InvalidInput unless entries lie in [0, 1] and rows sum to 1.
  void validate(double tol = 1e-9) const;
};

/// Numerically stable row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

/// Pulls a gradient with respect to softmax outputs back to the logits:
/// dz_nk = a_nk (g_nk - sum_j a_nj g_nj).
Matrix softmax_backward(const Matrix& a, const Matrix& grad_a);

/// HW x 6 basis [x, x^2, y, y^2, xy, 1] over the pixel lattice with
/// x = col / (W - 1), y = row / (H - 1); row index y * W + x.
Matrix quad_embed(Index height, Index width);

/// Same basis evaluated at arbitrary normalised positions (n x 2).
Matrix quad_embed_points(const Matrix& xy);

// ---------------------------------------------------------------- flow loss

struct FlowLossValue {
  double value = 0.0;
  Vector per_segment;
};

/// sum_k ||M_k F - M_k E theta_k||^2 with theta_k the least-squares fit.
/// E is n x 6 (embedding rows), M is n x K, F is n x 2.
FlowLossValue flow_residual(const Matrix& embedding, const Matrix& masks, const Matrix& flow);

/// Gradient of flow_residual with respect to M, holding each theta_k at its
/// minimiser.
Matrix flow_residual_grad(const Matrix& embedding, const Matrix& masks, const Matrix& flow);

/// Pixel-mode flow loss; masks are HW x K over an H x W grid.
FlowLossValue flow_loss(const SoftAssignment& masks, const Matrix& flow, Index height, Index width);

/// Gradient of flow_loss with respect to pre-softmax pixel logits.
Matrix flow_loss_grad(const Matrix& logits, const Matrix& flow, Index height, Index width);

// ---------------------------------------------------------- trajectory loss

/// Trajectory matrix with columns invisible at the reference frame zeroed,
/// which removes them from every P_k.
Matrix effective_positions(const TrajectoryMatrix& p);

/// sum_k tail_singular_sum(P diag(A_k), r), A is N x K.
double traj_loss_lt(const Matrix& a, const Matrix& p, Index r = 5);
double traj_loss_lt(const SoftAssignment& a, const TrajectoryMatrix& p, Index r = 5);

/// dL_t / dA through the factors of each P_k (N x K).
Matrix traj_loss_lt_grad_weights(const Matrix& a, const Matrix& p, Index r = 5);

/// dL_t / d logits, chained through the row softmax.
Matrix traj_loss_lt_grad(const Matrix& logits, const Matrix& p, Index r = 5);
Matrix traj_loss_lt_grad(const Matrix& logits, const TrajectoryMatrix& p, Index r = 5);

/// sum_k ||P_k - truncate(svd(P_k), r)||_F^2.
double traj_loss_rec(const Matrix& a, const Matrix& p, Index r = 5);
double traj_loss_rec(const SoftAssignment& a, const TrajectoryMatrix& p, Index r = 5);

/// Per frame [x; y; 1] rows, each column scaled by its weight (3T x N).
Matrix homogeneous_lift(const Matrix& p, const Vector& weights);

/// Rank-4 residual of the homogeneous lift of each P_k.
double traj_loss_per(const Matrix& a, const Matrix& p);
double traj_loss_per(const SoftAssignment& a, const TrajectoryMatrix& p);

/// Loss value and gradient with respect to A, evaluated through the small
/// triangular factor of each P_k^T. Only U and the singular values are
/// formed, which is what the gradients need.
struct LossAndGrad {
  double value = 0.0;
  Matrix grad;  // N x K, with respect to A
};
LossAndGrad traj_lt_compact(const Matrix& a, const Matrix& p, Index r = 5);
LossAndGrad traj_rec_compact(const Matrix& a, const Matrix& p, Index r = 5);
LossAndGrad traj_per_compact(const Matrix& a, const Matrix& p);

/// Flow residual between consecutive frames with track displacements as
/// flow (in pixels) and the embedding at the earlier positions.
double tracks_as_flow_loss(const Matrix& a, const TrajectoryMatrix& p, Index height, Index width);
LossAndGrad tracks_as_flow_grad(const Matrix& a, const TrajectoryMatrix& p, Index height, Index width);

// ----------------------------------------------------------- temporal term

struct SampleResult {
  Matrix values;       // n x K
  Index clamped = 0;   // samples that fell outside the grid
};

/// Bilinear read of pixel-mode masks at normalised positions (n x 2).
SampleResult sample_assignment(const Matrix& masks, Index height, Index width, const Matrix& xy);

struct TemporalLoss {
  double value = 0.0;
  Index clamped = 0;
};

/// ||pi(M_t, P_t) - pi(M_{t+dt}, P_{t+dt})||^2 with bilinear pi.
TemporalLoss temporal_smooth_loss(const Matrix& masks_t, const Matrix& masks_t2, const TrajectoryMatrix& p,
                                  Index t, Index dt, Index height, Index width);

// --------------------------------------------------------------- combined

struct LossWeights {
  double lambda_f = 0.03;
  double lambda_t = 5e-5;
  double lambda_tau = 0.1;
};

struct LossBreakdown {
  double l_f = 0.0;
  double l_t = 0.0;
  double l_rec = 0.0;
  double l_per = 0.0;
  double l_tau = 0.0;
  double weighted_total = 0.0;
  LossWeights weights;
  Index r = 5;
};

/// Inputs of combined_loss. A term is evaluated when its inputs are set.
struct LossInputs {
  std::optional<Matrix> pixel_masks;        // HW x K at frame t
  std::optional<Matrix> pixel_masks_later;  // HW x K at frame t + dt
  std::optional<Matrix> flow;               // HW x 2
  Index height = 0;
  Index width = 0;
  std::optional<Matrix> point_assignment;   // N x K
  std::optional<TrajectoryMatrix> trajectories;
  Index t = 0;
  Index dt = 5;
  Index r = 5;
};

/// Throws InvalidInput when a term has positive weight but missing inputs.
LossBreakdown combined_loss(const LossInputs& in, const LossWeights& w);

}  // namespace lrtl

#include "lrtl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lrtl/errors.hpp"

namespace lrtl {

namespace {

void require_rank(Index r) {
  if (r < 1) throw RangeError("rank index must be at least 1, got " + std::to_string(r));
}

void require_point_shapes(const Matrix& a, const Matrix& p, const char* what) {
  require_finite(a, what);
  require_finite(p, what);
  if (a.rows() != p.cols()) {
    throw InvalidInput(std::string(what) + ": assignment has " + std::to_string(a.rows()) +
                       " rows but there are " + std::to_string(p.cols()) + " trajectories");
  }
  if (a.cols() < 1) throw InvalidInput(std::string(what) + ": assignment has no segments");
}

Matrix scaled_columns(const Matrix& p, const Eigen::Ref<const Vector>& w) {
  return p * w.asDiagonal();
}

double tail_sum(const Vector& sv, Index r) {
  const Index q = sv.size();
  return r > q ? 0.0 : sv.tail(q - r + 1).sum();
}

double tail_squares(const Vector& sv, Index r) {
  const Index q = sv.size();
  return r >= q ? 0.0 : sv.tail(q - r).squaredNorm();
}

/// Left singular vectors and singular values of P_k from the small
/// triangular factor of P_k^T, so only U and sigma are formed.
struct CompactFactors {
  Matrix U;
  Vector sigma;
};

CompactFactors compact_factors(const Matrix& pk) {
  CompactFactors f;
  if (pk.cols() > pk.rows()) {
    Eigen::HouseholderQR<Matrix> qr(pk.transpose());
    const Matrix rt = qr.matrixQR().topRows(pk.rows()).triangularView<Eigen::Upper>().toDenseMatrix().transpose();
    Eigen::JacobiSVD<Matrix> svd(rt, Eigen::ComputeFullU);
    f.U = svd.matrixU();
    f.sigma = svd.singularValues();
  } else {
    Eigen::JacobiSVD<Matrix> svd(pk, Eigen::ComputeThinU);
    f.U = svd.matrixU();
    f.sigma = svd.singularValues();
  }
  return f;
}

Matrix masked_weights(const Matrix& a, const TrajectoryMatrix& p) {
  Matrix out = a;
  const auto vis = p.reference_visible();
  for (Index n = 0; n < out.rows(); ++n) {
    if (!vis[static_cast<std::size_t>(n)]) out.row(n).setZero();
  }
  return out;
}

void require_assignment_matches(const SoftAssignment& a, const TrajectoryMatrix& p) {
  if (a.mode != SoftAssignment::Mode::point) throw InvalidInput("trajectory losses need a point-mode assignment");
  p.validate();
}

}  // namespace

void SoftAssignment::validate(double tol) const {
  require_finite(weights, "soft assignment");
  if (weights.size() == 0) throw InvalidInput("soft assignment is empty");
  if (weights.minCoeff() < 0.0 || weights.maxCoeff() > 1.0) {
    throw InvalidInput("soft assignment entries must lie in [0, 1]");
  }
  if (((weights.rowwise().sum().array() - 1.0).abs() > tol).any()) {
    throw InvalidInput("soft assignment rows must sum to 1");
  }
}

Matrix softmax_rows(const Matrix& logits) {
  require_finite(logits, "softmax");
  Matrix out = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

Matrix softmax_backward(const Matrix& a, const Matrix& grad_a) {
  const Vector inner = a.cwiseProduct(grad_a).rowwise().sum();
  return a.cwiseProduct(grad_a.colwise() - inner);
}

Matrix quad_embed(Index height, Index width) {
  if (height < 1 || width < 1) throw InvalidInput("quad_embed: grid must be at least 1 x 1");
  Matrix xy(height * width, 2);
  const double sx = width > 1 ? 1.0 / static_cast<double>(width - 1) : 0.0;
  const double sy = height > 1 ? 1.0 / static_cast<double>(height - 1) : 0.0;
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      xy(y * width + x, 0) = static_cast<double>(x) * sx;
      xy(y * width + x, 1) = static_cast<double>(y) * sy;
    }
  }
  return quad_embed_points(xy);
}

Matrix quad_embed_points(const Matrix& xy) {
  if (xy.cols() != 2) throw InvalidInput("quad_embed_points: positions must be n x 2");
  Matrix e(xy.rows(), 6);
  e.col(0) = xy.col(0);
  e.col(1) = xy.col(0).cwiseProduct(xy.col(0));
  e.col(2) = xy.col(1);
  e.col(3) = xy.col(1).cwiseProduct(xy.col(1));
  e.col(4) = xy.col(0).cwiseProduct(xy.col(1));
  e.col(5).setOnes();
  return e;
}

FlowLossValue flow_residual(const Matrix& embedding, const Matrix& masks, const Matrix& flow) {
  if (embedding.rows() != masks.rows() || flow.rows() != masks.rows()) {
    throw InvalidInput("flow loss: embedding, masks and flow need equal row counts (" +
                       std::to_string(embedding.rows()) + ", " + std::to_string(masks.rows()) + ", " +
                       std::to_string(flow.rows()) + ")");
  }
  require_finite(masks, "flow loss");
  require_finite(flow, "flow loss");
  FlowLossValue out;
  out.per_segment = Vector::Zero(masks.cols());
  for (Index k = 0; k < masks.cols(); ++k) {
    const Matrix ek = masks.col(k).asDiagonal() * embedding;
    const Matrix fk = masks.col(k).asDiagonal() * flow;
    const Matrix theta = lstsq(ek, fk);
    out.per_segment(k) = (fk - ek * theta).squaredNorm();
  }
  out.value = out.per_segment.sum();
  return out;
}

Matrix flow_residual_grad(const Matrix& embedding, const Matrix& masks, const Matrix& flow) {
  if (embedding.rows() != masks.rows() || flow.rows() != masks.rows()) {
    throw InvalidInput("flow loss: embedding, masks and flow need equal row counts");
  }
  Matrix g(masks.rows(), masks.cols());
  for (Index k = 0; k < masks.cols(); ++k) {
    const Matrix ek = masks.col(k).asDiagonal() * embedding;
    const Matrix fk = masks.col(k).asDiagonal() * flow;
    const Matrix theta = lstsq(ek, fk);
    const Vector r2 = (flow - embedding * theta).rowwise().squaredNorm();
    g.col(k) = 2.0 * masks.col(k).cwiseProduct(r2);
  }
  return g;
}

FlowLossValue flow_loss(const SoftAssignment& masks, const Matrix& flow, Index height, Index width) {
  if (masks.weights.rows() != height * width) {
    throw InvalidInput("flow_loss: masks have " + std::to_string(masks.weights.rows()) + " rows, grid has " +
                       std::to_string(height * width) + " pixels");
  }
  if (flow.cols() != 2) throw InvalidInput("flow_loss: flow must be HW x 2");
  return flow_residual(quad_embed(height, width), masks.weights, flow);
}

Matrix flow_loss_grad(const Matrix& logits, const Matrix& flow, Index height, Index width) {
  if (logits.rows() != height * width || flow.rows() != height * width || flow.cols() != 2) {
    throw InvalidInput("flow_loss_grad: logits and flow must cover the H x W grid");
  }
  const Matrix a = softmax_rows(logits);
  return softmax_backward(a, flow_residual_grad(quad_embed(height, width), a, flow));
}

Matrix effective_positions(const TrajectoryMatrix& p) {
  Matrix out = p.positions;
  const auto vis = p.reference_visible();
  for (Index n = 0; n < out.cols(); ++n) {
    if (!vis[static_cast<std::size_t>(n)]) out.col(n).setZero();
  }
  return out;
}

double traj_loss_lt(const Matrix& a, const Matrix& p, Index r) {
  require_rank(r);
  require_point_shapes(a, p, "traj_loss_lt");
  double total = 0.0;
  for (Index k = 0; k < a.cols(); ++k) total += tail_sum(singular_values(scaled_columns(p, a.col(k))), r);
  return total;
}

double traj_loss_lt(const SoftAssignment& a, const TrajectoryMatrix& p, Index r) {
  require_assignment_matches(a, p);
  return traj_loss_lt(a.weights, effective_positions(p), r);
}

Matrix traj_loss_lt_grad_weights(const Matrix& a, const Matrix& p, Index r) {
  require_rank(r);
  require_point_shapes(a, p, "traj_loss_lt_grad");
  Matrix g = Matrix::Zero(a.rows(), a.cols());
  for (Index k = 0; k < a.cols(); ++k) {
    const Matrix pk = scaled_columns(p, a.col(k));
    const auto f = svd(pk);
    if (r > f.sigma.size()) continue;
    const Matrix gk = tail_singular_grad(f, r);
    g.col(k) = gk.cwiseProduct(p).colwise().sum().transpose();
  }
  return g;
}

Matrix traj_loss_lt_grad(const Matrix& logits, const Matrix& p, Index r) {
  const Matrix a = softmax_rows(logits);
  return softmax_backward(a, traj_loss_lt_grad_weights(a, p, r));
}

Matrix traj_loss_lt_grad(const Matrix& logits, const TrajectoryMatrix& p, Index r) {
  p.validate();
  return traj_loss_lt_grad(logits, effective_positions(p), r);
}

double traj_loss_rec(const Matrix& a, const Matrix& p, Index r) {
  require_rank(r);
  require_point_shapes(a, p, "traj_loss_rec");
  double total = 0.0;
  for (Index k = 0; k < a.cols(); ++k) {
    const Matrix pk = scaled_columns(p, a.col(k));
    const auto f = svd(pk);
    if (r >= f.sigma.size()) continue;
    total += (pk - truncate(f, r)).squaredNorm();
  }
  return total;
}

double traj_loss_rec(const SoftAssignment& a, const TrajectoryMatrix& p, Index r) {
  require_assignment_matches(a, p);
  return traj_loss_rec(a.weights, effective_positions(p), r);
}

Matrix homogeneous_lift(const Matrix& p, const Vector& weights) {
  const Index T = p.rows() / 2;
  Matrix out(3 * T, p.cols());
  for (Index t = 0; t < T; ++t) {
    out.middleRows(3 * t, 2) = p.middleRows(2 * t, 2);
    out.row(3 * t + 2).setOnes();
  }
  return out * weights.asDiagonal();
}

double traj_loss_per(const Matrix& a, const Matrix& p) {
  require_point_shapes(a, p, "traj_loss_per");
  double total = 0.0;
  for (Index k = 0; k < a.cols(); ++k) total += tail_squares(singular_values(homogeneous_lift(p, a.col(k))), 4);
  return total;
}

double traj_loss_per(const SoftAssignment& a, const TrajectoryMatrix& p) {
  require_assignment_matches(a, p);
  return traj_loss_per(masked_weights(a.weights, p), p.positions);
}

LossAndGrad traj_lt_compact(const Matrix& a, const Matrix& p, Index r) {
  require_rank(r);
  require_point_shapes(a, p, "traj_loss_lt");
  LossAndGrad out{0.0, Matrix::Zero(a.rows(), a.cols())};
  for (Index k = 0; k < a.cols(); ++k) {
    const auto f = compact_factors(scaled_columns(p, a.col(k)));
    const Index q = f.sigma.size();
    if (r > q) continue;
    const Index tail = q - r + 1;
    out.value += f.sigma.tail(tail).sum();
    const double floor = 1e-12 * f.sigma(0);
    Vector inv = Vector::Zero(tail);
    for (Index i = 0; i < tail; ++i) {
      const double s = f.sigma(r - 1 + i);
      if (s > floor && s > 0.0) inv(i) = 1.0 / s;
    }
    const Matrix proj = f.U.rightCols(tail).transpose() * p;  // tail x N
    out.grad.col(k) = a.col(k).cwiseProduct(proj.cwiseAbs2().transpose() * inv);
  }
  return out;
}

LossAndGrad traj_rec_compact(const Matrix& a, const Matrix& p, Index r) {
  require_rank(r);
  require_point_shapes(a, p, "traj_loss_rec");
  LossAndGrad out{0.0, Matrix::Zero(a.rows(), a.cols())};
  for (Index k = 0; k < a.cols(); ++k) {
    const auto f = compact_factors(scaled_columns(p, a.col(k)));
    const Index q = f.sigma.size();
    if (r >= q) continue;
    out.value += f.sigma.tail(q - r).squaredNorm();
    const Matrix proj = f.U.leftCols(r).transpose() * p;
    const Vector resid = (p.colwise().squaredNorm() - proj.colwise().squaredNorm()).transpose().cwiseMax(0.0);
    out.grad.col(k) = 2.0 * a.col(k).cwiseProduct(resid);
  }
  return out;
}

LossAndGrad traj_per_compact(const Matrix& a, const Matrix& p) {
  require_point_shapes(a, p, "traj_loss_per");
  const Matrix lifted = homogeneous_lift(p, Vector::Ones(p.cols()));
  LossAndGrad out{0.0, Matrix::Zero(a.rows(), a.cols())};
  for (Index k = 0; k < a.cols(); ++k) {
    const auto f = compact_factors(lifted * a.col(k).asDiagonal());
    const Index q = f.sigma.size();
    if (q <= 4) continue;
    out.value += f.sigma.tail(q - 4).squaredNorm();
    const Matrix proj = f.U.leftCols(4).transpose() * lifted;
    const Vector resid =
        (lifted.colwise().squaredNorm() - proj.colwise().squaredNorm()).transpose().cwiseMax(0.0);
    out.grad.col(k) = 2.0 * a.col(k).cwiseProduct(resid);
  }
  return out;
}

namespace {

struct FramePair {
  Matrix embedding;
  Matrix flow;
};

std::vector<FramePair> frame_pairs(const TrajectoryMatrix& p, Index height, Index width) {
  if (p.frames() < 2) throw InvalidInput("tracks_as_flow: need at least 2 frames");
  if (height < 2 || width < 2) throw InvalidInput("tracks_as_flow: grid must be at least 2 x 2");
  std::vector<FramePair> pairs;
  for (Index t = 0; t + 1 < p.frames(); ++t) {
    const Matrix xy = p.frame_xy(t);
    Matrix d = p.frame_xy(t + 1) - xy;
    d.col(0) *= static_cast<double>(width - 1);
    d.col(1) *= static_cast<double>(height - 1);
    pairs.push_back({quad_embed_points(xy), d});
  }
  return pairs;
}

}  // namespace

double tracks_as_flow_loss(const Matrix& a, const TrajectoryMatrix& p, Index height, Index width) {
  p.validate();
  require_point_shapes(a, p.positions, "tracks_as_flow");
  const Matrix m = masked_weights(a, p);
  double total = 0.0;
  for (const auto& pair : frame_pairs(p, height, width)) total += flow_residual(pair.embedding, m, pair.flow).value;
  return total;
}

LossAndGrad tracks_as_flow_grad(const Matrix& a, const TrajectoryMatrix& p, Index height, Index width) {
  p.validate();
  require_point_shapes(a, p.positions, "tracks_as_flow");
  const Matrix m = masked_weights(a, p);
  LossAndGrad out{0.0, Matrix::Zero(a.rows(), a.cols())};
  for (const auto& pair : frame_pairs(p, height, width)) {
    out.value += flow_residual(pair.embedding, m, pair.flow).value;
    out.grad += flow_residual_grad(pair.embedding, m, pair.flow);
  }
  return out;
}

SampleResult sample_assignment(const Matrix& masks, Index height, Index width, const Matrix& xy) {
  if (masks.rows() != height * width) throw InvalidInput("sample_assignment: masks do not cover the grid");
  if (xy.cols() != 2) throw InvalidInput("sample_assignment: positions must be n x 2");
  SampleResult out;
  out.values.resize(xy.rows(), masks.cols());
  for (Index n = 0; n < xy.rows(); ++n) {
    double px = xy(n, 0) * static_cast<double>(width - 1);
    double py = xy(n, 1) * static_cast<double>(height - 1);
    const double cx = std::clamp(px, 0.0, static_cast<double>(width - 1));
    const double cy = std::clamp(py, 0.0, static_cast<double>(height - 1));
    if (cx != px || cy != py || !std::isfinite(px) || !std::isfinite(py)) ++out.clamped;
    px = std::isfinite(cx) ? cx : 0.0;
    py = std::isfinite(cy) ? cy : 0.0;
    const Index x0 = std::min<Index>(static_cast<Index>(std::floor(px)), std::max<Index>(width - 2, 0));
    const Index y0 = std::min<Index>(static_cast<Index>(std::floor(py)), std::max<Index>(height - 2, 0));
    const Index x1 = std::min<Index>(x0 + 1, width - 1);
    const Index y1 = std::min<Index>(y0 + 1, height - 1);
    const double fx = px - static_cast<double>(x0);
    const double fy = py - static_cast<double>(y0);
    out.values.row(n) = (1 - fx) * (1 - fy) * masks.row(y0 * width + x0) + fx * (1 - fy) * masks.row(y0 * width + x1) +
                        (1 - fx) * fy * masks.row(y1 * width + x0) + fx * fy * masks.row(y1 * width + x1);
  }
  return out;
}

TemporalLoss temporal_smooth_loss(const Matrix& masks_t, const Matrix& masks_t2, const TrajectoryMatrix& p,
                                  Index t, Index dt, Index height, Index width) {
  if (masks_t.rows() != masks_t2.rows() || masks_t.cols() != masks_t2.cols()) {
    throw InvalidInput("temporal_smooth_loss: mask grids differ in shape");
  }
  if (t < 0 || t + dt >= p.frames() || t + dt < 0) {
    throw RangeError("temporal_smooth_loss: frames " + std::to_string(t) + " and " + std::to_string(t + dt) +
                     " must lie in the window of " + std::to_string(p.frames()));
  }
  const auto a = sample_assignment(masks_t, height, width, p.frame_xy(t));
  const auto b = sample_assignment(masks_t2, height, width, p.frame_xy(t + dt));
  return {(a.values - b.values).squaredNorm(), a.clamped + b.clamped};
}

LossBreakdown combined_loss(const LossInputs& in, const LossWeights& w) {
  if (w.lambda_f < 0.0 || w.lambda_t < 0.0 || w.lambda_tau < 0.0) {
    throw InvalidInput("combined_loss: weights must be nonnegative");
  }
  LossBreakdown out;
  out.weights = w;
  out.r = in.r;
  if (in.pixel_masks && in.flow) {
    out.l_f = flow_loss({*in.pixel_masks, SoftAssignment::Mode::pixel}, *in.flow, in.height, in.width).value;
  } else if (w.lambda_f > 0.0) {
    throw InvalidInput("combined_loss: flow term weighted but pixel masks or flow missing");
  }
  if (in.point_assignment && in.trajectories) {
    const SoftAssignment a{*in.point_assignment, SoftAssignment::Mode::point};
    out.l_t = traj_loss_lt(a, *in.trajectories, in.r);
    out.l_rec = traj_loss_rec(a, *in.trajectories, in.r);
    out.l_per = traj_loss_per(a, *in.trajectories);
  } else if (w.lambda_t > 0.0) {
    throw InvalidInput("combined_loss: trajectory term weighted but assignment or trajectories missing");
  }
  if (in.pixel_masks && in.pixel_masks_later && in.trajectories) {
    out.l_tau = temporal_smooth_loss(*in.pixel_masks, *in.pixel_masks_later, *in.trajectories, in.t, in.dt,
                                     in.height, in.width)
                    .value;
  } else if (w.lambda_tau > 0.0) {
    throw InvalidInput("combined_loss: temporal term weighted but masks or trajectories missing");
  }
  out.weighted_total = w.lambda_f * out.l_f + w.lambda_t * out.l_t + w.lambda_tau * out.l_tau;
  return out;
}

}  // namespace lrtl

#include "lrtl/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

#include "lrtl/format.hpp"
#include "lrtl/rng.hpp"

namespace lrtl {

std::string to_string(TrajectoryLoss loss) {
  switch (loss) {
    case TrajectoryLoss::lt: return "lt";
    case TrajectoryLoss::rec: return "rec";
    case TrajectoryLoss::per: return "per";
    case TrajectoryLoss::taf: return "taf";
  }
  return "lt";
}

TrajectoryLoss trajectory_loss_from_string(const std::string& name) {
  if (name == "lt") return TrajectoryLoss::lt;
  if (name == "rec") return TrajectoryLoss::rec;
  if (name == "per") return TrajectoryLoss::per;
  if (name == "taf") return TrajectoryLoss::taf;
  throw ConfigError("unknown trajectory loss '" + name + "' (expected lt, rec, per or taf)");
}

void OptimConfig::validate() const {
  if (segments < 2) throw ConfigError("optimizer: K must be at least 2");
  if (steps < 1) throw ConfigError("optimizer: steps must be at least 1");
  if (r < 1) throw ConfigError("optimizer: r must be at least 1");
  if (!(step_size > 0.0)) throw ConfigError("optimizer: step_size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer: moment decays must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be positive");
  if (weights.lambda_f < 0.0 || weights.lambda_t < 0.0 || weights.lambda_tau < 0.0) {
    throw ConfigError("optimizer: loss weights must be nonnegative");
  }
  if (window_half_width < -1) throw ConfigError("optimizer: window_half_width must be -1 or nonnegative");
  if (height < 2 || width < 2) throw ConfigError("optimizer: image size must be at least 2 x 2");
}

NonFiniteLoss::NonFiniteLoss(const std::string& what, OptimTrace trace)
    : SolverDiverged(what), trace_(std::move(trace)) {}

namespace {

Matrix zero_hidden_rows(Matrix g, const std::vector<bool>& vis) {
  for (Index n = 0; n < g.rows(); ++n) {
    if (!vis[static_cast<std::size_t>(n)]) g.row(n).setZero();
  }
  return g;
}

}  // namespace

Objective evaluate_objective(const Matrix& logits, const TrajectoryMatrix& p, const std::optional<Matrix>& flow,
                             const OptimConfig& cfg) {
  const Matrix a = softmax_rows(logits);
  const auto vis = p.reference_visible();
  Objective out;
  Matrix grad_a = Matrix::Zero(a.rows(), a.cols());

  if (cfg.weights.lambda_t > 0.0) {
    LossAndGrad term;
    switch (cfg.trajectory_loss) {
      case TrajectoryLoss::lt: term = traj_lt_compact(a, effective_positions(p), cfg.r); break;
      case TrajectoryLoss::rec: term = traj_rec_compact(a, effective_positions(p), cfg.r); break;
      case TrajectoryLoss::per: term = traj_per_compact(zero_hidden_rows(a, vis), p.positions); break;
      case TrajectoryLoss::taf: term = tracks_as_flow_grad(a, p, cfg.height, cfg.width); break;
    }
    if (cfg.trajectory_loss == TrajectoryLoss::per) term.grad = zero_hidden_rows(term.grad, vis);
    out.value.l_t = term.value;
    grad_a += cfg.weights.lambda_t * term.grad;
  }

  if (cfg.weights.lambda_f > 0.0 && flow) {
    if (flow->rows() != cfg.height * cfg.width || flow->cols() != 2) {
      throw InvalidInput("optimizer: flow must be HW x 2 for the configured image size");
    }
    const Matrix xy = p.frame_xy(p.reference_frame);
    const Matrix f = sample_assignment(*flow, cfg.height, cfg.width, xy).values;
    const Matrix e = quad_embed_points(xy);
    const Matrix m = zero_hidden_rows(a, vis);
    out.value.l_f = flow_residual(e, m, f).value;
    grad_a += cfg.weights.lambda_f * zero_hidden_rows(flow_residual_grad(e, m, f), vis);
  }

  out.value.total = cfg.weights.lambda_f * out.value.l_f + cfg.weights.lambda_t * out.value.l_t +
                    cfg.weights.lambda_tau * out.value.l_tau;
  out.grad = softmax_backward(a, grad_a);
  return out;
}

bool has_converged(const std::vector<StepRecord>& steps) {
  if (steps.size() <= 100) return false;
  const double now = steps.back().total;
  const double before = steps[steps.size() - 101].total;
  return std::abs(now - before) <= 1e-7 * std::max(std::abs(before), 1e-12);
}

OptimResult optimize_sequence(const TrajectoryMatrix& input, const std::optional<Matrix>& flow,
                              const OptimConfig& cfg) {
  cfg.validate();
  input.validate();
  const TrajectoryMatrix p =
      cfg.window_half_width < 0 ? input : window(input, cfg.center_frame, cfg.window_half_width);
  if (p.points() < cfg.segments) {
    throw InvalidInput("optimizer: " + std::to_string(p.points()) + " tracks cannot fill K = " +
                       std::to_string(cfg.segments) + " segments");
  }
  const auto start = std::chrono::steady_clock::now();

  Rng rng = make_rng(cfg.seed, 3);
  std::normal_distribution<double> init(0.0, 0.01);
  Matrix logits(p.points(), cfg.segments);
  for (Index j = 0; j < logits.cols(); ++j) {
    for (Index i = 0; i < logits.rows(); ++i) logits(i, j) = init(rng);
  }

  Matrix m = Matrix::Zero(logits.rows(), logits.cols());
  Matrix v = Matrix::Zero(logits.rows(), logits.cols());
  double b1 = 1.0, b2 = 1.0;
  OptimTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(cfg.steps));

  for (Index step = 0; step < cfg.steps; ++step) {
    Objective obj = evaluate_objective(logits, p, flow, cfg);
    obj.value.step = step;
    if (!std::isfinite(obj.value.total) || !obj.grad.allFinite()) {
      trace.final_logits = logits;
      trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      throw NonFiniteLoss("optimizer: non-finite loss at step " + std::to_string(step), std::move(trace));
    }
    trace.steps.push_back(obj.value);
    if (cfg.early_stop && has_converged(trace.steps)) {
      trace.converged = true;
      break;
    }

    b1 *= cfg.beta1;
    b2 *= cfg.beta2;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * obj.grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * obj.grad.cwiseProduct(obj.grad);
    const double c1 = 1.0 / (1.0 - b1);
    const double c2 = 1.0 / (1.0 - b2);
    logits.array() -= cfg.step_size * (m.array() * c1) / ((v.array() * c2).sqrt() + cfg.epsilon);
  }

  trace.converged = trace.converged || has_converged(trace.steps);
  trace.final_logits = logits;
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {SoftAssignment{softmax_rows(logits), SoftAssignment::Mode::point}, std::move(trace)};
}

std::vector<int> hard_labels(const Matrix& weights) {
  std::vector<int> out(static_cast<std::size_t>(weights.rows()), 0);
  for (Index n = 0; n < weights.rows(); ++n) {
    Index best = 0;
    for (Index k = 1; k < weights.cols(); ++k) {
      if (weights(n, k) > weights(n, best)) best = k;
    }
    out[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> hard_labels(const SoftAssignment& a) { return hard_labels(a.weights); }

void write_trace_csv(std::ostream& os, const OptimTrace& trace) {
  os << "step,loss_total,l_f,l_t,l_tau\n";
  for (const auto& s : trace.steps) {
    os << s.step << ',' << format_real(s.total) << ',' << format_real(s.l_f) << ',' << format_real(s.l_t) << ','
       << format_real(s.l_tau) << '\n';
  }
}

void write_labels_csv(std::ostream& os, const std::vector<int>& labels) {
  os << "track_id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) os << i << ',' << labels[i] << '\n';
}

}  // namespace lrtl

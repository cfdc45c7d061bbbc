#include "lrtl/gradcheck.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "lrtl/errors.hpp"
#include "lrtl/format.hpp"
#include "lrtl/losses.hpp"
#include "lrtl/rng.hpp"

namespace lrtl {

void GradcheckConfig::validate() const {
  if (instances < 1) throw ConfigError("instances: need at least 1");
  if (frames < 1 || points < 2) throw ConfigError("frames/points: need frames >= 1 and points >= 2");
  if (segments < 1) throw ConfigError("segments: need at least 1");
  if (r < 1 || r > std::min(2 * frames, points)) throw ConfigError("r: must lie in [1, min(2T, N)]");
  if (height < 2 || width < 2) throw ConfigError("height/width: grid must be at least 2 x 2");
  if (!(step > 0.0)) throw ConfigError("step: must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance: must be positive");
  if (!(min_gap >= 0.0)) throw ConfigError("min_gap: must be nonnegative");
}

Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double fp = f(probe);
      probe(i, j) = orig - h;
      const double fm = f(probe);
      probe(i, j) = orig;
      g(i, j) = (fp - fm) / (2.0 * h);
    }
  }
  return g;
}

double relative_error(const Matrix& got, const Matrix& want) {
  const double denom = std::max({got.norm(), want.norm(), 1e-300});
  return (got - want).norm() / denom;
}

double tail_gap(const Matrix& weights, const Matrix& p, Index r) {
  double gap = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < weights.cols(); ++k) {
    const Vector s = singular_values(p * weights.col(k).asDiagonal());
    if (s.size() == 0 || !(s(0) > 0.0)) continue;
    const Index q = s.size();
    double g = s(q - 1);
    if (r >= 2 && r <= q) g = std::min(g, s(r - 2) - s(r - 1));
    gap = std::min(gap, g / s(0));
  }
  return gap;
}

namespace {

Matrix gaussian(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  }
  return m;
}

// Random matrix whose singular values r-1 and r (1-based) coincide.
Matrix repeated_spectrum(Index rows, Index cols, Index r, Rng& rng) {
  const Index q = std::min(rows, cols);
  Eigen::HouseholderQR<Matrix> qu(gaussian(rows, q, rng)), qv(gaussian(cols, q, rng));
  const Matrix u = qu.householderQ() * Matrix::Identity(rows, q);
  const Matrix v = qv.householderQ() * Matrix::Identity(cols, q);
  Vector s(q);
  for (Index i = 0; i < q; ++i) s(i) = static_cast<double>(q - i);
  if (r >= 2) s(r - 1) = s(r - 2);
  return u * s.asDiagonal() * v.transpose();
}

}  // namespace

GradcheckReport gradcheck(const GradcheckConfig& cfg) {
  cfg.validate();
  GradcheckReport report;
  const Index rows = 2 * cfg.frames;

  auto check_lt = [&](const Matrix& p, const Matrix& logits, Index instance) {
    GradcheckEntry e{"lt", instance, 0.0, false, {}};
    const double gap = tail_gap(softmax_rows(logits), p, cfg.r);
    if (!(gap > cfg.min_gap)) {
      e.skipped = true;
      e.warning = "singular-value gap " + format_real(gap) + " sigma_1 below " + format_real(cfg.min_gap) +
                  "; subgradient regime";
      ++report.skipped;
    } else {
      const auto f = [&](const Matrix& z) { return traj_loss_lt(softmax_rows(z), p, cfg.r); };
      e.rel_error = relative_error(traj_loss_lt_grad(logits, p, cfg.r), finite_difference(f, logits, cfg.step));
      report.max_error_lt = std::max(report.max_error_lt, e.rel_error);
      ++report.checked_lt;
    }
    report.entries.push_back(e);
  };

  Index drawn = 0;
  const Index max_draws = 10 * cfg.instances;
  while (report.checked_lt < cfg.instances && drawn < max_draws) {
    Rng rng = make_rng(cfg.seed, 8, static_cast<std::uint64_t>(drawn));
    const Matrix p = gaussian(rows, cfg.points, rng);
    const Matrix logits = gaussian(cfg.points, cfg.segments, rng);
    check_lt(p, logits, drawn++);
  }
  if (cfg.degenerate) {
    Rng rng = make_rng(cfg.seed, 9);
    check_lt(repeated_spectrum(rows, cfg.points, cfg.r, rng), Matrix::Zero(cfg.points, cfg.segments), drawn);
  }

  const Index pixels = cfg.height * cfg.width;
  for (Index i = 0; i < cfg.instances; ++i) {
    Rng rng = make_rng(cfg.seed, 10, static_cast<std::uint64_t>(i));
    const Matrix flow = gaussian(pixels, 2, rng);
    const Matrix logits = gaussian(pixels, cfg.segments, rng);
    const auto f = [&](const Matrix& z) {
      return flow_loss({softmax_rows(z), SoftAssignment::Mode::pixel}, flow, cfg.height, cfg.width).value;
    };
    GradcheckEntry e{"flow", i, 0.0, false, {}};
    e.rel_error = relative_error(flow_loss_grad(logits, flow, cfg.height, cfg.width),
                                 finite_difference(f, logits, cfg.step));
    report.max_error_flow = std::max(report.max_error_flow, e.rel_error);
    ++report.checked_flow;
    report.entries.push_back(e);
  }

  report.passed = report.checked_lt == cfg.instances && report.max_error_lt < cfg.tolerance &&
                  report.max_error_flow < cfg.tolerance;
  return report;
}

}  // namespace lrtl

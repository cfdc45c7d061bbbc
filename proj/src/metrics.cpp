#include "lrtl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "lrtl/errors.hpp"

namespace lrtl {

namespace {

double comb2(double x) { return 0.5 * x * (x - 1.0); }

std::map<int, Index> dense_ids(const std::vector<int>& labels) {
  std::map<int, Index> ids;
  for (int l : labels) ids.emplace(l, 0);
  Index next = 0;
  for (auto& [label, id] : ids) id = next++;
  return ids;
}

}  // namespace

std::vector<int> distinct_labels(const std::vector<int>& labels) {
  std::vector<int> out(labels);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ContingencyTable contingency(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) {
    throw InvalidInput("contingency: " + std::to_string(pred.size()) + " predictions vs " +
                       std::to_string(truth.size()) + " true labels");
  }
  const auto pi = dense_ids(pred);
  const auto ti = dense_ids(truth);
  ContingencyTable t;
  t.counts = Eigen::MatrixXd::Zero(static_cast<Index>(pi.size()), static_cast<Index>(ti.size()));
  for (std::size_t n = 0; n < pred.size(); ++n) t.counts(pi.at(pred[n]), ti.at(truth[n])) += 1.0;
  t.pred_marginals = t.counts.rowwise().sum();
  t.true_marginals = t.counts.colwise().sum().transpose();
  t.total = static_cast<Index>(pred.size());
  return t;
}

double ari(const std::vector<int>& pred, const std::vector<int>& truth) {
  const ContingencyTable t = contingency(pred, truth);
  if (t.total < 2) throw UndefinedMetric("ari: need at least 2 elements");
  const double index = t.counts.unaryExpr([](double x) { return comb2(x); }).sum();
  const double sa = t.pred_marginals.unaryExpr([](double x) { return comb2(x); }).sum();
  const double sb = t.true_marginals.unaryExpr([](double x) { return comb2(x); }).sum();
  const double expected = sa * sb / comb2(static_cast<double>(t.total));
  const double max_index = 0.5 * (sa + sb);
  const double denom = max_index - expected;
  if (denom == 0.0) return 0.0;
  return (index - expected) / denom;
}

double fg_ari(const std::vector<int>& pred, const std::vector<int>& truth, const std::vector<bool>& fg_mask) {
  if (pred.size() != truth.size() || fg_mask.size() != truth.size()) {
    throw InvalidInput("fg_ari: predictions, labels and foreground mask differ in length");
  }
  std::vector<int> p, t;
  for (std::size_t n = 0; n < pred.size(); ++n) {
    if (fg_mask[n]) {
      p.push_back(pred[n]);
      t.push_back(truth[n]);
    }
  }
  if (p.size() < 2) throw UndefinedMetric("fg_ari: fewer than 2 foreground elements");
  return ari(p, t);
}

double fg_ari(const std::vector<int>& pred, const std::vector<int>& truth, int background) {
  std::vector<bool> fg(truth.size());
  for (std::size_t n = 0; n < truth.size(); ++n) fg[n] = truth[n] != background;
  return fg_ari(pred, truth, fg);
}

double purity(const std::vector<int>& pred, const std::vector<int>& truth) {
  const ContingencyTable t = contingency(pred, truth);
  if (t.total == 0) throw UndefinedMetric("purity: no elements");
  return t.counts.rowwise().maxCoeff().sum() / static_cast<double>(t.total);
}

namespace {

struct TightGraph {
  const Matrix& c;
  const Vector& u;
  const Vector& v;
  double tol;
  [[nodiscard]] bool tight(Index i, Index j) const { return c(i, j) - u(i + 1) - v(j + 1) <= tol; }
};

// Augmenting path from `row` to a free column over tight edges, rerouting
// only rows above `fixed`.
bool reroute(const TightGraph& g, Index row, Index fixed, std::vector<int>& mr, std::vector<int>& mc,
             std::vector<char>& seen) {
  const Index n = static_cast<Index>(mr.size());
  for (Index j = 0; j < n; ++j) {
    if (seen[static_cast<std::size_t>(j)] || !g.tight(row, j)) continue;
    seen[static_cast<std::size_t>(j)] = 1;
    const int owner = mc[static_cast<std::size_t>(j)];
    if (owner < 0 || (owner > fixed && reroute(g, owner, fixed, mr, mc, seen))) {
      mr[static_cast<std::size_t>(row)] = static_cast<int>(j);
      mc[static_cast<std::size_t>(j)] = static_cast<int>(row);
      return true;
    }
  }
  return false;
}

}  // namespace

Matching hungarian(const Matrix& cost) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  Matching out;
  out.row_to_col.assign(static_cast<std::size_t>(n), -1);
  if (n == 0 || m == 0) return out;
  if (!cost.allFinite()) throw InvalidInput("hungarian: cost matrix has non-finite entries");

  const Index size = std::max(n, m);
  const double scale = std::max(1.0, cost.cwiseAbs().maxCoeff());
  Matrix c = Matrix::Constant(size, size, scale + 1.0);
  c.topLeftCorner(n, m) = cost;

  const double inf = std::numeric_limits<double>::infinity();
  Vector u = Vector::Zero(size + 1), v = Vector::Zero(size + 1);
  std::vector<Index> p(static_cast<std::size_t>(size + 1), 0), way(static_cast<std::size_t>(size + 1), 0);
  for (Index i = 1; i <= size; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(size + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(size + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= size; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = c(i0 - 1, j - 1) - u(i0) - v(j);
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= size; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u(p[static_cast<std::size_t>(j)]) += delta;
          v(j) -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> mr(static_cast<std::size_t>(size)), mc(static_cast<std::size_t>(size));
  for (Index j = 1; j <= size; ++j) {
    mc[static_cast<std::size_t>(j - 1)] = static_cast<int>(p[static_cast<std::size_t>(j)] - 1);
    mr[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = static_cast<int>(j - 1);
  }

  // Every optimal matching uses only tight edges of the optimal duals, so the
  // lexicographically smallest one is found greedily row by row.
  const TightGraph g{c, u, v, 1e-9 * scale};
  for (Index i = 0; i < size; ++i) {
    for (Index j = 0; j < mr[static_cast<std::size_t>(i)]; ++j) {
      if (!g.tight(i, j)) continue;
      const auto saved_r = mr;
      const auto saved_c = mc;
      const int old = mr[static_cast<std::size_t>(i)];
      const int displaced = mc[static_cast<std::size_t>(j)];
      mr[static_cast<std::size_t>(i)] = static_cast<int>(j);
      mc[static_cast<std::size_t>(j)] = static_cast<int>(i);
      mc[static_cast<std::size_t>(old)] = -1;
      mr[static_cast<std::size_t>(displaced)] = -1;
      std::vector<char> seen(static_cast<std::size_t>(size), 0);
      seen[static_cast<std::size_t>(j)] = 1;
      if (displaced > i && reroute(g, displaced, i, mr, mc, seen)) break;
      mr = saved_r;
      mc = saved_c;
    }
  }

  for (Index i = 0; i < n; ++i) {
    const int j = mr[static_cast<std::size_t>(i)];
    if (j < m) {
      out.row_to_col[static_cast<std::size_t>(i)] = j;
      out.cost += cost(i, j);
    }
  }
  return out;
}

double iou(const MaskSet& a, Index i, const MaskSet& b, Index j) {
  Index inter = 0, uni = 0;
  for (Index x = 0; x < a.cols(); ++x) {
    inter += a(i, x) && b(j, x);
    uni += a(i, x) || b(j, x);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double jaccard_matched(const MaskSet& pred, const MaskSet& truth) {
  if (truth.rows() == 0) throw UndefinedMetric("jaccard_matched: no true masks");
  if (pred.cols() != truth.cols()) {
    throw InvalidInput("jaccard_matched: predicted and true masks cover different pixel counts");
  }
  Matrix cost(pred.rows(), truth.rows());
  for (Index i = 0; i < pred.rows(); ++i) {
    for (Index j = 0; j < truth.rows(); ++j) cost(i, j) = -iou(pred, i, truth, j);
  }
  const Matching match = hungarian(cost);
  return -match.cost / static_cast<double>(truth.rows());
}

MaskSet masks_from_labels(const std::vector<int>& labels, const std::vector<int>& ids) {
  MaskSet out = MaskSet::Constant(static_cast<Index>(ids.size()), static_cast<Index>(labels.size()), false);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    for (std::size_t n = 0; n < labels.size(); ++n) {
      out(static_cast<Index>(k), static_cast<Index>(n)) = labels[n] == ids[k];
    }
  }
  return out;
}

double track_jaccard(const std::vector<int>& pred, const std::vector<int>& truth, const BoolMatrix& visible) {
  if (pred.size() != truth.size() || visible.cols() != static_cast<Index>(truth.size())) {
    throw InvalidInput("track_jaccard: labels and visibility disagree in track count");
  }
  double sum = 0.0;
  Index frames = 0;
  for (Index t = 0; t < visible.rows(); ++t) {
    std::vector<int> p, g;
    for (Index n = 0; n < visible.cols(); ++n) {
      if (visible(t, n)) {
        p.push_back(pred[static_cast<std::size_t>(n)]);
        g.push_back(truth[static_cast<std::size_t>(n)]);
      }
    }
    if (g.empty()) continue;
    sum += jaccard_matched(masks_from_labels(p, distinct_labels(p)), masks_from_labels(g, distinct_labels(g)));
    ++frames;
  }
  if (frames == 0) throw UndefinedMetric("track_jaccard: no visible tracks in any frame");
  return sum / static_cast<double>(frames);
}

MetricReport evaluate_labels(const std::vector<int>& pred, const std::vector<int>& truth, const BoolMatrix& visible,
                             int background) {
  MetricReport r;
  r.ari = ari(pred, truth);
  try {
    r.fg_ari = fg_ari(pred, truth, background);
  } catch (const UndefinedMetric&) {
    r.fg_ari = std::numeric_limits<double>::quiet_NaN();
  }
  r.jaccard = track_jaccard(pred, truth, visible);
  r.k_pred = static_cast<Index>(distinct_labels(pred).size());
  r.k_true = static_cast<Index>(distinct_labels(truth).size());
  return r;
}

}  // namespace lrtl

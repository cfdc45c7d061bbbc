#include "lrtl/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "lrtl/errors.hpp"
#include "lrtl/format.hpp"
#include "lrtl/rng.hpp"

namespace lrtl {

std::vector<LabelGrid> corrupt_noise(const std::vector<LabelGrid>& masks, double eta, int num_classes,
                                     std::uint64_t seed) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw RangeError("corrupt_noise: eta must lie in [0, 1]");
  if (num_classes < 1) throw RangeError("corrupt_noise: need at least one class");
  std::vector<LabelGrid> out = masks;
  if (eta == 0.0) return out;
  Rng rng = make_rng(seed, 6);
  std::bernoulli_distribution flip(eta);
  std::uniform_int_distribution<int> pick(0, num_classes - 1);
  for (auto& grid : out) {
    for (Index i = 0; i < grid.size(); ++i) {
      if (flip(rng)) grid.data()[i] = pick(rng);
    }
  }
  return out;
}

namespace {

std::vector<int> object_ids(const std::vector<LabelGrid>& masks, int background) {
  std::vector<int> ids;
  for (const auto& g : masks) {
    for (Index i = 0; i < g.size(); ++i) {
      if (g.data()[i] != background) ids.push_back(g.data()[i]);
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

// Split threshold per frame along the chosen axis; NaN when the object is absent.
std::vector<double> centroids(const std::vector<LabelGrid>& masks, int id, int axis) {
  std::vector<double> out;
  for (const auto& g : masks) {
    double sum = 0.0;
    Index count = 0;
    for (Index y = 0; y < g.rows(); ++y) {
      for (Index x = 0; x < g.cols(); ++x) {
        if (g(y, x) == id) {
          sum += static_cast<double>(axis == 0 ? x : y);
          ++count;
        }
      }
    }
    out.push_back(count > 0 ? sum / static_cast<double>(count) : std::nan(""));
  }
  return out;
}

bool both_sides_filled(const std::vector<LabelGrid>& masks, int id, int axis, const std::vector<double>& cut) {
  for (std::size_t t = 0; t < masks.size(); ++t) {
    if (std::isnan(cut[t])) continue;
    bool low = false, high = false;
    const auto& g = masks[t];
    for (Index y = 0; y < g.rows(); ++y) {
      for (Index x = 0; x < g.cols(); ++x) {
        if (g(y, x) != id) continue;
        (static_cast<double>(axis == 0 ? x : y) >= cut[t] ? high : low) = true;
      }
    }
    if (!low || !high) return false;
  }
  return true;
}

}  // namespace

StructuralResult corrupt_structural(const std::vector<LabelGrid>& masks, int s, std::uint64_t seed, int background) {
  StructuralResult out{masks, {}};
  if (s == 0) return out;
  std::vector<int> ids = object_ids(masks, background);
  const int count = std::abs(s);
  if (count > static_cast<int>(ids.size())) {
    throw RangeError("corrupt_structural: |s| = " + std::to_string(count) + " exceeds " +
                     std::to_string(ids.size()) + " objects");
  }
  Rng rng = make_rng(seed, 7);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(count));

  if (s < 0) {
    for (auto& g : out.masks) {
      for (Index i = 0; i < g.size(); ++i) {
        if (std::find(ids.begin(), ids.end(), g.data()[i]) != ids.end()) g.data()[i] = background;
      }
    }
    return out;
  }

  int next = background;
  for (const auto& g : masks) next = std::max(next, g.maxCoeff());
  std::bernoulli_distribution coin(0.5);
  for (int id : ids) {
    bool done = false;
    for (int attempt = 0; attempt < 8 && !done; ++attempt) {
      const int axis = coin(rng) ? 1 : 0;
      const auto cut = centroids(out.masks, id, axis);
      if (!both_sides_filled(out.masks, id, axis, cut)) continue;
      const int fresh = ++next;
      for (std::size_t t = 0; t < out.masks.size(); ++t) {
        auto& g = out.masks[t];
        for (Index y = 0; y < g.rows(); ++y) {
          for (Index x = 0; x < g.cols(); ++x) {
            if (g(y, x) == id && static_cast<double>(axis == 0 ? x : y) >= cut[t]) g(y, x) = fresh;
          }
        }
      }
      done = true;
    }
    if (!done) out.diagnostics.push_back("object " + std::to_string(id) + " too thin to split; skipped");
  }
  return out;
}

Matrix temperature_assignment(const std::vector<int>& labels, double tau, int num_classes, double logit_scale) {
  if (!(tau > 0.0)) throw RangeError("temperature: tau must be positive");
  Matrix logits = Matrix::Zero(static_cast<Index>(labels.size()), num_classes);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || labels[n] >= num_classes) {
      throw InvalidInput("temperature: label " + std::to_string(labels[n]) + " outside " +
                         std::to_string(num_classes) + " classes");
    }
    logits(static_cast<Index>(n), labels[n]) = logit_scale / tau;
  }
  return softmax_rows(logits);
}

SoftAssignment corrupt_temperature(const LabelGrid& mask, double tau, int num_classes, double logit_scale) {
  const std::vector<int> labels(mask.data(), mask.data() + mask.size());
  return {temperature_assignment(labels, tau, num_classes, logit_scale), SoftAssignment::Mode::pixel};
}

std::vector<int> labels_at_points(const LabelGrid& mask, const Matrix& xy) {
  std::vector<int> out(static_cast<std::size_t>(xy.rows()));
  const double sx = static_cast<double>(mask.cols() - 1), sy = static_cast<double>(mask.rows() - 1);
  for (Index n = 0; n < xy.rows(); ++n) {
    const Index x = std::clamp<Index>(static_cast<Index>(std::lround(xy(n, 0) * sx)), 0, mask.cols() - 1);
    const Index y = std::clamp<Index>(static_cast<Index>(std::lround(xy(n, 1) * sy)), 0, mask.rows() - 1);
    out[static_cast<std::size_t>(n)] = mask(y, x);
  }
  return out;
}

SweepGrid SweepGrid::defaults(int objects) {
  SweepGrid g;
  const int m = std::min(4, objects);
  g.structure.clear();
  for (int s = -m; s <= m; ++s) g.structure.push_back(s);
  return g;
}

void SweepGrid::validate(int objects) const {
  if (etas.empty() || structure.empty() || taus.empty()) throw ConfigError("sweep: every axis needs a value");
  for (double e : etas) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("sweep: eta values must lie in [0, 1]");
  }
  for (double t : taus) {
    if (!(t > 0.0)) throw ConfigError("sweep: tau values must be positive");
  }
  for (int s : structure) {
    if (std::abs(s) > objects) {
      throw ConfigError("sweep: |s| = " + std::to_string(std::abs(s)) + " exceeds " + std::to_string(objects) +
                        " objects");
    }
  }
  if (trials < 1) throw ConfigError("sweep: trials must be at least 1");
  if (r < 1) throw ConfigError("sweep: r must be at least 1");
  if (noise_classes < 0) throw ConfigError("sweep: noise_classes must be nonnegative");
  if (!(logit_scale > 0.0)) throw ConfigError("sweep: logit_scale must be positive");
}

const SweepCell& SweepResult::at(double eta, int s, double tau) const {
  for (const auto& c : cells) {
    if (c.eta == eta && c.s == s && c.tau == tau) return c;
  }
  throw RangeError("sweep: no cell at eta=" + format_real(eta) + " s=" + std::to_string(s) +
                   " tau=" + format_real(tau));
}

double assignment_loss(const Matrix& a, const TrajectoryMatrix& p, TrajectoryLoss loss, Index r, Index height,
                       Index width) {
  const SoftAssignment sa{a, SoftAssignment::Mode::point};
  switch (loss) {
    case TrajectoryLoss::lt: return traj_loss_lt(sa, p, r);
    case TrajectoryLoss::rec: return traj_loss_rec(sa, p, r);
    case TrajectoryLoss::per: return traj_loss_per(sa, p);
    case TrajectoryLoss::taf: return tracks_as_flow_loss(a, p, height, width);
  }
  return 0.0;
}

SweepResult sweep(const SceneTruth& scene, const SweepGrid& grid) {
  const auto ref = static_cast<std::size_t>(scene.trajectories.reference_frame);
  return sweep(scene.trajectories, scene.masks.at(ref), scene.num_labels(), grid);
}

SweepResult sweep(const TrajectoryMatrix& p, const LabelGrid& reference_mask, int num_labels, const SweepGrid& grid) {
  grid.validate(num_labels - 1);
  p.validate();
  const std::vector<LabelGrid> base{reference_mask};
  const Matrix xy = p.frame_xy(p.reference_frame);
  const Index height = reference_mask.rows(), width = reference_mask.cols();

  SweepResult result;
  for (bool v : p.reference_visible()) result.tracks += v;
  const int auto_classes = std::max(20, num_labels);
  const int noise_classes = grid.noise_classes > 0 ? grid.noise_classes : auto_classes;

  std::uint64_t cell_index = 0;
  for (int s : grid.structure) {
    for (double eta : grid.etas) {
      for (double tau : grid.taus) {
        std::vector<double> values;
        for (Index trial = 0; trial < grid.trials; ++trial) {
          const Rng::result_type trial_seed =
              make_rng(grid.seed, 16 + cell_index, static_cast<std::uint64_t>(trial))();
          StructuralResult st = corrupt_structural(base, s, trial_seed);
          for (auto& d : st.diagnostics) result.diagnostics.push_back(std::move(d));
          const auto noisy = corrupt_noise(st.masks, eta, noise_classes, trial_seed + 1);
          const auto labels = labels_at_points(noisy.front(), xy);
          const int classes = std::max(noise_classes, *std::max_element(labels.begin(), labels.end()) + 1);
          const Matrix a = temperature_assignment(labels, tau, classes, grid.logit_scale);
          values.push_back(assignment_loss(a, p, grid.loss, grid.r, height, width));
        }
        SweepCell cell;
        cell.eta = eta;
        cell.s = s;
        cell.tau = tau;
        cell.trials = grid.trials;
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        cell.loss_mean = mean;
        cell.loss_std = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
        cell.loss_mean_per_track = result.tracks > 0 ? mean / static_cast<double>(result.tracks) : 0.0;
        result.cells.push_back(cell);
        ++cell_index;
      }
    }
  }
  return result;
}

namespace {

std::string cell_name(const SweepCell& c) {
  return "cell (eta=" + format_real(c.eta) + ", s=" + std::to_string(c.s) + ", tau=" + format_real(c.tau) +
         ") loss " + format_real(c.loss_mean);
}

// Non-decreasing along the path and a rise of margin * range between its ends.
CheckOutcome monotone(const std::string& name, const std::vector<const SweepCell*>& path, double range,
                      const SweepChecks& checks) {
  CheckOutcome out{name, true, {}};
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (path[i]->loss_mean < path[i - 1]->loss_mean - checks.tolerance * range) {
      out.passed = false;
      out.detail = cell_name(*path[i]) + " < " + cell_name(*path[i - 1]);
      return out;
    }
  }
  if (path.size() >= 2 && !(path.back()->loss_mean - path.front()->loss_mean > checks.margin * range)) {
    out.passed = false;
    out.detail = cell_name(*path.back()) + " does not exceed " + cell_name(*path.front()) + " by " +
                 format_real(checks.margin) + " of the range " + format_real(range);
  }
  return out;
}

}  // namespace

std::vector<CheckOutcome> check_sweep(const SweepResult& result, const SweepGrid& grid, const SweepChecks& checks) {
  std::vector<CheckOutcome> out;
  if (result.cells.empty()) return out;
  const bool needs_clean = checks.eta_monotone || checks.tau_monotone || checks.asymmetry || checks.min_at_truth;
  if (needs_clean && std::find(grid.structure.begin(), grid.structure.end(), 0) == grid.structure.end()) {
    throw ConfigError("sweep assertions need s = 0 on the grid");
  }
  const double eta0 = *std::min_element(grid.etas.begin(), grid.etas.end());
  const double tau0 = *std::min_element(grid.taus.begin(), grid.taus.end());
  double lo = result.cells.front().loss_mean, hi = lo;
  for (const auto& c : result.cells) {
    lo = std::min(lo, c.loss_mean);
    hi = std::max(hi, c.loss_mean);
  }
  const double range = hi - lo;

  if (checks.eta_monotone) {
    std::vector<double> etas = grid.etas;
    std::sort(etas.begin(), etas.end());
    std::vector<const SweepCell*> path;
    for (double e : etas) path.push_back(&result.at(e, 0, tau0));
    out.push_back(monotone("eta_monotone", path, range, checks));
  }
  if (checks.tau_monotone) {
    std::vector<double> taus = grid.taus;
    std::sort(taus.begin(), taus.end());
    std::vector<const SweepCell*> path;
    for (double t : taus) path.push_back(&result.at(eta0, 0, t));
    out.push_back(monotone("tau_monotone", path, range, checks));
  }
  if (checks.asymmetry) {
    CheckOutcome o{"asymmetry", true, {}};
    bool any = false;
    for (int m : {1, 2}) {
      const auto has = [&](int s) { return std::find(grid.structure.begin(), grid.structure.end(), s) != grid.structure.end(); };
      if (!has(m) || !has(-m)) continue;
      any = true;
      const auto& under = result.at(eta0, -m, tau0);
      const auto& over = result.at(eta0, m, tau0);
      if (!(under.loss_mean > over.loss_mean) && o.passed) {
        o.passed = false;
        o.detail = cell_name(under) + " <= " + cell_name(over);
      }
    }
    if (!any) throw ConfigError("asymmetry assertion needs s = -1 and s = +1 on the grid");
    out.push_back(o);
  }
  if (checks.min_at_truth) {
    CheckOutcome o{"min_at_truth", true, {}};
    const auto& clean = result.at(eta0, 0, tau0);
    for (const auto& c : result.cells) {
      if (c.loss_mean < clean.loss_mean - checks.tolerance * range) {
        o.passed = false;
        o.detail = cell_name(c) + " < " + cell_name(clean);
        break;
      }
    }
    out.push_back(o);
  }
  return out;
}

void write_sweep_csv(std::ostream& os, const SweepResult& result) {
  os << "eta,s,tau,trials,loss_mean,loss_std,loss_mean_per_track\n";
  for (const auto& c : result.cells) {
    os << format_real(c.eta) << ',' << c.s << ',' << format_real(c.tau) << ',' << c.trials << ','
       << format_real(c.loss_mean) << ',' << format_real(c.loss_std) << ',' << format_real(c.loss_mean_per_track)
       << '\n';
  }
}

}  // namespace lrtl

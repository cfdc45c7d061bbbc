#include "lrtl/commands.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "lrtl/baselines.hpp"
#include "lrtl/feasibility.hpp"
#include "lrtl/format.hpp"
#include "lrtl/gradcheck.hpp"
#include "lrtl/io.hpp"
#include "lrtl/metrics.hpp"
#include "lrtl/optimizer.hpp"

namespace lrtl {

namespace fs = std::filesystem;

namespace {

Json load_config(const CommandOptions& opt) {
  if (opt.config.empty()) return Json::object();
  return read_json(opt.config);
}

fs::path require_out(const CommandOptions& opt) {
  if (opt.out.empty()) throw ConfigError("--out: output directory required");
  std::error_code ec;
  fs::create_directories(opt.out, ec);
  if (ec) throw IoError("cannot create " + opt.out + ": " + ec.message());
  return opt.out;
}

fs::path require_scene(const CommandOptions& opt, ConfigReader& reader) {
  std::string scene;
  reader.get("scene", scene);
  if (!opt.scene.empty()) scene = opt.scene;
  if (scene.empty()) throw ConfigError("--scene: scene directory required");
  return scene;
}

Json real_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string csv_real(double v) { return std::isfinite(v) ? format_real(v) : std::string("nan"); }

// Largest sigma_5 / sigma_1 over ground-truth groups with at least 5 tracks.
double rank_ratio(const TrajectoryMatrix& p, int num_labels) {
  double worst = 0.0;
  for (int k = 0; k < num_labels; ++k) {
    const auto cols = group_columns(p, k);
    if (cols.size() < 5) continue;
    const Vector s = singular_values(select_points(p, cols).positions);
    if (s.size() < 5 || !(s(0) > 0.0)) continue;
    worst = std::max(worst, s(4) / s(0));
  }
  return worst;
}

}  // namespace

ExitCode cmd_synth(const CommandOptions& opt, std::ostream& out, std::ostream&) {
  const Json config = load_config(opt);
  ConfigReader reader(config, "");
  SceneConfig cfg;
  scene_config_from_json(reader, cfg);
  reader.get("seed", cfg.motion_seed);
  reader.finish();
  if (opt.seed) cfg.motion_seed = *opt.seed;
  cfg.validate();
  const fs::path dir = require_out(opt);

  const SceneTruth scene = make_scene(cfg);
  write_scene(dir, scene);
  const auto& p = scene.trajectories;
  const double ratio = rank_ratio(p, scene.num_labels());
  std::string check = "n/a";
  if (cfg.mode == CameraMode::rigid3d_affine) check = ratio < 1e-8 ? "pass" : "fail";
  out << "synth: N=" << p.points() << " T=" << p.frames() << " K_gt=" << scene.num_labels() - 1
      << " mode=" << to_string(cfg.mode) << " rank_ratio=" << format_real(ratio) << " rank_check=" << check
      << '\n';
  return ExitCode::ok;
}

ExitCode cmd_segment(const CommandOptions& opt, std::ostream& out, std::ostream&) {
  const Json config = load_config(opt);
  ConfigReader reader(config, "");
  const fs::path scene_dir = require_scene(opt, reader);
  std::string method = "lrtl";
  reader.get("method", method);
  if (!opt.method.empty()) method = opt.method;
  std::uint64_t seed = 0;
  reader.get("seed", seed);
  if (opt.seed) seed = *opt.seed;
  if (opt.format != "json" && opt.format != "csv") throw ConfigError("--format: expected json or csv");

  OptimConfig oc;
  oc.weights = {0.0, 1.0, 0.0};
  reader.get("segments", oc.segments);
  reader.get("steps", oc.steps);
  reader.get("r", oc.r);
  reader.get("step_size", oc.step_size);
  reader.get("beta1", oc.beta1);
  reader.get("beta2", oc.beta2);
  reader.get("epsilon", oc.epsilon);
  if (reader.has("weights")) {
    ConfigReader w(reader.at("weights"), "weights");
    w.get("lambda_f", oc.weights.lambda_f);
    w.get("lambda_t", oc.weights.lambda_t);
    w.get("lambda_tau", oc.weights.lambda_tau);
    w.finish();
  }
  std::string loss = to_string(oc.trajectory_loss);
  reader.get("trajectory_loss", loss);
  reader.get("window_half_width", oc.window_half_width);
  reader.get("center_frame", oc.center_frame);
  reader.get("early_stop", oc.early_stop);
  Index k_min = 2, k_max = 8, k = 0;
  reader.get("k_min", k_min);
  reader.get("k_max", k_max);
  reader.get("k", k);
  BaselineParams bp;
  reader.get("ssc_alpha", bp.ssc_alpha);
  reader.get("lrr_lambda", bp.lrr_lambda);
  reader.get("restarts", bp.restarts);
  reader.finish();
  oc.trajectory_loss = trajectory_loss_from_string(loss);
  oc.seed = seed;

  const SceneFiles scene = read_scene(scene_dir);
  const auto& p = scene.trajectories;
  if (!p.has_labels()) throw InvalidInput(scene_dir.string() + ": trajectories carry no ground-truth labels");
  const fs::path dir = require_out(opt);

  std::vector<int> labels;
  Json metrics;
  metrics["method"] = method;
  if (method == "lrtl") {
    oc.height = scene.config.height;
    oc.width = scene.config.width;
    oc.validate();
    std::optional<Matrix> flow;
    const auto ref = static_cast<std::size_t>(p.reference_frame);
    if (oc.weights.lambda_f > 0.0 && ref < scene.flows.size()) flow = scene.flows[ref];
    const OptimResult res = optimize_sequence(p, flow, oc);
    labels = hard_labels(res.assignment);
    std::ostringstream trace;
    write_trace_csv(trace, res.trace);
    atomic_write(dir / "trace.csv", trace.str());
    metrics["steps"] = res.trace.steps.size();
    metrics["converged"] = res.trace.converged;
  } else {
    const Baseline b = baseline_from_string(method);
    if (k > 0) {
      labels = run_baseline(b, p, k, seed, bp);
      metrics["k"] = k;
    } else {
      const BaselineRun run = best_over_k(b, p, k_min, k_max, seed, bp);
      labels = run.labels;
      metrics["k"] = run.k;
      metrics["k_min"] = k_min;
      metrics["k_max"] = k_max;
    }
  }

  const MetricReport report = evaluate_labels(labels, p.labels, p.visible);
  std::ostringstream csv;
  write_labels_csv(csv, labels);
  atomic_write(dir / "labels.csv", csv.str());
  if (opt.format == "csv") {
    atomic_write(dir / "metrics.csv", "method,ari,fg_ari,jaccard,k_pred,k_true\n" + method + ',' +
                                          csv_real(report.ari) + ',' + csv_real(report.fg_ari) + ',' +
                                          csv_real(report.jaccard) + ',' + std::to_string(report.k_pred) + ',' +
                                          std::to_string(report.k_true) + '\n');
  } else {
    metrics["ari"] = real_or_null(report.ari);
    metrics["fg_ari"] = real_or_null(report.fg_ari);
    metrics["jaccard"] = real_or_null(report.jaccard);
    metrics["k_pred"] = report.k_pred;
    metrics["k_true"] = report.k_true;
    atomic_write(dir / "metrics.json", metrics.dump(2) + "\n");
  }
  out << "segment: method=" << method << " ari=" << csv_real(report.ari) << " fg_ari=" << csv_real(report.fg_ari)
      << " k_pred=" << report.k_pred << " k_true=" << report.k_true << '\n';
  return ExitCode::ok;
}

ExitCode cmd_sweep(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  const Json config = load_config(opt);
  ConfigReader reader(config, "");
  const fs::path scene_dir = require_scene(opt, reader);
  const SceneFiles scene = read_scene(scene_dir);

  SweepGrid grid = SweepGrid::defaults(scene.num_labels - 1);
  reader.get("etas", grid.etas);
  reader.get("structure", grid.structure);
  reader.get("taus", grid.taus);
  reader.get("trials", grid.trials);
  reader.get("seed", grid.seed);
  std::string loss = to_string(grid.loss);
  reader.get("loss", loss);
  reader.get("r", grid.r);
  reader.get("noise_classes", grid.noise_classes);
  reader.get("logit_scale", grid.logit_scale);
  SweepChecks checks;
  if (reader.has("assert")) {
    ConfigReader a(reader.at("assert"), "assert");
    a.get("eta_monotone", checks.eta_monotone);
    a.get("tau_monotone", checks.tau_monotone);
    a.get("asymmetry", checks.asymmetry);
    a.get("min_at_truth", checks.min_at_truth);
    a.get("tolerance", checks.tolerance);
    a.get("margin", checks.margin);
    a.finish();
  }
  reader.finish();
  grid.loss = trajectory_loss_from_string(loss);
  if (opt.seed) grid.seed = *opt.seed;
  grid.validate(scene.num_labels - 1);
  const fs::path dir = require_out(opt);

  const auto ref = static_cast<std::size_t>(scene.trajectories.reference_frame);
  const SweepResult result = sweep(scene.trajectories, scene.masks.at(ref), scene.num_labels, grid);
  const auto outcomes = check_sweep(result, grid, checks);

  std::ostringstream csv;
  write_sweep_csv(csv, result);
  Json summary;
  summary["scene"] = scene_dir.string();
  summary["manifest"] = (scene_dir / "manifest.json").string();
  summary["loss"] = to_string(grid.loss);
  summary["r"] = grid.r;
  summary["trials"] = grid.trials;
  summary["seed"] = grid.seed;
  summary["etas"] = grid.etas;
  summary["structure"] = grid.structure;
  summary["taus"] = grid.taus;
  summary["tracks"] = result.tracks;
  summary["cells"] = result.cells.size();
  summary["diagnostics"] = result.diagnostics;
  Json asserts = Json::array();
  bool passed = true;
  for (const auto& o : outcomes) {
    asserts.push_back({{"name", o.name}, {"passed", o.passed}, {"detail", o.detail}});
    passed = passed && o.passed;
  }
  summary["assertions"] = asserts;
  atomic_write(dir / "sweep.csv", csv.str());
  atomic_write(dir / "sweep.json", summary.dump(2) + "\n");

  out << "sweep: cells=" << result.cells.size() << " trials=" << grid.trials << " tracks=" << result.tracks << '\n';
  for (const auto& d : result.diagnostics) err << "warning: " << d << '\n';
  for (const auto& o : outcomes) {
    out << o.name << ": " << (o.passed ? "pass" : "FAIL") << '\n';
    if (!o.passed) err << "assertion " << o.name << " violated: " << o.detail << '\n';
  }
  return passed ? ExitCode::ok : ExitCode::assertion;
}

ExitCode cmd_gradcheck(const CommandOptions& opt, std::ostream& out, std::ostream&) {
  const Json config = load_config(opt);
  ConfigReader reader(config, "");
  GradcheckConfig cfg;
  reader.get("instances", cfg.instances);
  reader.get("frames", cfg.frames);
  reader.get("points", cfg.points);
  reader.get("segments", cfg.segments);
  reader.get("r", cfg.r);
  reader.get("height", cfg.height);
  reader.get("width", cfg.width);
  reader.get("step", cfg.step);
  reader.get("tolerance", cfg.tolerance);
  reader.get("min_gap", cfg.min_gap);
  reader.get("degenerate", cfg.degenerate);
  reader.get("seed", cfg.seed);
  reader.finish();
  if (opt.seed) cfg.seed = *opt.seed;

  const GradcheckReport report = gradcheck(cfg);
  std::ostringstream text;
  Json entries = Json::array();
  for (const auto& e : report.entries) {
    if (e.skipped) {
      text << "warning: " << e.loss << " instance " << e.instance << " skipped: " << e.warning << '\n';
    }
    entries.push_back({{"loss", e.loss},
                       {"instance", e.instance},
                       {"rel_error", e.rel_error},
                       {"skipped", e.skipped},
                       {"warning", e.warning}});
  }
  text << "lt: max_rel_error=" << format_real(report.max_error_lt) << " checked=" << report.checked_lt
       << " skipped=" << report.skipped << '\n';
  text << "flow: max_rel_error=" << format_real(report.max_error_flow) << " checked=" << report.checked_flow << '\n';
  text << (report.passed ? "PASS" : "FAIL") << " (tolerance " << format_real(cfg.tolerance) << ")\n";
  out << text.str();
  if (!opt.out.empty()) {
    const fs::path dir = require_out(opt);
    Json j;
    j["seed"] = cfg.seed;
    j["tolerance"] = cfg.tolerance;
    j["max_rel_error_lt"] = report.max_error_lt;
    j["max_rel_error_flow"] = report.max_error_flow;
    j["checked_lt"] = report.checked_lt;
    j["checked_flow"] = report.checked_flow;
    j["skipped"] = report.skipped;
    j["passed"] = report.passed;
    j["entries"] = entries;
    atomic_write(dir / "gradcheck.json", j.dump(2) + "\n");
  }
  return report.passed ? ExitCode::ok : ExitCode::assertion;
}

int run_command(const std::string& name, const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    ExitCode code = ExitCode::ok;
    if (name == "synth") code = cmd_synth(opt, out, err);
    else if (name == "segment") code = cmd_segment(opt, out, err);
    else if (name == "sweep") code = cmd_sweep(opt, out, err);
    else if (name == "gradcheck") code = cmd_gradcheck(opt, out, err);
    else throw ConfigError("unknown command '" + name + "'");
    return static_cast<int>(code);
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::io);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::config);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::assertion);
  }
}

}  // namespace lrtl

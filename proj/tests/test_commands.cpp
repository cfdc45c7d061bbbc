#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lrtl/commands.hpp"
#include "lrtl/io.hpp"

using namespace lrtl;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = LRTL_CONFIG_DIR;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lrtl_test_cmd_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& json) {
  const fs::path path = dir / name;
  std::ofstream(path) << json;
  return path;
}

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(const std::string& command, const CommandOptions& opt) {
  std::ostringstream out, err;
  Outcome r;
  r.code = run_command(command, opt, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

CommandOptions options(const fs::path& config, const fs::path& out) {
  CommandOptions opt;
  if (!config.empty()) opt.config = config.string();
  opt.out = out.string();
  return opt;
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

void expect_same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(read_text(entry.path()), read_text(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 0u);
}

const char* kMinimalPlanar = R"({"mode": "planar2d", "num_objects": 2, "frames": 8, "height": 32, "width": 32,
  "stride": 4, "seed": 7})";

const char* kSmallRigid = R"({"mode": "rigid3d_affine", "num_objects": 3, "frames": 8, "height": 64, "width": 64,
  "stride": 6, "dense_fields": false, "seed": 2})";

fs::path synth_scene(const fs::path& root, const std::string& name, const std::string& json) {
  const fs::path dir = root / name;
  const Outcome r = run("synth", options(write_config(root, name + ".json", json), dir));
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

}  // namespace

TEST(Synth, MinimalPlanarWritesFiles) {
  const fs::path root = fresh_dir("synth_min");
  const Outcome r = run("synth", options(write_config(root, "c.json", kMinimalPlanar), root / "scene"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("K_gt=2"), std::string::npos);
  EXPECT_NE(r.out.find("T=8"), std::string::npos);
  EXPECT_NE(r.out.find("mode=planar2d"), std::string::npos);
  EXPECT_NE(r.out.find("rank_check=n/a"), std::string::npos);
  const Json m = read_json(root / "scene" / "manifest.json");
  const std::size_t n = m["N"].get<std::size_t>();
  EXPECT_EQ(count_lines(read_text(root / "scene" / "trajectories.csv")), n * 8 + 1);
  EXPECT_TRUE(fs::exists(root / "scene" / "masks" / "mask_0007.csv"));
  EXPECT_TRUE(fs::exists(root / "scene" / "flow" / "flow_0006.csv"));
}

TEST(Synth, SameConfigAndSeedIsByteIdentical) {
  const fs::path root = fresh_dir("synth_det");
  const fs::path cfg = write_config(root, "c.json", kMinimalPlanar);
  CommandOptions a = options(cfg, root / "a"), b = options(cfg, root / "b");
  a.seed = b.seed = 19;
  const Outcome ra = run("synth", a), rb = run("synth", b);
  ASSERT_EQ(ra.code, 0);
  EXPECT_EQ(ra.out, rb.out);
  expect_same_tree(root / "a", root / "b");
}

TEST(Synth, SeedFlagOverridesConfig) {
  const fs::path root = fresh_dir("synth_seed");
  const fs::path cfg = write_config(root, "c.json", kMinimalPlanar);
  CommandOptions a = options(cfg, root / "a"), b = options(cfg, root / "b");
  b.seed = 8;
  ASSERT_EQ(run("synth", a).code, 0);
  ASSERT_EQ(run("synth", b).code, 0);
  EXPECT_NE(read_text(root / "a" / "trajectories.csv"), read_text(root / "b" / "trajectories.csv"));
}

TEST(Synth, RigidSceneReportsRankCheck) {
  const fs::path root = fresh_dir("synth_rank");
  const Outcome r = run("synth", options(write_config(root, "c.json", kSmallRigid), root / "scene"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rank_check=pass"), std::string::npos) << r.out;
}

TEST(Synth, ConfigErrorsExitThree) {
  const fs::path root = fresh_dir("synth_cfg");
  Outcome r = run("synth", options(write_config(root, "a.json", R"({"framez": 8})"), root / "o"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("framez"), std::string::npos);
  r = run("synth", options(write_config(root, "b.json", R"({"frames": "eight"})"), root / "o"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("frames"), std::string::npos);
  r = run("synth", options(write_config(root, "c.json", R"({"frames": 1})"), root / "o"));
  EXPECT_EQ(r.code, 3);
  r = run("synth", options(write_config(root, "d.json", "{"), root / "o"));
  EXPECT_EQ(r.code, 3);
  r = run("synth", options({}, ""));
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(run("render", options({}, root / "o")).code, 3);
}

TEST(Synth, UnwritableOutputExitsTwo) {
  const fs::path root = fresh_dir("synth_io");
  write_config(root, "blocker", "");
  const Outcome r = run("synth", options(write_config(root, "c.json", kMinimalPlanar), root / "blocker" / "scene"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("blocker"), std::string::npos);
}

TEST(Segment, KmeansOnBundledTwoBlob) {
  const fs::path root = fresh_dir("seg_blob");
  ASSERT_EQ(run("synth", options(kConfigs / "two_blob.json", root / "scene")).code, 0);
  const Json m = read_json(root / "scene" / "manifest.json");
  const int k_gt = m["K_gt"].get<int>();
  const fs::path cfg = write_config(root, "seg.json", R"({"method": "kmeans", "k": )" + std::to_string(k_gt + 1) + "}");
  CommandOptions opt = options(cfg, root / "out");
  opt.scene = (root / "scene").string();
  const Outcome r = run("segment", opt);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(read_text(root / "out" / "labels.csv")), m["N"].get<std::size_t>() + 1);
  const Json metrics = read_json(root / "out" / "metrics.json");
  EXPECT_EQ(metrics["method"], "kmeans");
  EXPECT_EQ(metrics["k"], k_gt + 1);
  EXPECT_TRUE(metrics["ari"].is_number());
  EXPECT_TRUE(metrics.contains("fg_ari"));
}

TEST(Segment, SscRecoversBundledTwoSubspace) {
  const fs::path root = fresh_dir("seg_sub");
  ASSERT_EQ(run("synth", options(kConfigs / "two_subspace.json", root / "scene")).code, 0);
  CommandOptions opt = options({}, root / "out");
  opt.scene = (root / "scene").string();
  opt.method = "ssc";
  const Outcome r = run("segment", opt);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(root / "out" / "metrics.json")["ari"].get<double>(), 1.0);
}

TEST(Segment, CsvFormatAndMethodFlag) {
  const fs::path root = fresh_dir("seg_csv");
  const fs::path scene = synth_scene(root, "scene", kSmallRigid);
  CommandOptions opt = options(write_config(root, "seg.json", R"({"method": "ssc", "k": 4})"), root / "out");
  opt.scene = scene.string();
  opt.method = "kmeans";
  opt.format = "csv";
  const Outcome r = run("segment", opt);
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_text(root / "out" / "metrics.csv");
  EXPECT_EQ(csv.rfind("method,ari,fg_ari,jaccard,k_pred,k_true\nkmeans,", 0), 0u) << csv;
  EXPECT_FALSE(fs::exists(root / "out" / "metrics.json"));
}

TEST(Segment, LrtlRecoversNoiseFreeThreeObjectScenes) {
  const fs::path root = fresh_dir("seg_lrtl");
  double mean = 0.0;
  for (int seed = 0; seed < 4; ++seed) {
    const fs::path scene = synth_scene(
        root, "scene" + std::to_string(seed),
        R"({"num_objects": 3, "frames": 12, "height": 128, "width": 128, "stride": 8, "dense_fields": false,
            "seed": )" + std::to_string(seed) + "}");
    CommandOptions opt = options(write_config(root, "seg.json", R"({"segments": 4})"), root / "out");
    opt.scene = scene.string();
    const Outcome r = run("segment", opt);
    ASSERT_EQ(r.code, 0) << r.err;
    mean += read_json(root / "out" / "metrics.json")["ari"].get<double>() / 4.0;
    EXPECT_EQ(count_lines(read_text(root / "out" / "trace.csv")), 5000u + 1u);
  }
  EXPECT_GE(mean, 0.95);
}

TEST(Segment, DeterministicOutputs) {
  const fs::path root = fresh_dir("seg_det");
  const fs::path scene = synth_scene(root, "scene", kSmallRigid);
  for (const char* method : {"lrtl", "lrr"}) {
    const fs::path cfg = write_config(root, "seg.json", R"({"segments": 5, "steps": 200, "k_max": 5, "seed": 3})");
    CommandOptions a = options(cfg, root / "a"), b = options(cfg, root / "b");
    a.scene = b.scene = scene.string();
    a.method = b.method = method;
    ASSERT_EQ(run("segment", a).code, 0);
    ASSERT_EQ(run("segment", b).code, 0);
    expect_same_tree(root / "a", root / "b");
  }
}

TEST(Segment, MissingSceneExitsTwo) {
  const fs::path root = fresh_dir("seg_missing");
  CommandOptions opt = options({}, root / "out");
  opt.scene = (root / "absent").string();
  const Outcome r = run("segment", opt);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("absent"), std::string::npos);
}

TEST(Segment, UnknownKeyExitsThree) {
  const fs::path root = fresh_dir("seg_key");
  const fs::path scene = synth_scene(root, "scene", kMinimalPlanar);
  CommandOptions opt = options(write_config(root, "seg.json", R"({"weights": {"lambda_x": 1}})"), root / "out");
  opt.scene = scene.string();
  const Outcome r = run("segment", opt);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("weights.lambda_x"), std::string::npos);
}

TEST(Sweep, DefaultGridCardinality) {
  const fs::path root = fresh_dir("sweep_grid");
  const fs::path scene = synth_scene(root, "scene", kSmallRigid);
  CommandOptions opt = options(write_config(root, "sw.json", R"({"trials": 2})"), root / "out");
  opt.scene = scene.string();
  const Outcome r = run("sweep", opt);
  ASSERT_EQ(r.code, 0) << r.err;
  // Three objects give s in [-3, 3]; the full nine values need four.
  EXPECT_EQ(count_lines(read_text(root / "out" / "sweep.csv")), 5u * 7u * 4u + 1u);
  const Json summary = read_json(root / "out" / "sweep.json");
  EXPECT_EQ(summary["manifest"], (scene / "manifest.json").string());
  EXPECT_EQ(summary["cells"], 140);
}

TEST(Sweep, FourObjectDefaultGridHasNineStructureValues) {
  const fs::path root = fresh_dir("sweep_four");
  const fs::path scene = synth_scene(
      root, "scene",
      R"({"num_objects": 4, "frames": 8, "height": 64, "width": 64, "stride": 6, "dense_fields": false, "seed": 1})");
  CommandOptions opt = options(write_config(root, "sw.json", R"({"trials": 1})"), root / "out");
  opt.scene = scene.string();
  ASSERT_EQ(run("sweep", opt).code, 0);
  EXPECT_EQ(count_lines(read_text(root / "out" / "sweep.csv")), 5u * 9u * 4u + 1u);
}

TEST(Sweep, EtaMonotoneOnNoiseFreeSceneExitsZero) {
  const fs::path root = fresh_dir("sweep_eta");
  const fs::path scene = synth_scene(root, "scene", kSmallRigid);
  CommandOptions opt = options(
      write_config(root, "sw.json", R"({"trials": 25, "structure": [0], "taus": [0.001], "assert": {"eta_monotone": true}})"),
      root / "out");
  opt.scene = scene.string();
  const Outcome r = run("sweep", opt);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("eta_monotone: pass"), std::string::npos);
}

TEST(Sweep, FailedAssertionExitsOneNamingCells) {
  const fs::path root = fresh_dir("sweep_fail");
  const fs::path scene = synth_scene(root, "scene", kSmallRigid);
  CommandOptions opt = options(
      write_config(root, "sw.json",
                   R"({"trials": 2, "structure": [0], "assert": {"tau_monotone": true, "margin": 2.0}})"),
      root / "out");
  opt.scene = scene.string();
  const Outcome r = run("sweep", opt);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("tau_monotone: FAIL"), std::string::npos);
  EXPECT_NE(r.err.find("cell (eta="), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(root / "out" / "sweep.csv"));
}

TEST(Sweep, UnwritableOutputExitsTwoWithoutPartialCsv) {
  const fs::path root = fresh_dir("sweep_io");
  const fs::path scene = synth_scene(root, "scene", kSmallRigid);
  write_config(root, "blocker", "");
  CommandOptions opt = options(write_config(root, "sw.json", R"({"trials": 1, "etas": [0]})"), root / "blocker" / "out");
  opt.scene = scene.string();
  const Outcome r = run("sweep", opt);
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(root / "blocker" / "out" / "sweep.csv"));
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    EXPECT_NE(entry.path().filename(), "sweep.csv.tmp");
  }
}

TEST(Sweep, DeterministicOutputs) {
  const fs::path root = fresh_dir("sweep_det");
  const fs::path scene = synth_scene(root, "scene", kSmallRigid);
  const fs::path cfg = write_config(root, "sw.json", R"({"trials": 3, "etas": [0, 0.5], "taus": [0.001, 5]})");
  CommandOptions a = options(cfg, root / "a"), b = options(cfg, root / "b");
  a.scene = b.scene = scene.string();
  a.seed = b.seed = 42;
  ASSERT_EQ(run("sweep", a).code, 0);
  ASSERT_EQ(run("sweep", b).code, 0);
  EXPECT_EQ(read_text(root / "a" / "sweep.csv"), read_text(root / "b" / "sweep.csv"));
  EXPECT_EQ(read_text(root / "a" / "sweep.json"), read_text(root / "b" / "sweep.json"));
}

TEST(Gradcheck, DefaultRunExitsZero) {
  const Outcome r = run("gradcheck", CommandOptions{});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("lt: max_rel_error="), std::string::npos);
  EXPECT_NE(r.out.find("flow: max_rel_error="), std::string::npos);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(Gradcheck, DegenerateInstanceIsWarningNotFailure) {
  const fs::path root = fresh_dir("grad_deg");
  const Outcome r = run("gradcheck", options(write_config(root, "g.json", R"({"instances": 3, "degenerate": true})"), ""));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("skipped: "), std::string::npos) << r.out;
}

TEST(Gradcheck, FixedSeedGivesIdenticalReportBytes) {
  const fs::path root = fresh_dir("grad_det");
  const fs::path cfg = write_config(root, "g.json", R"({"instances": 3, "seed": 5})");
  const Outcome a = run("gradcheck", options(cfg, root / "a")), b = run("gradcheck", options(cfg, root / "b"));
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(read_text(root / "a" / "gradcheck.json"), read_text(root / "b" / "gradcheck.json"));
}

TEST(Gradcheck, BadConfigExitsThree) {
  const fs::path root = fresh_dir("grad_cfg");
  EXPECT_EQ(run("gradcheck", options(write_config(root, "g.json", R"({"r": 0})"), "")).code, 3);
  EXPECT_EQ(run("gradcheck", options(write_config(root, "h.json", R"({"instance": 3})"), "")).code, 3);
}

#include "lrtl/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lrtl/format.hpp"

namespace lrtl {

namespace fs = std::filesystem;

void atomic_write(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os << content;
    os.flush();
    if (!os) {
      os.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("cannot write " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot write " + path.string() + ": " + ec.message());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ConfigReader::ConfigReader(const Json& object, std::string context) : object_(object), context_(std::move(context)) {
  if (!object_.is_object()) throw ConfigError((context_.empty() ? std::string("config") : context_) + ": expected an object");
}

const Json& ConfigReader::at(const std::string& key) {
  used_.insert(key);
  return object_.at(key);
}

std::string ConfigReader::path(const std::string& key) const {
  return context_.empty() ? key : context_ + "." + key;
}

void ConfigReader::finish() const {
  for (const auto& item : object_.items()) {
    if (!used_.count(item.key())) throw ConfigError(path(item.key()) + ": unknown key");
  }
}

Json scene_config_to_json(const SceneConfig& cfg) {
  Json j;
  j["mode"] = to_string(cfg.mode);
  j["num_objects"] = cfg.num_objects;
  j["frames"] = cfg.frames;
  j["height"] = cfg.height;
  j["width"] = cfg.width;
  j["stride"] = cfg.stride;
  j["points_per_object"] = cfg.points_per_object;
  j["motion_seed"] = cfg.motion_seed;
  j["noise_sigma"] = cfg.noise_sigma;
  j["camera_motion"] = cfg.camera_motion;
  j["rotation_amplitude"] = cfg.rotation_amplitude;
  j["translation_amplitude"] = cfg.translation_amplitude;
  j["object_scale"] = cfg.object_scale;
  j["constant_depth"] = cfg.constant_depth;
  j["dense_fields"] = cfg.dense_fields;
  return j;
}

void scene_config_from_json(ConfigReader& reader, SceneConfig& cfg) {
  std::string mode = to_string(cfg.mode);
  reader.get("mode", mode);
  try {
    cfg.mode = camera_mode_from_string(mode);
  } catch (const ConfigError& e) {
    throw ConfigError(reader.path("mode") + ": " + e.what());
  }
  reader.get("num_objects", cfg.num_objects);
  reader.get("frames", cfg.frames);
  reader.get("height", cfg.height);
  reader.get("width", cfg.width);
  reader.get("stride", cfg.stride);
  reader.get("points_per_object", cfg.points_per_object);
  reader.get("motion_seed", cfg.motion_seed);
  reader.get("noise_sigma", cfg.noise_sigma);
  reader.get("camera_motion", cfg.camera_motion);
  reader.get("rotation_amplitude", cfg.rotation_amplitude);
  reader.get("translation_amplitude", cfg.translation_amplitude);
  reader.get("object_scale", cfg.object_scale);
  reader.get("constant_depth", cfg.constant_depth);
  reader.get("dense_fields", cfg.dense_fields);
}

std::string trajectories_csv(const TrajectoryMatrix& p) {
  std::string out = "track_id,frame,x,y,visible,label\n";
  for (Index n = 0; n < p.points(); ++n) {
    const int label = p.has_labels() ? p.labels[static_cast<std::size_t>(n)] : -1;
    for (Index t = 0; t < p.frames(); ++t) {
      out += std::to_string(n) + ',' + std::to_string(t) + ',' + format_real(p.positions(2 * t, n)) + ',' +
             format_real(p.positions(2 * t + 1, n)) + ',' + (p.visible(t, n) ? '1' : '0') + ',' +
             std::to_string(label) + '\n';
    }
  }
  return out;
}

std::string mask_csv(const LabelGrid& mask) {
  std::string out;
  for (Index y = 0; y < mask.rows(); ++y) {
    for (Index x = 0; x < mask.cols(); ++x) {
      if (x > 0) out += ',';
      out += std::to_string(mask(y, x));
    }
    out += '\n';
  }
  return out;
}

std::string flow_csv(const Matrix& flow, Index height, Index width) {
  std::string out = "x,y,u,v\n";
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const Index i = y * width + x;
      out += std::to_string(x) + ',' + std::to_string(y) + ',' + format_real(flow(i, 0)) + ',' +
             format_real(flow(i, 1)) + '\n';
    }
  }
  return out;
}

namespace {

std::string numbered(const char* stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.csv", stem, i);
  return buf;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& field, const fs::path& file, std::size_t line) {
  T value{};
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw IoError(file.string() + ":" + std::to_string(line) + ": malformed number '" + field + "'");
  }
  return value;
}

void expect_header(const std::vector<std::string>& lines, const std::string& header, const fs::path& file) {
  if (lines.empty() || lines.front() != header) throw IoError(file.string() + ": expected header " + header);
}

LabelGrid read_mask(const fs::path& file, Index height, Index width) {
  const auto lines = lines_of(read_text(file));
  if (static_cast<Index>(lines.size()) != height) throw IoError(file.string() + ": expected " + std::to_string(height) + " rows");
  LabelGrid g(height, width);
  for (Index y = 0; y < height; ++y) {
    const auto fields = split(lines[static_cast<std::size_t>(y)]);
    if (static_cast<Index>(fields.size()) != width) {
      throw IoError(file.string() + ":" + std::to_string(y + 1) + ": expected " + std::to_string(width) + " columns");
    }
    for (Index x = 0; x < width; ++x) {
      g(y, x) = parse_number<int>(fields[static_cast<std::size_t>(x)], file, static_cast<std::size_t>(y + 1));
    }
  }
  return g;
}

Matrix read_flow(const fs::path& file, Index height, Index width) {
  const auto lines = lines_of(read_text(file));
  expect_header(lines, "x,y,u,v", file);
  if (static_cast<Index>(lines.size()) != height * width + 1) throw IoError(file.string() + ": wrong row count");
  Matrix f(height * width, 2);
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto fields = split(lines[l]);
    if (fields.size() != 4) throw IoError(file.string() + ":" + std::to_string(l + 1) + ": expected 4 columns");
    const auto x = parse_number<Index>(fields[0], file, l + 1);
    const auto y = parse_number<Index>(fields[1], file, l + 1);
    if (x < 0 || x >= width || y < 0 || y >= height) throw IoError(file.string() + ": pixel outside the grid");
    f(y * width + x, 0) = parse_number<double>(fields[2], file, l + 1);
    f(y * width + x, 1) = parse_number<double>(fields[3], file, l + 1);
  }
  return f;
}

TrajectoryMatrix read_trajectories(const fs::path& file, Index frames, Index points) {
  const auto lines = lines_of(read_text(file));
  expect_header(lines, "track_id,frame,x,y,visible,label", file);
  if (static_cast<Index>(lines.size()) != frames * points + 1) throw IoError(file.string() + ": wrong row count");
  TrajectoryMatrix p;
  p.positions.resize(2 * frames, points);
  p.visible.resize(frames, points);
  p.labels.assign(static_cast<std::size_t>(points), -1);
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto fields = split(lines[l]);
    if (fields.size() != 6) throw IoError(file.string() + ":" + std::to_string(l + 1) + ": expected 6 columns");
    const auto n = parse_number<Index>(fields[0], file, l + 1);
    const auto t = parse_number<Index>(fields[1], file, l + 1);
    if (n < 0 || n >= points || t < 0 || t >= frames) throw IoError(file.string() + ": index outside the manifest");
    p.positions(2 * t, n) = parse_number<double>(fields[2], file, l + 1);
    p.positions(2 * t + 1, n) = parse_number<double>(fields[3], file, l + 1);
    p.visible(t, n) = parse_number<int>(fields[4], file, l + 1) != 0;
    p.labels[static_cast<std::size_t>(n)] = parse_number<int>(fields[5], file, l + 1);
  }
  if (std::find(p.labels.begin(), p.labels.end(), -1) != p.labels.end()) p.labels.clear();
  return p;
}

}  // namespace

void write_scene(const fs::path& dir, const SceneTruth& scene) {
  const auto& p = scene.trajectories;
  make_dirs(dir / "masks");
  Json manifest;
  manifest["config"] = scene_config_to_json(scene.config);
  manifest["seed"] = scene.config.motion_seed;
  manifest["T"] = p.frames();
  manifest["N"] = p.points();
  manifest["H"] = scene.config.height;
  manifest["W"] = scene.config.width;
  manifest["K_gt"] = scene.num_labels() - 1;
  manifest["num_labels"] = scene.num_labels();
  manifest["reference_frame"] = p.reference_frame;
  manifest["trajectories"] = "trajectories.csv";
  Json masks = Json::array();
  for (std::size_t t = 0; t < scene.masks.size(); ++t) {
    const std::string name = "masks/" + numbered("mask", t);
    atomic_write(dir / name, mask_csv(scene.masks[t]));
    masks.push_back(name);
  }
  manifest["masks"] = masks;
  Json flows = Json::array();
  if (!scene.flows.empty()) make_dirs(dir / "flow");
  for (std::size_t t = 0; t < scene.flows.size(); ++t) {
    const std::string name = "flow/" + numbered("flow", t);
    atomic_write(dir / name, flow_csv(scene.flows[t], scene.config.height, scene.config.width));
    flows.push_back(name);
  }
  manifest["flows"] = flows;
  atomic_write(dir / "trajectories.csv", trajectories_csv(p));
  atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
}

SceneFiles read_scene(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  Json manifest;
  try {
    manifest = read_json(manifest_path);
  } catch (const ConfigError& e) {
    throw IoError(e.what());
  }
  SceneFiles out;
  Index frames = 0, points = 0, height = 0, width = 0, reference = 0;
  std::string traj_name;
  std::vector<std::string> mask_names, flow_names;
  try {
    ConfigReader reader(manifest, "manifest");
    ConfigReader cfg_reader(reader.at("config"), "manifest.config");
    scene_config_from_json(cfg_reader, out.config);
    cfg_reader.finish();
    std::uint64_t seed = 0;
    int k_gt = 0;
    reader.get("seed", seed);
    reader.get("T", frames);
    reader.get("N", points);
    reader.get("H", height);
    reader.get("W", width);
    reader.get("K_gt", k_gt);
    reader.get("num_labels", out.num_labels);
    reader.get("reference_frame", reference);
    reader.get("trajectories", traj_name);
    reader.get("masks", mask_names);
    reader.get("flows", flow_names);
    reader.finish();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  }
  if (frames < 1 || points < 1 || height < 1 || width < 1 || out.num_labels < 1) {
    throw IoError(manifest_path.string() + ": sizes must be positive");
  }
  if (static_cast<Index>(mask_names.size()) != frames) throw IoError(manifest_path.string() + ": need one mask per frame");
  out.trajectories = read_trajectories(dir / traj_name, frames, points);
  out.trajectories.reference_frame = reference;
  for (const auto& name : mask_names) out.masks.push_back(read_mask(dir / name, height, width));
  for (const auto& name : flow_names) out.flows.push_back(read_flow(dir / name, height, width));
  try {
    out.trajectories.validate();
  } catch (const InvalidInput& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace lrtl

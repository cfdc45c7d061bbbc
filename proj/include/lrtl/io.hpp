#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "lrtl/errors.hpp"
#include "lrtl/scene.hpp"

namespace lrtl {

using Json = nlohmann::ordered_json;

/// Writes `content` to a temporary file next to `path` and renames it into
/// place. Throws IoError naming the path.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_text(const std::filesystem::path& path);

/// Parses a JSON file; IoError when unreadable, ConfigError when malformed.
Json read_json(const std::filesystem::path& path);

/// Reads typed keys from a JSON object and rejects keys that were never read.
class ConfigReader {
 public:
  ConfigReader(const Json& object, std::string context);

  template <typename T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path(key) + ": wrong type");
    }
  }

  [[nodiscard]] bool has(const std::string& key) const { return object_.contains(key); }
  [[nodiscard]] const Json& at(const std::string& key);
  [[nodiscard]] std::string path(const std::string& key) const;

  /// Throws ConfigError naming the first unknown key.
  void finish() const;

 private:
  const Json& object_;
  std::string context_;
  std::set<std::string> used_;
};

Json scene_config_to_json(const SceneConfig& cfg);
void scene_config_from_json(ConfigReader& reader, SceneConfig& cfg);

/// Scene read back from disk: everything the commands need without the
/// generator's object models.
struct SceneFiles {
  SceneConfig config;
  TrajectoryMatrix trajectories;
  std::vector<LabelGrid> masks;
  std::vector<Matrix> flows;
  int num_labels = 0;
};

/// manifest.json, trajectories.csv, masks/mask_%04d.csv and, when dense
/// fields are present, flow/flow_%04d.csv.
void write_scene(const std::filesystem::path& dir, const SceneTruth& scene);
SceneFiles read_scene(const std::filesystem::path& dir);

/// Track positions are stored normalised by (W - 1, H - 1).
std::string trajectories_csv(const TrajectoryMatrix& p);
std::string mask_csv(const LabelGrid& mask);
std::string flow_csv(const Matrix& flow, Index height, Index width);

}  // namespace lrtl

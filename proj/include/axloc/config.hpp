#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "axloc/model.hpp"
#include "axloc/synthscene.hpp"
#include "axloc/trainer.hpp"

namespace axloc {

/// Bad key, bad value or malformed line in a run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataSettings {
  std::size_t objects = kDefaultSceneObjects;
  double extent = 10.0;
  std::size_t n_train = 100;
  std::size_t n_test = 40;
  std::size_t width = 32;
  std::size_t height = 32;
  Trajectory train_path = default_train_trajectory();
  Trajectory test_path = default_test_trajectory();
};

/// Everything a command can be configured with. One seed drives scene
/// generation, model initialization and batch order.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  ModelConfig model;
  TrainConfig train;
  DataSettings data;
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::filesystem::path> out_dir;
  std::vector<std::uint64_t> ablate_seeds{1, 2, 3, 4, 5};
  /// Epochs-to-threshold probe level as a fraction of the scene extent.
  double ablate_threshold_fraction = 0.05;

  /// TrainConfig with the run seed applied.
  [[nodiscard]] TrainConfig train_config() const;
};

struct ConfigKey {
  std::string name;
  std::string description;
};

/// Every accepted key, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key; throws ConfigError for unknown keys or unparsable values.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// Current value of a key in the same text form the parser accepts.
std::string get_config_value(const RunConfig& config, std::string_view key);

/// Applies `key=value` lines; `#` starts a comment, blank lines are skipped.
/// Errors carry the line number.
void apply_config_text(RunConfig& config, std::string_view text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Key listing with defaults, for --help.
std::string config_reference();

std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace axloc

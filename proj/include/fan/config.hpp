#pragma once

// Flat key=value run configuration. Blank lines and text after '#' are
// ignored; unknown keys and malformed values are errors.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::size_t patch_size = 192;
  std::size_t batch_size = 8;
  std::size_t steps = 5000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double epsilon_aug = 0.5;
  std::size_t latent_channels = 32;
  std::string extractor_weights = "tiny";  // container path, or "tiny"
  std::string data_dir;
  std::string out_dir = ".";
  std::size_t patches_per_image = 16;

  /// Parses and assigns one value; throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value);
  /// Every key in a stable order with its current value.
  std::string to_text() const;

  static const std::vector<std::string>& keys();
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace fan

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "netfx/evalkit.hpp"
#include "netfx/synthgen.hpp"
#include "netfx/trainer.hpp"

namespace netfx {

/// Sectioned key-value text:
///
///   # comment
///   [section]
///   key = value
///
/// Keys must sit inside a section; duplicates are rejected.
class IniFile {
 public:
  static IniFile parse(std::string_view text);

  bool has(std::string_view section, std::string_view key) const;
  std::optional<std::string> get(std::string_view section, std::string_view key) const;
  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

struct GradCheckConfig {
  std::size_t nodes = 200;
  double h = 1e-5;
  double tol = 1e-4;
  std::size_t max_coords_per_tensor = 64;
  std::optional<std::size_t> corrupt_coordinate;
};

struct RunConfig {
  std::string text;  // verbatim source, echoed into outputs
  std::uint64_t seed = 0;
  BenchmarkConfig bench;
  TrainConfig train;
  ExperimentConfig experiment;
  GradCheckConfig gradcheck;

  /// Hash of the verbatim text and the effective seed.
  std::string hash() const;
};

/// Relative paths resolve against `base_dir`. `seed_override` (the
/// NETFX_SEED environment variable in the CLI) replaces [run] seed.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {},
                           std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace netfx

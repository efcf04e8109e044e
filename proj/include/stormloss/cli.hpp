#pragma once

// Command-line front end. `run_cli` is the whole program minus `main`, so
// tests can drive it in-process.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "stormloss/ingest.hpp"
#include "stormloss/models.hpp"

namespace stormloss {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Protocol { repeated_cv, holdout };

struct RunConfig {
  std::optional<BundlePaths> inputs;
  std::optional<SyntheticOptions> synthetic;
  ModelSpec model = GbmConfig{};
  Protocol protocol = Protocol::repeated_cv;
  std::size_t cv_folds = 5;
  std::size_t cv_repeats = 5;
  double holdout_fraction = 0.2;
  Seed seed{42};
  std::filesystem::path output_dir = "out";
  bool include_occupancy = true;
};

/// Relative paths inside the config resolve against `base_dir`. Throws
/// ConfigError on unknown keys, bad values, or when not exactly one of
/// "inputs" / "synthetic" is present.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUser = 2;

/// Runs one command and returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stormloss

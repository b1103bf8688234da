#pragma once

#include <iosfwd>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "lameeig/adaptivity.hpp"

namespace lameeig::cli {

/// Invalid configuration; `keys` names the offending entries.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::vector<std::string> keys)
      : std::runtime_error(what), keys_(std::move(keys)) {}
  [[nodiscard]] const std::vector<std::string>& keys() const { return keys_; }

 private:
  std::vector<std::string> keys_;
};

struct OutputOptions {
  std::string csv = "report.csv";
  std::string json = "summary.json";
  bool vtk = false;
  std::string vtk_prefix = "level";
  /// Fill the seconds column (off by default so reports are reproducible).
  bool record_time = false;
};

struct StudyConfig {
  StudySettings settings;
  OutputOptions output;
  /// The configuration with every default filled in and alpha_inv resolved.
  nlohmann::json resolved;
};

StudyConfig parse_config(const nlohmann::json& doc);
/// Reads and parses a config file; an empty or malformed file is a ConfigError.
StudyConfig load_config(const std::string& path);

void write_csv(std::ostream& out, const StudyResult& result, const StudyConfig& config);
nlohmann::json summary_json(const StudyResult& result, const StudyConfig& config);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column by name; throws std::out_of_range when absent.
  [[nodiscard]] std::size_t column(const std::string& name) const;
};
CsvTable read_csv(std::istream& in);

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

/// Runs one config and writes its reports into out_dir. Diagnostics go to log.
int run_config(const std::string& config_path, const std::string& out_dir, std::ostream& log);

/// Writes K and M of uniform level `level` (index into the config's levels)
/// as Matrix Market files into out_dir.
int export_matrix(const std::string& config_path, int level, const std::string& out_dir, std::ostream& log);

}  // namespace lameeig::cli

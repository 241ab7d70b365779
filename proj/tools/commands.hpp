#pragma once

// Workflows behind the `koop` executable. Each command returns the process
// exit code: 0 success, 2 input error, 3 numerical failure.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopman/dictionary.hpp"
#include "koopman/spectral.hpp"

namespace koop {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// Command-line overrides layered over the JSON config.
struct RunOptions {
  std::optional<std::filesystem::path> config;
  std::optional<double> tol;
  std::optional<double> threshold;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> model;
  std::optional<std::string> x0;
  std::optional<long long> horizon;
  std::optional<std::string> column;
};

/// Reads `trajectory_id,t,<features...>` rows grouped by trajectory.
koopman::TrajectorySet read_trajectory_csv(const std::filesystem::path& path);

struct DictionarySpec {
  koopman::Dictionary dictionary;
  koopman::DictionaryHash hash;
};

/// Builds a dictionary from its declarative JSON form against the data's
/// feature names. The hash covers the canonical dump of `doc`.
DictionarySpec parse_dictionary(const nlohmann::json& doc,
                                const std::vector<std::string>& feature_names);

koopman::DictionaryHash hash_document(const nlohmann::json& doc);

/// JSON text with every floating-point number printed to 17 significant digits.
std::string dump_json(const nlohmann::json& doc, int indent = 2);

std::string format_double(double v);

int cmd_fit(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_predict(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_spectrum(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_reduce(const RunOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace koop

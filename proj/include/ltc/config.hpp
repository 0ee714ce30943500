#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltc/data.hpp"
#include "ltc/trainer.hpp"

namespace ltc {

/// Configuration problems carry the offending line and key so the CLI can
/// report them precisely and exit with the config-error status.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// One experiment: dataset recipe, training recipe, output location and
/// the seed list used by sweep commands.
struct ExperimentConfig {
  LongTailedDatasetSpec dataset;
  TrainConfig train;
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds;  // sweep seeds; defaults to {train.seed}
  int diagnose_batches = 20;
};

/// Parses the flat key-value format ([section] headers, key = value lines,
/// '#'/';' comments). Unknown keys, bad values and malformed lines throw
/// ConfigError naming the line. `overrides` are "section.key=value" strings
/// applied after the file.
ExperimentConfig parse_experiment_text(const std::string& text,
                                       std::span<const std::string> overrides = {});
ExperimentConfig parse_experiment_file(const std::string& path,
                                       std::span<const std::string> overrides = {});

/// Default configuration with no file at all.
ExperimentConfig default_experiment_config();

/// Canonical serialization of every effective value, sorted by key. Two
/// configs hash equal iff this text is equal.
std::string canonical_config(const ExperimentConfig& cfg);

/// FNV-1a over canonical_config. Recorded in every output file header and
/// in checkpoints.
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// FNV-1a 64-bit over arbitrary bytes.
std::uint64_t fnv1a64(std::span<const char> bytes);

}  // namespace ltc

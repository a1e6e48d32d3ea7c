#pragma once

// Flat key = value run configuration.
//
//   # comment
//   shots = 5
//   beta = 0.75
//
// Every key has a default; a file overrides defaults and command-line flags
// override the file. Unknown keys and malformed values raise InputError.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bamp/embedding_store.hpp"
#include "bamp/ensemble.hpp"

namespace bamp {

struct RunConfig {
  PlanMode mode = PlanMode::big_start;
  std::size_t shots = 5;
  std::size_t sessions = 0;      // 0: default for the mode
  std::uint64_t plan_seed = 0;   // 0: ascending class order
  std::uint64_t seed = 0;        // training, shot sampling and projection
  ProtocolConfig protocol;

  /// Every key in canonical order with its current value.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// Sets one key. Throws InputError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Range checks across all fields.
  void validate() const;

  /// Protocol settings with the per-component seeds derived from `seed`.
  ProtocolConfig resolved_protocol() const;
  std::optional<std::size_t> session_override() const;

  /// FNV-1a over the canonical entries.
  std::uint64_t hash() const;
  /// Hash over the keys that influence base training only; stored in checkpoints.
  std::uint64_t training_hash() const;
};

/// All recognized keys, canonical order.
const std::vector<std::string>& config_keys();

/// Applies a key = value file on top of `config`.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Canonical file text, readable back by apply_config_file.
std::string format_config(const RunConfig& config);

}  // namespace bamp

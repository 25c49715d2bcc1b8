#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "hedgebench/market_sim.hpp"
#include "hedgebench/objective.hpp"
#include "hedgebench/policy.hpp"
#include "hedgebench/train.hpp"

namespace hedgebench {

struct SimConfig {
  std::size_t n_train_paths = 10000;
  std::size_t n_val_paths = 2000;
  std::uint64_t seed = 42;

  std::size_t total() const { return n_train_paths + n_val_paths; }
  double train_fraction() const {
    return static_cast<double>(n_train_paths) / static_cast<double>(total());
  }
};

struct RunConfig {
  HestonParams heston;
  SimConfig sim;
  ArchConfig net;
  TrainConfig train;
  OptionSpec option;
  CostModel cost;

  void validate() const;
  /// Canonical `key = value` listing of every key, sorted.
  std::string canonical() const;
  /// FNV-1a of canonical(), as 16 hex digits.
  std::string content_hash() const;
};

/// Parses flat `section.key = value` text. `#` starts a comment; missing keys
/// keep their defaults; unknown keys, malformed values and invariant
/// violations throw with the key and line number.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `key = value` assignment (used by the parser and for overrides).
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace hedgebench

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hedgebench/config.hpp"
#include "hedgebench/eval_stats.hpp"
#include "hedgebench/train.hpp"

namespace hedgebench {

inline constexpr const char* kToolVersion = "0.1.0";

struct ManifestEntry {
  std::string name;
  /// FNV-1a of the file bytes; for curve files the wall-clock `seconds`
  /// column is left out of the hashed content.
  std::string hash;
  std::string scope;  // "full", "excluding-seconds" or "volatile"
};

struct PipelineResult {
  std::string manifest_hash;
  std::vector<ManifestEntry> files;
  /// True when an earlier manifest for the same config was found and matched.
  bool verified_previous = false;
  bool had_previous = false;
  ComparisonReport comparison;
};

/// Curve CSV content with the `seconds` column removed, the hashed form of
/// curve files.
std::string curve_hash_content(const std::vector<EpochRecord>& curve);

/// simulate -> split -> train(adam) -> train(kfac) -> evaluate both -> compare,
/// writing every artifact plus manifest.json into `out_dir`. Both optimizers
/// share data, initial weights and batch order. If `out_dir` already holds a
/// manifest for the same config hash, the new manifest hash must match it or
/// an Error(Determinism) is raised.
PipelineResult run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir, const LogFn& log = {});

}  // namespace hedgebench

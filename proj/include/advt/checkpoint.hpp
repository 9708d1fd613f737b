// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "advt/errors.hpp"
#include "advt/model.hpp"
#include "advt/optimizer.hpp"

namespace advt {

/// Unreadable, truncated, or mismatched checkpoint.
class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

struct Checkpoint {
  Model model;
  OptimizerState optimizer;
  std::uint64_t vocab_fingerprint = 0;
  std::uint64_t step = 0;

  std::uint64_t config_fingerprint() const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian layout:
///   "ADVT", u32 version, u64 step, u64 vocab fingerprint, u64 config
///   fingerprint, 6 x u64 model config, u64 optimizer step, 5 x f64
///   optimizer constants, u32 record count, records, u64 FNV-1a checksum of
///   everything before it.
/// A record is u32 name length, name, u32 rank, rank x u64 dims, f64 values.
/// Records: "frequencies", "param/<name>", "adam.m/<name>", "adam.v/<name>".
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Refuses checkpoints built for a different vocabulary when a fingerprint is
/// given.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_vocab_fingerprint = std::nullopt);

/// The vocabulary file stored next to a checkpoint.
std::filesystem::path vocab_path_for(const std::filesystem::path& checkpoint_path);

}  // namespace advt

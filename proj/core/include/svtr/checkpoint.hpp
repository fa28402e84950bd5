#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "svtr/config.hpp"
#include "svtr/model.hpp"

namespace svtr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class RecordKind : std::uint8_t { kParameter = 0, kBuffer = 1 };

struct TensorRecord {
  std::string name;
  RecordKind kind = RecordKind::kParameter;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  SvtrConfig config;
  std::uint64_t step = 0;
  std::map<std::string, double> metrics;
  std::vector<TensorRecord> records;
};

/// Snapshot of every parameter and BN running statistic of `model`.
Checkpoint make_checkpoint(const SvtrModel& model, std::uint64_t step,
                           std::map<std::string, double> metrics = {});

/// Binary layout (all integers little-endian):
///   "SVTRCKPT" u32 version
///   u32 header_bytes, header text (config echo, step, metrics), u32 crc32(header)
///   u32 record_count, then per record:
///     u16 name_bytes, name, u8 kind, u8 dtype (0 = f32), u8 rank, u64 dims[rank],
///     u64 payload_bytes, payload, u32 crc32(name .. payload)
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws kChecksum on a CRC mismatch and kParse on structural damage.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies the records into `model`. Throws kCompatibility listing the differing
/// config fields, or naming missing/mis-shaped tensors.
void restore_checkpoint(SvtrModel& model, const Checkpoint& checkpoint);

/// Builds a model from the stored config and restores it.
SvtrModel load_model(const std::filesystem::path& path, std::uint64_t seed = 0);

/// Number of float values stored in parameter records.
std::size_t serialized_parameter_floats(const Checkpoint& checkpoint);

}  // namespace svtr

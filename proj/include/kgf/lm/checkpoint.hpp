#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "kgf/lm/model.hpp"

namespace kgf::lm {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: magic "KGFCKPT1", u32 version, config header, optional adapter
/// header, tensor directory (name, rows, cols), little-endian float32
/// payloads in directory order, trailing CRC-32 of every preceding byte.
std::string serialize_checkpoint(const Model<float>& model);
void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);

/// Throws CheckpointError on bad magic, version mismatch, truncation or checksum failure.
Model<float> load_checkpoint(const std::filesystem::path& path);
Model<float> deserialize_checkpoint(const std::string& bytes);

}  // namespace kgf::lm

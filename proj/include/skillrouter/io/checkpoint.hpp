#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"
#include "skillrouter/personalization/model.hpp"

namespace skillrouter::io {

// File layout: 8-byte magic "SKRCKPT1", u32 format version, u64 header
// length, header JSON, u64 record count, then per parameter u32 path length,
// path, u32 rank, u64 dims, little-endian float64 payload; finally a 32-byte
// SHA-256 of every preceding byte. All integers are little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

struct Checkpoint {
  personalization::Model model;
  // Free-form metadata stored with the model: invocation patterns and
  // aliases for inference, provenance of the producing run.
  nlohmann::json extra = nlohmann::json::object();
};

// Serialized bytes; identical models and metadata give identical bytes.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

// Writes the checkpoint and returns the hex digest stored in its trailer.
std::string save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Hex digest from the trailer of an encoded checkpoint.
std::string checkpoint_digest(std::string_view bytes);

}  // namespace skillrouter::io

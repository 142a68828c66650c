#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vpr/model.hpp"

namespace vpr {

// Thrown for malformed inputs: bad config keys, bad checkpoint magic/version/
// CRC, missing files. The CLI maps it to exit code 1.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

uint32_t crc32(const void* data, size_t length, uint32_t seed = 0);

// Binary model image: magic "VPRC", u32 format version, architecture tag,
// build metadata, a named layer table (name, shape, payload offset),
// little-endian float32 parameters and a trailing CRC32 over everything
// before it. Round-trips are byte-identical.
std::vector<uint8_t> serialize_model(const Model& model);
Model deserialize_model(const std::vector<uint8_t>& bytes);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace vpr

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "prn/params.hpp"

namespace prn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ArrayRecord {
  std::string name;
  std::vector<Eigen::Index> shape;
  std::uint64_t offset = 0;  // bytes into the blob section
  std::uint64_t nbytes = 0;
};

struct CheckpointData {
  std::vector<ArrayRecord> arrays;  // sorted by name
  std::vector<float> blob;          // contiguous little-endian float32 values
  std::string config_json;          // canonical snapshot text
};

// Container layout: 8-byte magic (7 id bytes + 1 version byte), 8-byte
// little-endian manifest length, JSON manifest (array names, shapes, dtype,
// byte order, offsets, config snapshot, blob checksum), then the raw float32
// blobs. Writing the same arrays and config twice produces identical bytes.
void save_checkpoint(const std::string& path, const std::vector<ParamRef<float>>& arrays,
                     const std::string& config_json);

// Throws CheckpointError on wrong magic, unsupported container version,
// malformed manifest, or checksum mismatch.
CheckpointData load_checkpoint(const std::string& path);

// Copy loaded values into live arrays, matching by name. Every live array
// must be present with the same shape; mismatches name the offender.
void restore_arrays(const CheckpointData& data, const std::vector<ParamRef<float>>& arrays);

}  // namespace prn

#pragma once

// Binary checkpoint: "MREC1", uint32 entry count, then per entry uint32
// name length, name bytes, uint32 rank, uint64 dims, little-endian doubles.
// A uint64 length and the producing config text follow the tensors.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "metarec/params.hpp"

namespace metarec {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ParameterSet params;
  std::string config_text;
};

std::string encode_checkpoint(const ParameterSet& params, const std::string& config_text);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const std::string& config_text);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace metarec

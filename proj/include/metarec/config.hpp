#pragma once

// Run configuration: a flat "dotted.key = value" text format with '#'
// comments. Every field has a key; serialize() writes them all.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "metarec/data.hpp"
#include "metarec/meta.hpp"
#include "metarec/model.hpp"

namespace metarec {

enum class Variant { kFull, kNoMultiheadVq, kNoVq, kNoRescale, kNoMeta };

inline constexpr Variant kAllVariants[] = {Variant::kFull, Variant::kNoMultiheadVq, Variant::kNoVq,
                                           Variant::kNoRescale, Variant::kNoMeta};

const char* variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct RunConfig {
  // Empty: generate the synthetic corpus described by `synthetic`.
  std::string manifest;
  std::size_t k_core = 5;
  SyntheticSpec synthetic;

  EncoderConfig encoder;
  VqConfig vq;
  MetaConfig meta;
  JointConfig joint;
  std::string target_domain = "target";

  Variant variant = Variant::kFull;
  std::size_t iterations = 500;
  std::size_t eval_every = 50;
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  std::size_t eval_k = 10;

  // Throws std::invalid_argument naming the offending key.
  void validate() const;

  // Model and meta settings after the variant is applied.
  ModelConfig model() const;
  MetaConfig effective_meta() const;

  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& cfg);

// Applies one "key=value" assignment.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

// Sets the training and synthetic-data seeds together.
void override_seed(RunConfig& cfg, std::uint64_t seed);

}  // namespace metarec

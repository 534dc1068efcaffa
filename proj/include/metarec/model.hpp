#pragma once

// The training objective: backbone over (optionally quantized) item
// matrices, cross entropy plus VQ loss.

#include <optional>
#include <string>
#include <string_view>

#include "metarec/backbone.hpp"
#include "metarec/data.hpp"
#include "metarec/params.hpp"

namespace metarec {

struct VqConfig {
  bool enabled = true;
  std::size_t heads = 2;
  bool quantize_target = false;
};

struct ModelConfig {
  EncoderConfig encoder;
  VqConfig vq;
  std::string target_domain = "target";

  void validate() const { encoder.validate(vq.enabled ? vq.heads : 1); }
};

struct DomainItems {
  ad::Tensor matrix;                // [|I| x d_model]
  std::optional<ad::Tensor> vq;     // present when the rows were quantized
};

DomainItems domain_items(const ParameterSet& params, const ModelConfig& cfg, std::string_view domain);

// Final-position encoder states for every row of the batch, [B x d_model].
// Padding positions enter the encoder as zero vectors.
ad::Tensor user_states(const ParameterSet& params, const ModelConfig& cfg, const ad::Tensor& item_matrix,
                       const TaskBatch& batch);

// Scores for every row of the batch against the domain's items.
ad::Tensor batch_logits(const ParameterSet& params, const ModelConfig& cfg, const TaskBatch& batch);

struct LossParts {
  ad::Tensor total;
  ad::Tensor recommendation;
  std::optional<ad::Tensor> vq;
};

// Cross entropy over the batch plus (when include_vq and the domain is
// quantized) the VQ loss over the domain's quantized rows.
LossParts batch_loss(const ParameterSet& params, const ModelConfig& cfg, const TaskBatch& batch,
                     bool include_vq = true);

}  // namespace metarec

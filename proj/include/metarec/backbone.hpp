#pragma once

// Sequential recommender f = f_m o f_e: per-domain embedding tables, a
// causal gated linear-recurrence encoder, inner-product scoring over the full
// item space and cross-entropy loss.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metarec/autodiff.hpp"
#include "metarec/params.hpp"

namespace metarec {

struct EncoderConfig {
  std::size_t d_model = 16;
  std::size_t num_blocks = 1;
  std::size_t max_len = 20;

  // Throws std::invalid_argument naming the offending field.
  void validate(std::size_t vq_heads) const;
};

struct DomainShape {
  std::string domain;
  std::size_t items = 0;
};

// Parameter names within block b.
std::string block_param(std::size_t block, std::string_view what);

// Weights and embeddings ~ U(-1/sqrt(d), 1/sqrt(d)); decay logits 2.0; norm
// gains 1.0.
ParameterSet init_parameters(const EncoderConfig& cfg, std::span<const DomainShape> domains, std::uint64_t seed);

// Rows of the domain's table for `items` -> [T x d_model].
ad::Tensor embed(const ParameterSet& params, std::string_view domain, std::span<const std::size_t> items);

// Inputs are time-major: row t * batch + b holds position t of sequence b.
// Returns the gated recurrent states of one block, same layout.
ad::Tensor recurrence(const ParameterSet& params, std::size_t block, const ad::Tensor& inputs, std::size_t batch);

// Full encoder stack; output at position t depends only on positions <= t.
ad::Tensor encode(const ParameterSet& params, const EncoderConfig& cfg, const ad::Tensor& inputs,
                  std::size_t batch = 1);

// Rows of the final position, [batch x d_model].
ad::Tensor last_position(const ad::Tensor& encoded, std::size_t batch);

// hidden [d] -> logits [|I|]; hidden [B x d] -> logits [B x |I|].
ad::Tensor score(const ad::Tensor& hidden, const ad::Tensor& item_matrix);

ad::Tensor cross_entropy_loss(const ad::Tensor& logits, std::size_t target);
ad::Tensor cross_entropy_loss(const ad::Tensor& logits, std::span<const std::size_t> targets);

}  // namespace metarec

#include "metarec/backbone.hpp"

#include <cmath>
#include <stdexcept>

#include "metarec/rng.hpp"

namespace metarec {

namespace {
constexpr double kRmsEps = 1e-8;
constexpr double kDecayInit = 2.0;
}  // namespace

void EncoderConfig::validate(std::size_t vq_heads) const {
  if (d_model == 0) throw std::invalid_argument("encoder.d_model must be positive");
  if (num_blocks == 0) throw std::invalid_argument("encoder.num_blocks must be positive");
  if (max_len == 0) throw std::invalid_argument("encoder.max_len must be positive");
  if (vq_heads == 0 || d_model % vq_heads != 0) {
    throw std::invalid_argument("encoder.d_model (" + std::to_string(d_model) +
                                ") must be divisible by vq.heads (" + std::to_string(vq_heads) + ")");
  }
}

std::string block_param(std::size_t block, std::string_view what) {
  return "encoder." + std::to_string(block) + "." + std::string(what);
}

ParameterSet init_parameters(const EncoderConfig& cfg, std::span<const DomainShape> domains, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = cfg.d_model;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  auto uniform = [&](std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return ad::Tensor::matrix(rows, cols, std::move(v));
  };

  ParameterSet p;
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    p.set(block_param(b, "w_in"), uniform(d, d));
    p.set(block_param(b, "decay"), ad::Tensor::full({1, d}, kDecayInit));
    p.set(block_param(b, "ffn_w1"), uniform(d, d));
    p.set(block_param(b, "ffn_w2"), uniform(d, d));
    p.set(block_param(b, "norm_gain"), ad::Tensor::full({1, d}, 1.0));
  }
  for (const auto& dom : domains) {
    auto name = embedding_name(dom.domain);
    if (p.contains(name)) throw std::invalid_argument("duplicate domain '" + dom.domain + "'");
    if (dom.items == 0) throw std::invalid_argument("domain '" + dom.domain + "' has no items");
    p.set(name, uniform(dom.items, d));
  }
  return p;
}

ad::Tensor embed(const ParameterSet& params, std::string_view domain, std::span<const std::size_t> items) {
  auto name = embedding_name(domain);
  if (!params.contains(name)) throw std::invalid_argument("unknown domain '" + std::string(domain) + "'");
  return ad::gather(params.at(name), items);
}

ad::Tensor recurrence(const ParameterSet& params, std::size_t block, const ad::Tensor& inputs, std::size_t batch) {
  const ad::Tensor& w_in = params.at(block_param(block, "w_in"));
  if (inputs.rank() != 2 || inputs.dim(1) != w_in.dim(0) || batch == 0 || inputs.dim(0) % batch != 0) {
    throw std::invalid_argument("recurrence: inputs " + ad::shape_str(inputs.shape()) +
                                " incompatible with width " + std::to_string(w_in.dim(0)) + " and batch " +
                                std::to_string(batch));
  }
  const std::size_t steps = inputs.dim(0) / batch;
  ad::Tensor u = ad::matmul(inputs, w_in);
  ad::Tensor keep = ad::sigmoid(params.at(block_param(block, "decay")));
  ad::Tensor take = ad::add_scalar(ad::neg(keep), 1.0);
  ad::Tensor keep_b = ad::expand(keep, 0, batch);
  ad::Tensor take_b = ad::expand(take, 0, batch);

  std::vector<ad::Tensor> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    ad::Tensor drive = ad::mul(take_b, ad::slice(u, 0, t * batch, (t + 1) * batch));
    states.push_back(t == 0 ? drive : ad::add(ad::mul(keep_b, states.back()), drive));
  }
  return steps == 1 ? states.front() : ad::concat(states, 0);
}

ad::Tensor encode(const ParameterSet& params, const EncoderConfig& cfg, const ad::Tensor& inputs,
                  std::size_t batch) {
  if (batch == 0 || inputs.rank() != 2 || inputs.dim(0) % batch != 0) {
    throw std::invalid_argument("encode: inputs " + ad::shape_str(inputs.shape()) + " do not hold " +
                                std::to_string(batch) + " sequences");
  }
  const std::size_t steps = inputs.dim(0) / batch;
  if (steps > cfg.max_len) {
    throw std::invalid_argument("encode: sequence length " + std::to_string(steps) + " exceeds max_len " +
                                std::to_string(cfg.max_len));
  }
  const std::size_t rows = inputs.dim(0);
  const std::size_t d = inputs.dim(1);
  ad::Tensor x = inputs;
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    ad::Tensor h = recurrence(params, b, x, batch);
    ad::Tensor f = ad::matmul(ad::relu(ad::matmul(h, params.at(block_param(b, "ffn_w1")))),
                              params.at(block_param(b, "ffn_w2")));
    ad::Tensor y = ad::add(f, x);
    ad::Tensor rms = ad::sqrt(ad::add_scalar(ad::mean(ad::square(y), 1), kRmsEps));
    ad::Tensor normed = ad::div(y, ad::expand(rms, 1, d));
    x = ad::mul(normed, ad::expand(params.at(block_param(b, "norm_gain")), 0, rows));
  }
  return x;
}

ad::Tensor last_position(const ad::Tensor& encoded, std::size_t batch) {
  const std::size_t rows = encoded.dim(0);
  return ad::slice(encoded, 0, rows - batch, rows);
}

ad::Tensor score(const ad::Tensor& hidden, const ad::Tensor& item_matrix) {
  if (item_matrix.rank() != 2) throw std::invalid_argument("score: item matrix must be rank 2");
  const std::size_t d = item_matrix.dim(1);
  if (hidden.rank() == 1) {
    if (hidden.dim(0) != d) {
      throw std::invalid_argument("score: hidden width " + std::to_string(hidden.dim(0)) +
                                  " vs item width " + std::to_string(d));
    }
    return ad::reshape(ad::matmul(item_matrix, ad::reshape(hidden, {d, 1})), {item_matrix.dim(0)});
  }
  if (hidden.rank() != 2 || hidden.dim(1) != d) {
    throw std::invalid_argument("score: hidden " + ad::shape_str(hidden.shape()) + " vs item matrix " +
                                ad::shape_str(item_matrix.shape()));
  }
  return ad::matmul(hidden, ad::transpose(item_matrix));
}

ad::Tensor cross_entropy_loss(const ad::Tensor& logits, std::size_t target) {
  if (logits.rank() != 1) throw std::invalid_argument("cross_entropy_loss: expected a logit vector");
  const std::size_t t[] = {target};
  return ad::cross_entropy(logits, t);
}

ad::Tensor cross_entropy_loss(const ad::Tensor& logits, std::span<const std::size_t> targets) {
  return ad::cross_entropy(logits, targets);
}

}  // namespace metarec

#include "metarec/model.hpp"

#include <stdexcept>

#include "metarec/vq.hpp"

namespace metarec {

DomainItems domain_items(const ParameterSet& params, const ModelConfig& cfg, std::string_view domain) {
  if (!cfg.vq.enabled) return {params.at(embedding_name(domain)), std::nullopt};
  Codebook book(params, cfg.target_domain, cfg.vq.heads);
  auto q = quantize_items(params, domain, book, cfg.vq.quantize_target);
  if (!q.quantized) return {q.matrix, std::nullopt};
  return {q.matrix, vq_loss(q.z_q, q.z_e)};
}

ad::Tensor user_states(const ParameterSet& params, const ModelConfig& cfg, const ad::Tensor& item_matrix,
                       const TaskBatch& batch) {
  const std::size_t rows = batch.size();
  const std::size_t steps = batch.window;
  const std::size_t d = item_matrix.dim(1);
  const std::size_t items = item_matrix.dim(0);
  if (rows == 0) throw std::invalid_argument("empty batch for domain '" + batch.domain + "'");
  std::vector<std::size_t> idx(rows * steps);
  std::vector<double> mask(rows * steps * d, 1.0);
  bool padded = false;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < rows; ++b) {
      ItemId id = batch.input(b, t);
      const std::size_t pos = t * rows + b;
      if (id == batch.padding) {
        idx[pos] = 0;
        std::fill_n(mask.begin() + pos * d, d, 0.0);
        padded = true;
      } else {
        if (id >= items) {
          throw std::invalid_argument("item id " + std::to_string(id) + " out of range for domain '" +
                                      batch.domain + "'");
        }
        idx[pos] = id;
      }
    }
  }
  ad::Tensor x = ad::gather(item_matrix, idx);
  if (padded) x = ad::mul(x, ad::Tensor({rows * steps, d}, std::move(mask)));
  return last_position(encode(params, cfg.encoder, x, rows), rows);
}

ad::Tensor batch_logits(const ParameterSet& params, const ModelConfig& cfg, const TaskBatch& batch) {
  auto items = domain_items(params, cfg, batch.domain);
  return score(user_states(params, cfg, items.matrix, batch), items.matrix);
}

LossParts batch_loss(const ParameterSet& params, const ModelConfig& cfg, const TaskBatch& batch, bool include_vq) {
  auto items = domain_items(params, cfg, batch.domain);
  ad::Tensor logits = score(user_states(params, cfg, items.matrix, batch), items.matrix);
  LossParts out;
  out.recommendation = cross_entropy_loss(logits, batch.targets);
  out.total = out.recommendation;
  if (include_vq && items.vq) {
    out.vq = *items.vq;
    out.total = ad::add(out.recommendation, *items.vq);
  }
  return out;
}

}  // namespace metarec

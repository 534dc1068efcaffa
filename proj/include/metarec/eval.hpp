#pragma once

// Full-ranking evaluation on one domain: NDCG@k, Recall@k and uncut MRR.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "metarec/autodiff.hpp"
#include "metarec/data.hpp"
#include "metarec/model.hpp"
#include "metarec/params.hpp"

namespace metarec {

struct EvalResult {
  double ndcg = 0.0;
  double recall = 0.0;
  double mrr = 0.0;
  std::size_t k = 10;
  std::size_t num_users = 0;
};

struct RankMetrics {
  double ndcg = 0.0;
  double recall = 0.0;
  double rr = 0.0;
};

// 1 + #(score > truth score) + #(score == truth score, id < truth): the
// position of the truth under the order (score desc, id asc).
std::size_t rank_of_truth(std::span<const double> scores, std::size_t truth);
std::size_t rank_of_truth(const ad::Tensor& scores, std::size_t truth);

RankMetrics metrics_from_rank(std::size_t rank, std::size_t k);

// Means over users in dataset order.
EvalResult summarize_ranks(std::span<const std::size_t> ranks, std::size_t k);

// [users x items] scores of every user's held-out history, computed through
// the same item-matrix path as training.
ad::Tensor score_matrix(const ParameterSet& params, const ModelConfig& model, const DomainDataset& data, Split split);

// One rank per user; fills `ranks` when given.
EvalResult evaluate(const ParameterSet& params, const ModelConfig& model, const DomainDataset& data, Split split,
                    std::size_t k, std::vector<std::size_t>* ranks = nullptr);

// "metric,value" rows.
void write_metrics(std::ostream& out, const EvalResult& result);
// "user_id,rank" rows.
void write_ranks(std::ostream& out, const DomainDataset& data, std::span<const std::size_t> ranks);

}  // namespace metarec

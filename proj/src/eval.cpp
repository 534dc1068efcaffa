#include "metarec/eval.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace metarec {

std::size_t rank_of_truth(std::span<const double> scores, std::size_t truth) {
  if (truth >= scores.size()) {
    throw std::out_of_range("rank_of_truth: truth " + std::to_string(truth) + " outside " +
                            std::to_string(scores.size()) + " items");
  }
  const double t = scores[truth];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > t || (scores[i] == t && i < truth)) ++rank;
  }
  return rank;
}

std::size_t rank_of_truth(const ad::Tensor& scores, std::size_t truth) {
  if (scores.rank() != 1) throw std::invalid_argument("rank_of_truth: expected a score vector, got " + ad::shape_str(scores.shape()));
  return rank_of_truth(scores.data(), truth);
}

RankMetrics metrics_from_rank(std::size_t rank, std::size_t k) {
  if (rank == 0) throw std::invalid_argument("metrics_from_rank: ranks start at 1");
  if (k == 0) throw std::invalid_argument("metrics_from_rank: k must be positive");
  RankMetrics m;
  m.rr = 1.0 / static_cast<double>(rank);
  if (rank <= k) {
    m.recall = 1.0;
    m.ndcg = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  return m;
}

EvalResult summarize_ranks(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw std::invalid_argument("evaluate: no users to evaluate");
  EvalResult r;
  r.k = k;
  r.num_users = ranks.size();
  for (std::size_t rank : ranks) {
    auto m = metrics_from_rank(rank, k);
    r.ndcg += m.ndcg;
    r.recall += m.recall;
    r.mrr += m.rr;
  }
  const double n = static_cast<double>(ranks.size());
  r.ndcg /= n;
  r.recall /= n;
  r.mrr /= n;
  return r;
}

ad::Tensor score_matrix(const ParameterSet& params, const ModelConfig& model, const DomainDataset& data, Split split) {
  TaskBatch batch = evaluation_batch(data, split, model.encoder.max_len);
  return batch_logits(params.detached(), model, batch);
}

EvalResult evaluate(const ParameterSet& params, const ModelConfig& model, const DomainDataset& data, Split split,
                    std::size_t k, std::vector<std::size_t>* ranks) {
  if (k == 0) throw std::invalid_argument("eval.k must be positive");
  TaskBatch batch = evaluation_batch(data, split, model.encoder.max_len);
  ad::Tensor scores = batch_logits(params.detached(), model, batch);
  const std::size_t items = scores.dim(1);
  std::vector<std::size_t> out(batch.size());
  for (std::size_t u = 0; u < batch.size(); ++u) {
    out[u] = rank_of_truth(scores.data().subspan(u * items, items), batch.targets[u]);
  }
  EvalResult r = summarize_ranks(out, k);
  if (ranks) *ranks = std::move(out);
  return r;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics(std::ostream& out, const EvalResult& r) {
  const std::string k = std::to_string(r.k);
  out << "metric,value\n";
  out << "ndcg@" << k << ',' << num(r.ndcg) << '\n';
  out << "recall@" << k << ',' << num(r.recall) << '\n';
  out << "mrr," << num(r.mrr) << '\n';
  out << "users," << r.num_users << '\n';
}

void write_ranks(std::ostream& out, const DomainDataset& data, std::span<const std::size_t> ranks) {
  if (ranks.size() != data.users.size()) throw std::invalid_argument("write_ranks: one rank per user expected");
  out << "user_id,rank\n";
  for (std::size_t u = 0; u < ranks.size(); ++u) out << data.users[u].user << ',' << ranks[u] << '\n';
}

}  // namespace metarec

#pragma once

// Multi-domain interaction logs: ingestion, k-core filtering, leave-one-out
// splits, batch sampling and a synthetic Markov-chain generator.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "metarec/rng.hpp"

namespace metarec {

using ItemId = std::size_t;

struct UserSequence {
  std::string user;
  std::vector<ItemId> items;  // chronological
};

// One domain's interactions over a domain-local dense item space.
struct DomainLog {
  std::string domain;
  std::vector<std::string> item_tags;  // id -> tag
  std::vector<UserSequence> users;

  std::size_t item_count() const { return item_tags.size(); }
  std::size_t num_events() const;
};

// Reads "domain<TAB>user<TAB>item<TAB>timestamp" lines. '#' lines and blank
// lines are skipped. Throws std::runtime_error naming the line on bad input.
std::vector<DomainLog> parse_interactions(std::istream& in);
std::vector<DomainLog> load_interactions(const std::filesystem::path& path);

// One line per event; the timestamp is the position in the user's sequence.
void write_interactions(std::ostream& out, const DomainLog& log);

// Maximal sub-log in which every user and every item has at least k
// interactions. Item ids are re-densified in ascending original-id order.
DomainLog k_core_filter(const DomainLog& log, std::size_t k);

struct UserSplit {
  std::string user;
  std::vector<ItemId> train;
  ItemId validation = 0;
  ItemId test = 0;
};

struct DomainDataset {
  std::string domain;
  std::size_t item_count = 0;
  std::vector<std::string> item_tags;
  std::vector<UserSplit> users;
  std::size_t dropped_users = 0;

  // Reserved id that marks left padding; never a scoring candidate.
  ItemId padding_id() const { return item_count; }
};

// Last item tests, second-to-last validates, the rest trains. Sequences
// shorter than three are dropped and counted.
DomainDataset leave_one_out_split(const DomainLog& log);

enum class Split { kTrain, kValidation, kTest };

const char* split_name(Split split);
Split parse_split(const std::string& name);

// Item-id windows (batch-major, `window` columns, left padded) and the item
// that follows each window.
struct TaskBatch {
  std::string domain;
  std::size_t window = 0;
  ItemId padding = 0;
  std::vector<ItemId> inputs;
  std::vector<ItemId> targets;

  std::size_t size() const { return targets.size(); }
  ItemId input(std::size_t row, std::size_t t) const { return inputs[row * window + t]; }
};

// Users with at least two training items carry a (window, next item) pair.
std::vector<std::size_t> train_eligible_users(const DomainDataset& data);

// Uniform-with-replacement user sampling. Training rows use a random cut of
// the train prefix; validation/test rows use the full history before the
// held-out item.
TaskBatch sample_batch(const DomainDataset& data, Split split, std::size_t batch_size,
                       std::size_t window, Rng& rng);

// Training rows for the given users (indices into data.users), in order.
TaskBatch train_batch_for_users(const DomainDataset& data, std::span<const std::size_t> users,
                                std::size_t window, Rng& rng);

// `count` training batches whose users are pairwise distinct whenever the
// eligible population allows it.
std::vector<TaskBatch> sample_disjoint_batches(const DomainDataset& data, std::size_t count,
                                               std::size_t batch_size, std::size_t window, Rng& rng);

// Every user once, in dataset order, for evaluation.
TaskBatch evaluation_batch(const DomainDataset& data, Split split, std::size_t window);

// ---- synthetic generator -------------------------------------------------

struct SyntheticSpec {
  std::size_t num_sources = 3;
  std::size_t items = 100;
  std::size_t source_users = 2000;
  std::size_t target_users = 200;
  std::size_t min_len = 6;
  std::size_t max_len = 20;
  // Successors per item that carry most of a row's probability mass.
  std::size_t fanout = 3;
  double rho = 0.9;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticDomain {
  DomainLog log;
  // Row-stochastic transition matrix in the domain's own labels.
  std::vector<std::vector<double>> transition;
  // permutation[latent item] = domain item id.
  std::vector<std::size_t> permutation;
};

struct SyntheticCorpus {
  std::vector<SyntheticDomain> sources;
  SyntheticDomain target;
};

// Sources are named "source0".."sourceM-1", the target "target". Each
// domain's chain is rho * relabeled(base) + (1 - rho) * fresh, row-normalized.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

// Random row-stochastic matrix with a few dominant successors per row.
std::vector<std::vector<double>> random_transition_matrix(std::size_t items, std::size_t fanout, Rng& rng);

}  // namespace metarec

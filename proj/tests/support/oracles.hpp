#pragma once

// Brute-force references for the data and ranking code.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "metarec/data.hpp"
#include "metarec/rng.hpp"

namespace checks {

// (user tag, item tag) -> multiplicity.
using EdgeBag = std::map<std::pair<std::string, std::string>, std::size_t>;

inline EdgeBag edge_bag(const metarec::DomainLog& log) {
  EdgeBag bag;
  for (const auto& u : log.users) {
    for (auto i : u.items) ++bag[{u.user, log.item_tags.at(i)}];
  }
  return bag;
}

// Strip every user and item under k in one round, repeat until nothing moves.
inline EdgeBag peel(EdgeBag bag, std::size_t k) {
  while (true) {
    std::map<std::string, std::size_t> udeg, ideg;
    for (const auto& [e, n] : bag) {
      udeg[e.first] += n;
      ideg[e.second] += n;
    }
    EdgeBag next;
    for (const auto& [e, n] : bag) {
      if (udeg[e.first] >= k && ideg[e.second] >= k) next[e] = n;
    }
    if (next.size() == bag.size()) return next;
    bag = std::move(next);
  }
}

// Random bipartite log with up to max_users users and max_items items.
inline metarec::DomainLog random_log(metarec::Rng& rng, std::size_t max_users, std::size_t max_items) {
  metarec::DomainLog log;
  log.domain = "d";
  const std::size_t items = rng.between(1, max_items);
  const std::size_t users = rng.between(1, max_users);
  for (std::size_t i = 0; i < items; ++i) log.item_tags.push_back("i" + std::to_string(i));
  const double density = rng.uniform(0.05, 0.6);
  for (std::size_t u = 0; u < users; ++u) {
    metarec::UserSequence s{"u" + std::to_string(u), {}};
    for (std::size_t i = 0; i < items; ++i) {
      if (rng.uniform() < density) s.items.push_back(i);
    }
    // occasional repeat
    if (!s.items.empty() && rng.uniform() < 0.2) s.items.push_back(s.items[rng.below(s.items.size())]);
    rng.shuffle(s.items);
    log.users.push_back(std::move(s));
  }
  return log;
}

// Position of the truth after a full sort by (score desc, id asc).
inline std::size_t sorted_rank(const std::vector<double>& scores, std::size_t truth) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(scores[b], a) < std::tie(scores[a], b);
  });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), truth) - order.begin()) + 1;
}

inline std::tuple<double, double, double> sorted_metrics(const std::vector<double>& scores, std::size_t truth,
                                                         std::size_t k) {
  const std::size_t r = sorted_rank(scores, truth);
  const bool hit = r <= k;
  return {hit ? 1.0 / std::log2(static_cast<double>(r) + 1.0) : 0.0, hit ? 1.0 : 0.0, 1.0 / static_cast<double>(r)};
}

}  // namespace checks

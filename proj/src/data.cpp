#include "metarec/data.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

namespace metarec {

std::size_t DomainLog::num_events() const {
  std::size_t n = 0;
  for (const auto& u : users) n += u.items.size();
  return n;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

struct PendingEvent {
  std::int64_t timestamp;
  std::size_t order;
  ItemId item;
};

struct PendingDomain {
  DomainLog log;
  std::unordered_map<std::string, ItemId> items;
  std::unordered_map<std::string, std::size_t> users;
  std::vector<std::vector<PendingEvent>> events;
};

}  // namespace

std::vector<DomainLog> parse_interactions(std::istream& in) {
  std::vector<PendingDomain> domains;
  std::unordered_map<std::string, std::size_t> domain_index;
  std::string line;
  std::size_t line_no = 0;
  std::size_t order = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                               std::to_string(fields.size()));
    }
    std::int64_t ts = 0;
    auto ts_field = fields[3];
    auto [ptr, ec] = std::from_chars(ts_field.data(), ts_field.data() + ts_field.size(), ts);
    if (ec != std::errc() || ptr != ts_field.data() + ts_field.size() || ts_field.empty()) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": timestamp '" + std::string(ts_field) +
                               "' is not an integer");
    }
    std::string domain(fields[0]);
    auto [dit, dnew] = domain_index.try_emplace(domain, domains.size());
    if (dnew) {
      domains.emplace_back();
      domains.back().log.domain = domain;
    }
    PendingDomain& d = domains[dit->second];
    std::string item(fields[2]);
    auto [iit, inew] = d.items.try_emplace(item, d.log.item_tags.size());
    if (inew) d.log.item_tags.push_back(item);
    std::string user(fields[1]);
    auto [uit, unew] = d.users.try_emplace(user, d.log.users.size());
    if (unew) {
      d.log.users.push_back({user, {}});
      d.events.emplace_back();
    }
    d.events[uit->second].push_back({ts, order++, iit->second});
  }

  std::vector<DomainLog> out;
  out.reserve(domains.size());
  for (auto& d : domains) {
    for (std::size_t u = 0; u < d.events.size(); ++u) {
      auto& ev = d.events[u];
      std::stable_sort(ev.begin(), ev.end(),
                       [](const PendingEvent& a, const PendingEvent& b) { return a.timestamp < b.timestamp; });
      auto& items = d.log.users[u].items;
      items.reserve(ev.size());
      for (const auto& e : ev) items.push_back(e.item);
    }
    out.push_back(std::move(d.log));
  }
  return out;
}

std::vector<DomainLog> load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_interactions(in);
}

void write_interactions(std::ostream& out, const DomainLog& log) {
  for (const auto& u : log.users) {
    for (std::size_t t = 0; t < u.items.size(); ++t) {
      out << log.domain << '\t' << u.user << '\t' << log.item_tags.at(u.items[t]) << '\t' << t << '\n';
    }
  }
}

DomainLog k_core_filter(const DomainLog& log, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k_core_filter: k must be at least 1");
  const std::size_t n_users = log.users.size();
  const std::size_t n_items = log.item_count();

  // item -> users holding it, one entry per occurrence
  std::vector<std::vector<std::size_t>> holders(n_items);
  std::vector<std::size_t> user_deg(n_users), item_deg(n_items, 0);
  for (std::size_t u = 0; u < n_users; ++u) {
    user_deg[u] = log.users[u].items.size();
    for (ItemId i : log.users[u].items) {
      holders.at(i).push_back(u);
      ++item_deg[i];
    }
  }

  std::vector<char> user_alive(n_users, 1), item_alive(n_items, 1);
  std::vector<char> user_queued(n_users, 0), item_queued(n_items, 0);
  // Encoded as (is_item, index).
  std::deque<std::pair<bool, std::size_t>> queue;
  for (std::size_t u = 0; u < n_users; ++u) {
    if (user_deg[u] < k) {
      queue.emplace_back(false, u);
      user_queued[u] = 1;
    }
  }
  for (std::size_t i = 0; i < n_items; ++i) {
    if (item_deg[i] < k) {
      queue.emplace_back(true, i);
      item_queued[i] = 1;
    }
  }
  while (!queue.empty()) {
    auto [is_item, idx] = queue.front();
    queue.pop_front();
    if (is_item) {
      item_alive[idx] = 0;
      for (std::size_t u : holders[idx]) {
        if (!user_alive[u]) continue;
        if (--user_deg[u] < k && !user_queued[u]) {
          user_queued[u] = 1;
          queue.emplace_back(false, u);
        }
      }
    } else {
      user_alive[idx] = 0;
      for (ItemId i : log.users[idx].items) {
        if (!item_alive[i]) continue;
        if (--item_deg[i] < k && !item_queued[i]) {
          item_queued[i] = 1;
          queue.emplace_back(true, i);
        }
      }
    }
  }

  DomainLog out;
  out.domain = log.domain;
  std::vector<ItemId> remap(n_items, 0);
  for (std::size_t i = 0; i < n_items; ++i) {
    if (item_alive[i]) {
      remap[i] = out.item_tags.size();
      out.item_tags.push_back(log.item_tags[i]);
    }
  }
  for (std::size_t u = 0; u < n_users; ++u) {
    if (!user_alive[u]) continue;
    UserSequence seq{log.users[u].user, {}};
    for (ItemId i : log.users[u].items) {
      if (item_alive[i]) seq.items.push_back(remap[i]);
    }
    out.users.push_back(std::move(seq));
  }
  return out;
}

DomainDataset leave_one_out_split(const DomainLog& log) {
  DomainDataset d;
  d.domain = log.domain;
  d.item_count = log.item_count();
  d.item_tags = log.item_tags;
  for (const auto& u : log.users) {
    const auto n = u.items.size();
    if (n < 3) {
      ++d.dropped_users;
      continue;
    }
    UserSplit s;
    s.user = u.user;
    s.train.assign(u.items.begin(), u.items.end() - 2);
    s.validation = u.items[n - 2];
    s.test = u.items[n - 1];
    d.users.push_back(std::move(s));
  }
  return d;
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, val or test)");
}

namespace {

void push_window(TaskBatch& b, std::span<const ItemId> history, ItemId target) {
  const std::size_t keep = std::min(history.size(), b.window);
  const std::size_t pad = b.window - keep;
  for (std::size_t i = 0; i < pad; ++i) b.inputs.push_back(b.padding);
  for (std::size_t i = history.size() - keep; i < history.size(); ++i) b.inputs.push_back(history[i]);
  b.targets.push_back(target);
}

void push_train_row(TaskBatch& b, const UserSplit& u, Rng& rng) {
  const std::size_t cut = rng.between(1, u.train.size() - 1);
  push_window(b, std::span<const ItemId>(u.train.data(), cut), u.train[cut]);
}

void push_heldout_row(TaskBatch& b, const UserSplit& u, Split split) {
  if (split == Split::kValidation) {
    push_window(b, u.train, u.validation);
  } else {
    std::vector<ItemId> history = u.train;
    history.push_back(u.validation);
    push_window(b, history, u.test);
  }
}

TaskBatch empty_batch(const DomainDataset& data, std::size_t window) {
  if (window == 0) throw std::invalid_argument("window length must be positive");
  TaskBatch b;
  b.domain = data.domain;
  b.window = window;
  b.padding = data.padding_id();
  return b;
}

}  // namespace

std::vector<std::size_t> train_eligible_users(const DomainDataset& data) {
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < data.users.size(); ++u) {
    if (data.users[u].train.size() >= 2) out.push_back(u);
  }
  return out;
}

TaskBatch sample_batch(const DomainDataset& data, Split split, std::size_t batch_size, std::size_t window,
                       Rng& rng) {
  TaskBatch b = empty_batch(data, window);
  if (batch_size == 0) throw std::invalid_argument("sample_batch: batch size must be positive");
  if (split == Split::kTrain) {
    auto eligible = train_eligible_users(data);
    if (eligible.empty()) {
      throw std::runtime_error("sample_batch: domain '" + data.domain + "' has an empty train split");
    }
    for (std::size_t i = 0; i < batch_size; ++i) push_train_row(b, data.users[eligible[rng.below(eligible.size())]], rng);
  } else {
    if (data.users.empty()) {
      throw std::runtime_error("sample_batch: domain '" + data.domain + "' has an empty " + split_name(split) +
                               " split");
    }
    for (std::size_t i = 0; i < batch_size; ++i) push_heldout_row(b, data.users[rng.below(data.users.size())], split);
  }
  return b;
}

TaskBatch train_batch_for_users(const DomainDataset& data, std::span<const std::size_t> users,
                                std::size_t window, Rng& rng) {
  TaskBatch b = empty_batch(data, window);
  for (std::size_t u : users) {
    const auto& user = data.users.at(u);
    if (user.train.size() < 2) {
      throw std::invalid_argument("user '" + user.user + "' has no training pair");
    }
    push_train_row(b, user, rng);
  }
  return b;
}

std::vector<TaskBatch> sample_disjoint_batches(const DomainDataset& data, std::size_t count,
                                               std::size_t batch_size, std::size_t window, Rng& rng) {
  auto eligible = train_eligible_users(data);
  std::vector<TaskBatch> out;
  if (count * batch_size > eligible.size()) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(sample_batch(data, Split::kTrain, batch_size, window, rng));
    return out;
  }
  // Partial Fisher-Yates: the first count*batch_size entries are distinct.
  const std::size_t need = count * batch_size;
  for (std::size_t i = 0; i < need; ++i) std::swap(eligible[i], eligible[i + rng.below(eligible.size() - i)]);
  for (std::size_t c = 0; c < count; ++c) {
    std::span<const std::size_t> chunk(eligible.data() + c * batch_size, batch_size);
    out.push_back(train_batch_for_users(data, chunk, window, rng));
  }
  return out;
}

TaskBatch evaluation_batch(const DomainDataset& data, Split split, std::size_t window) {
  if (split == Split::kTrain) throw std::invalid_argument("evaluation_batch: use val or test");
  if (data.users.empty()) {
    throw std::runtime_error("evaluation: domain '" + data.domain + "' has an empty " + split_name(split) +
                             " split");
  }
  TaskBatch b = empty_batch(data, window);
  for (const auto& u : data.users) push_heldout_row(b, u, split);
  return b;
}

// ---- synthetic -----------------------------------------------------------

void SyntheticSpec::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("synthetic.rho must lie in [0, 1]");
  if (num_sources == 0) throw std::invalid_argument("synthetic.num_sources must be positive");
  if (items < 2) throw std::invalid_argument("synthetic.items must be at least 2");
  if (source_users == 0) throw std::invalid_argument("synthetic.source_users must be positive");
  if (target_users == 0) throw std::invalid_argument("synthetic.target_users must be positive");
  if (min_len < 3 || max_len < min_len) {
    throw std::invalid_argument("synthetic.min_len/max_len must satisfy 3 <= min_len <= max_len");
  }
  if (fanout == 0 || fanout > items) throw std::invalid_argument("synthetic.fanout must lie in [1, items]");
}

std::vector<std::vector<double>> random_transition_matrix(std::size_t items, std::size_t fanout, Rng& rng) {
  std::vector<std::vector<double>> m(items, std::vector<double>(items));
  std::vector<std::size_t> order(items);
  for (std::size_t i = 0; i < items; ++i) {
    auto& row = m[i];
    for (auto& v : row) v = 0.02 * rng.uniform();
    for (std::size_t j = 0; j < items; ++j) order[j] = j;
    for (std::size_t f = 0; f < fanout; ++f) {
      std::swap(order[f], order[f + rng.below(items - f)]);
      row[order[f]] += rng.uniform(0.5, 1.5);
    }
    double s = 0.0;
    for (double v : row) s += v;
    for (auto& v : row) v /= s;
  }
  return m;
}

namespace {

SyntheticDomain make_domain(const std::string& name, const std::vector<std::vector<double>>& base,
                            const SyntheticSpec& spec, std::size_t users, Rng& rng) {
  const std::size_t n = spec.items;
  SyntheticDomain d;
  d.permutation.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.permutation[i] = i;
  rng.shuffle(d.permutation);

  // Blend and normalize in latent labels, then relabel.
  auto fresh = random_transition_matrix(n, spec.fanout, rng);
  d.transition.assign(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = spec.rho * base[i][j] + (1.0 - spec.rho) * fresh[i][j];
      s += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) d.transition[d.permutation[i]][d.permutation[j]] = row[j] / s;
  }

  d.log.domain = name;
  d.log.item_tags.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.log.item_tags[i] = "i" + std::to_string(i);
  d.log.users.reserve(users);
  for (std::size_t u = 0; u < users; ++u) {
    UserSequence seq{"u" + std::to_string(u), {}};
    const std::size_t len = rng.between(spec.min_len, spec.max_len);
    ItemId cur = rng.below(n);
    seq.items.push_back(cur);
    while (seq.items.size() < len) {
      const auto& row = d.transition[cur];
      double r = rng.uniform();
      ItemId next = n - 1;
      for (std::size_t j = 0; j < n; ++j) {
        r -= row[j];
        if (r < 0.0) {
          next = j;
          break;
        }
      }
      seq.items.push_back(next);
      cur = next;
    }
    d.log.users.push_back(std::move(seq));
  }
  return d;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  auto base = random_transition_matrix(spec.items, spec.fanout, rng);
  SyntheticCorpus c;
  for (std::size_t s = 0; s < spec.num_sources; ++s) {
    Rng domain_rng = rng.fork(s + 1);
    c.sources.push_back(make_domain("source" + std::to_string(s), base, spec, spec.source_users, domain_rng));
  }
  Rng target_rng = rng.fork(1000);
  c.target = make_domain("target", base, spec, spec.target_users, target_rng);
  return c;
}

}  // namespace metarec

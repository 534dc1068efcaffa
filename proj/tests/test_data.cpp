#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "metarec/config.hpp"
#include "metarec/data.hpp"
#include "metarec/driver.hpp"
#include "support/oracles.hpp"

using namespace metarec;

namespace {

DomainLog log_of(std::vector<std::vector<std::size_t>> seqs, std::size_t items) {
  DomainLog log;
  log.domain = "d";
  for (std::size_t i = 0; i < items; ++i) log.item_tags.push_back("i" + std::to_string(i));
  for (std::size_t u = 0; u < seqs.size(); ++u) log.users.push_back({"u" + std::to_string(u), seqs[u]});
  return log;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("metarec_data_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Load, OrdersByTimestampPerUser) {
  std::istringstream in(
      "# comment\n"
      "a\tu1\tx\t5\n"
      "a\tu2\ty\t1\n"
      "a\tu1\ty\t2\n"
      "\n"
      "a\tu2\tz\t9\n"
      "a\tu1\tz\t3\n");
  auto logs = parse_interactions(in);
  ASSERT_EQ(logs.size(), 1u);
  const auto& d = logs[0];
  EXPECT_EQ(d.item_tags, (std::vector<std::string>{"x", "y", "z"}));
  ASSERT_EQ(d.users.size(), 2u);
  EXPECT_EQ(d.users[0].user, "u1");
  EXPECT_EQ(d.users[0].items, (std::vector<ItemId>{1, 2, 0}));
  EXPECT_EQ(d.users[1].items, (std::vector<ItemId>{1, 2}));
}

TEST(Load, TiesKeepFileOrderAndDuplicates) {
  std::istringstream in(
      "a\tu\tq\t4\n"
      "a\tu\tp\t4\n"
      "a\tu\tp\t4\n"
      "a\tu\tr\t1\n");
  auto logs = parse_interactions(in);
  ASSERT_EQ(logs.size(), 1u);
  // q=0 p=1 r=2
  EXPECT_EQ(logs[0].users[0].items, (std::vector<ItemId>{2, 0, 1, 1}));
}

TEST(Load, DomainsGetSeparateIdSpaces) {
  std::istringstream in("a\tu\tx\t1\nb\tu\ty\t1\nb\tv\tx\t2\n");
  auto logs = parse_interactions(in);
  ASSERT_EQ(logs.size(), 2u);
  EXPECT_EQ(logs[0].domain, "a");
  EXPECT_EQ(logs[1].item_tags, (std::vector<std::string>{"y", "x"}));
  EXPECT_EQ(logs[1].users.size(), 2u);
}

TEST(Load, EmptyInput) {
  std::istringstream in("");
  EXPECT_TRUE(parse_interactions(in).empty());
  std::istringstream comments("# only\n\n");
  EXPECT_TRUE(parse_interactions(comments).empty());
}

TEST(Load, MalformedLinesNameTheLine) {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_interactions(in);
    } catch (const std::runtime_error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("a\tu\tx\t1\na\tu\tx\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("# c\na\tu\tx\t1.5\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("a\tu\tx\t\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("a\tu\tx\t1\textra\n").find("line 1"), std::string::npos);
}

TEST(Load, CrlfLines) {
  std::istringstream in("a\tu\tx\t1\r\na\tu\ty\t2\r\n");
  auto logs = parse_interactions(in);
  EXPECT_EQ(logs.at(0).item_tags, (std::vector<std::string>{"x", "y"}));
}

TEST(Load, MissingFile) { EXPECT_THROW(load_interactions("/nonexistent/none.tsv"), std::runtime_error); }

TEST(Load, WriteRoundTrip) {
  auto log = log_of({{0, 1, 1, 2}, {2, 0, 1}}, 3);
  std::stringstream s;
  write_interactions(s, log);
  auto back = parse_interactions(s);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].item_tags, (std::vector<std::string>{"i0", "i1", "i2"}));
  EXPECT_EQ(back[0].users[0].items, log.users[0].items);
  EXPECT_EQ(back[0].users[1].items, log.users[1].items);
}

TEST(KCore, ChainIsEmptied) {
  auto out = k_core_filter(log_of({{0}, {0}}, 1), 2);
  EXPECT_TRUE(out.users.empty());
  EXPECT_EQ(out.item_count(), 0u);
}

TEST(KCore, CompleteBipartiteKept) {
  auto log = log_of({{0, 1, 2}, {2, 1, 0}, {1, 0, 2}}, 3);
  auto out = k_core_filter(log, 3);
  EXPECT_EQ(checks::edge_bag(out), checks::edge_bag(log));
  EXPECT_EQ(out.users.size(), 3u);
}

TEST(KCore, KOneLeavesAnyLogAlone) {
  metarec::Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    auto log = checks::random_log(rng, 10, 10);
    // drop items nobody touches so k=1 is a no-op
    log = k_core_filter(log, 1);
    auto again = k_core_filter(log, 1);
    EXPECT_EQ(checks::edge_bag(again), checks::edge_bag(log));
    EXPECT_EQ(again.users.size(), log.users.size());
  }
}

TEST(KCore, RejectsZero) { EXPECT_THROW(k_core_filter(log_of({{0}}, 1), 0), std::invalid_argument); }

TEST(KCore, MatchesPeelOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    metarec::Rng rng(seed);
    auto log = checks::random_log(rng, 50, 50);
    const std::size_t k = rng.between(1, 6);
    auto out = k_core_filter(log, k);
    EXPECT_EQ(checks::edge_bag(out), checks::peel(checks::edge_bag(log), k)) << "seed " << seed << " k " << k;
    // dense ids, ascending original order
    std::string prev;
    for (std::size_t i = 0; i < out.item_count(); ++i) {
      auto n = std::stoul(out.item_tags[i].substr(1));
      if (i > 0) EXPECT_LT(std::stoul(prev.substr(1)), n);
      prev = out.item_tags[i];
    }
    for (const auto& u : out.users) {
      EXPECT_GE(u.items.size(), k);
      for (auto i : u.items) EXPECT_LT(i, out.item_count());
    }
    EXPECT_EQ(checks::edge_bag(k_core_filter(out, k)), checks::edge_bag(out)) << "idempotence, seed " << seed;
  }
}

TEST(KCore, KeepsEventOrderWithinUsers) {
  auto log = log_of({{2, 0, 1, 3, 0}, {0, 1, 2, 1}, {3, 2, 0, 1}}, 4);
  auto out = k_core_filter(log, 2);
  // item 3 has two holders, users keep >= 2
  ASSERT_EQ(out.users.size(), 3u);
  EXPECT_EQ(out.users[0].items, (std::vector<ItemId>{2, 0, 1, 3, 0}));
}

TEST(KCore, InvariantToEventOrder) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    metarec::Rng rng(seed + 500);
    auto log = checks::random_log(rng, 30, 30);
    auto shuffled = log;
    rng.shuffle(shuffled.users);
    for (auto& u : shuffled.users) rng.shuffle(u.items);
    const std::size_t k = rng.between(2, 4);
    EXPECT_EQ(checks::edge_bag(k_core_filter(log, k)), checks::edge_bag(k_core_filter(shuffled, k)));
  }
}

TEST(Split, Examples) {
  auto d = leave_one_out_split(log_of({{0, 1, 2, 3}, {0, 1, 2}, {0, 1}}, 4));
  ASSERT_EQ(d.users.size(), 2u);
  EXPECT_EQ(d.dropped_users, 1u);
  EXPECT_EQ(d.users[0].train, (std::vector<ItemId>{0, 1}));
  EXPECT_EQ(d.users[0].validation, 2u);
  EXPECT_EQ(d.users[0].test, 3u);
  EXPECT_EQ(d.users[1].train, (std::vector<ItemId>{0}));
  EXPECT_EQ(d.users[1].validation, 1u);
  EXPECT_EQ(d.users[1].test, 2u);
  EXPECT_EQ(d.padding_id(), 4u);
}

TEST(Split, PartitionsEverySequence) {
  metarec::Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    DomainLog log;
    log.domain = "d";
    log.item_tags.assign(20, "x");
    std::size_t short_ones = 0;
    for (std::size_t u = 0; u < 30; ++u) {
      UserSequence s{"u" + std::to_string(u), {}};
      const std::size_t n = rng.below(12);
      for (std::size_t i = 0; i < n; ++i) s.items.push_back(rng.below(20));
      if (n < 3) ++short_ones;
      log.users.push_back(s);
    }
    auto d = leave_one_out_split(log);
    EXPECT_EQ(d.dropped_users, short_ones);
    std::size_t j = 0;
    for (const auto& u : log.users) {
      if (u.items.size() < 3) continue;
      const auto& s = d.users.at(j++);
      EXPECT_EQ(s.user, u.user);
      std::vector<ItemId> joined = s.train;
      joined.push_back(s.validation);
      joined.push_back(s.test);
      EXPECT_EQ(joined, u.items);
      EXPECT_FALSE(s.train.empty());
    }
    EXPECT_EQ(j, d.users.size());
  }
}

TEST(Split, Names) {
  EXPECT_EQ(parse_split("val"), Split::kValidation);
  EXPECT_EQ(parse_split("validation"), Split::kValidation);
  EXPECT_EQ(parse_split("test"), Split::kTest);
  EXPECT_EQ(std::string(split_name(parse_split("train"))), "train");
  EXPECT_THROW(parse_split("dev"), std::invalid_argument);
}

namespace {

DomainDataset random_dataset(metarec::Rng& rng, std::size_t users, std::size_t items) {
  DomainLog log;
  log.domain = "d";
  for (std::size_t i = 0; i < items; ++i) log.item_tags.push_back("i" + std::to_string(i));
  for (std::size_t u = 0; u < users; ++u) {
    UserSequence s{"u" + std::to_string(u), {}};
    const std::size_t n = rng.between(3, 15);
    for (std::size_t i = 0; i < n; ++i) s.items.push_back(rng.below(items));
    log.users.push_back(s);
  }
  return leave_one_out_split(log);
}

// Does window (padding stripped) followed by target occur contiguously in seq?
bool occurs_in(const std::vector<ItemId>& seq, const std::vector<ItemId>& window, ItemId target) {
  std::vector<ItemId> needle = window;
  needle.push_back(target);
  if (needle.size() > seq.size()) return false;
  for (std::size_t s = 0; s + needle.size() <= seq.size(); ++s) {
    if (std::equal(needle.begin(), needle.end(), seq.begin() + static_cast<std::ptrdiff_t>(s))) return true;
  }
  return false;
}

std::vector<ItemId> unpadded_row(const TaskBatch& b, std::size_t row) {
  std::vector<ItemId> w;
  for (std::size_t t = 0; t < b.window; ++t) {
    if (b.input(row, t) != b.padding) w.push_back(b.input(row, t));
  }
  return w;
}

}  // namespace

TEST(Sample, TrainWindowsAreContiguousInTrainPrefix) {
  metarec::Rng rng(5);
  auto d = random_dataset(rng, 40, 25);
  for (std::size_t window : {1u, 3u, 8u, 50u}) {
    auto b = sample_batch(d, Split::kTrain, 200, window, rng);
    ASSERT_EQ(b.size(), 200u);
    ASSERT_EQ(b.inputs.size(), 200u * window);
    for (std::size_t r = 0; r < b.size(); ++r) {
      auto w = unpadded_row(b, r);
      ASSERT_FALSE(w.empty());
      // padding only on the left
      std::size_t t = 0;
      while (t < window && b.input(r, t) == b.padding) ++t;
      for (; t < window; ++t) EXPECT_NE(b.input(r, t), b.padding);
      bool found = false;
      for (const auto& u : d.users) found = found || occurs_in(u.train, w, b.targets[r]);
      EXPECT_TRUE(found) << "row " << r << " window " << window;
    }
  }
}

TEST(Sample, HeldOutRowsUseFullHistory) {
  metarec::Rng rng(6);
  auto d = random_dataset(rng, 10, 12);
  auto val = evaluation_batch(d, Split::kValidation, 64);
  auto test = evaluation_batch(d, Split::kTest, 64);
  for (std::size_t u = 0; u < d.users.size(); ++u) {
    EXPECT_EQ(unpadded_row(val, u), d.users[u].train);
    EXPECT_EQ(val.targets[u], d.users[u].validation);
    auto hist = d.users[u].train;
    hist.push_back(d.users[u].validation);
    EXPECT_EQ(unpadded_row(test, u), hist);
    EXPECT_EQ(test.targets[u], d.users[u].test);
  }
  auto sampled = sample_batch(d, Split::kTest, 30, 64, rng);
  for (std::size_t r = 0; r < sampled.size(); ++r) {
    bool found = false;
    for (const auto& u : d.users) {
      auto hist = u.train;
      hist.push_back(u.validation);
      found = found || (unpadded_row(sampled, r) == hist && sampled.targets[r] == u.test);
    }
    EXPECT_TRUE(found);
  }
  EXPECT_THROW(evaluation_batch(d, Split::kTrain, 4), std::invalid_argument);
}

TEST(Sample, TruncatesOnTheLeft) {
  auto d = leave_one_out_split(log_of({{0, 1, 2, 3, 4, 5}}, 6));
  auto b = evaluation_batch(d, Split::kTest, 2);
  EXPECT_EQ(b.inputs, (std::vector<ItemId>{3, 4}));
  EXPECT_EQ(b.targets, (std::vector<ItemId>{5}));
  auto padded = evaluation_batch(d, Split::kValidation, 6);
  EXPECT_EQ(padded.inputs, (std::vector<ItemId>{6, 6, 0, 1, 2, 3}));
}

TEST(Sample, Reproducible) {
  metarec::Rng data_rng(8);
  auto d = random_dataset(data_rng, 20, 10);
  metarec::Rng a(99), b(99);
  auto x = sample_batch(d, Split::kTrain, 1, 5, a);
  auto y = sample_batch(d, Split::kTrain, 1, 5, b);
  EXPECT_EQ(x.inputs, y.inputs);
  EXPECT_EQ(x.targets, y.targets);
}

TEST(Sample, EmptySplitsThrow) {
  auto none = leave_one_out_split(log_of({{0, 1}}, 2));
  metarec::Rng rng(1);
  EXPECT_THROW(sample_batch(none, Split::kTrain, 4, 3, rng), std::runtime_error);
  EXPECT_THROW(sample_batch(none, Split::kTest, 4, 3, rng), std::runtime_error);
  // train prefix of length one carries no pair
  auto short_train = leave_one_out_split(log_of({{0, 1, 2}}, 3));
  EXPECT_THROW(sample_batch(short_train, Split::kTrain, 4, 3, rng), std::runtime_error);
  EXPECT_NO_THROW(sample_batch(short_train, Split::kValidation, 4, 3, rng));
  EXPECT_THROW(sample_batch(short_train, Split::kValidation, 0, 3, rng), std::invalid_argument);
  EXPECT_THROW(sample_batch(short_train, Split::kValidation, 1, 0, rng), std::invalid_argument);
}

TEST(Sample, DisjointBatchesUseDistinctUsers) {
  // Every user has a unique item so rows can be traced back.
  DomainLog log;
  log.domain = "d";
  for (std::size_t u = 0; u < 30; ++u) {
    log.item_tags.push_back("i" + std::to_string(u));
    log.users.push_back({"u" + std::to_string(u), {u, u, u, u, u}});
  }
  auto d = leave_one_out_split(log);
  metarec::Rng rng(4);
  auto batches = sample_disjoint_batches(d, 3, 10, 4, rng);
  ASSERT_EQ(batches.size(), 3u);
  std::set<ItemId> seen;
  for (const auto& b : batches) {
    ASSERT_EQ(b.size(), 10u);
    for (auto t : b.targets) seen.insert(t);
  }
  EXPECT_EQ(seen.size(), 30u);
  // too few users: falls back to independent draws
  auto fallback = sample_disjoint_batches(d, 4, 10, 4, rng);
  EXPECT_EQ(fallback.size(), 4u);
}

TEST(Sample, TrainBatchForUsersRejectsShortPrefix) {
  auto d = leave_one_out_split(log_of({{0, 1, 2}, {0, 1, 2, 0}}, 3));
  metarec::Rng rng(1);
  std::vector<std::size_t> ok{1, 1};
  auto b = train_batch_for_users(d, ok, 3, rng);
  EXPECT_EQ(b.targets, (std::vector<ItemId>{1, 1}));
  std::vector<std::size_t> bad{0};
  EXPECT_THROW(train_batch_for_users(d, bad, 3, rng), std::invalid_argument);
}

namespace {

SyntheticSpec small_spec(double rho, std::uint64_t seed) {
  SyntheticSpec s;
  s.num_sources = 2;
  s.items = 20;
  s.source_users = 5;
  s.target_users = 2;
  s.min_len = 3;
  s.max_len = 6;
  s.rho = rho;
  s.seed = seed;
  return s;
}

std::vector<std::vector<double>> latent(const SyntheticDomain& d) {
  const std::size_t n = d.permutation.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i][j] = d.transition[d.permutation[i]][d.permutation[j]];
  }
  return m;
}

double pooled_correlation(const std::vector<std::pair<double, double>>& xy) {
  double mx = 0, my = 0;
  for (auto [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(xy.size());
  my /= static_cast<double>(xy.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (auto [x, y] : xy) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(Synthetic, RhoOneSharesTheChainUpToRelabeling) {
  auto c = generate_synthetic(small_spec(1.0, 7));
  auto base = latent(c.sources[0]);
  for (const auto* d : {&c.sources[1], &c.target}) {
    auto m = latent(*d);
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = 0; j < m.size(); ++j) EXPECT_NEAR(m[i][j], base[i][j], 1e-15);
    }
  }
  // the permutations themselves differ
  EXPECT_NE(c.sources[0].permutation, c.target.permutation);
}

TEST(Synthetic, RowsAreStochastic) {
  for (double rho : {0.0, 0.5, 0.9, 1.0}) {
    auto c = generate_synthetic(small_spec(rho, 3));
    auto check = [](const SyntheticDomain& d) {
      for (const auto& row : d.transition) {
        double s = 0;
        for (double v : row) {
          EXPECT_GT(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    };
    for (const auto& s : c.sources) check(s);
    check(c.target);
  }
}

TEST(Synthetic, RhoZeroDomainsAreUncorrelated) {
  std::vector<std::pair<double, double>> zero, high;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto c0 = generate_synthetic(small_spec(0.0, seed));
    auto c9 = generate_synthetic(small_spec(0.9, seed));
    auto a0 = latent(c0.sources[0]), b0 = latent(c0.target);
    auto a9 = latent(c9.sources[0]), b9 = latent(c9.target);
    for (std::size_t i = 0; i < a0.size(); ++i) {
      for (std::size_t j = 0; j < a0.size(); ++j) {
        if (i == j) continue;
        zero.emplace_back(a0[i][j], b0[i][j]);
        high.emplace_back(a9[i][j], b9[i][j]);
      }
    }
  }
  // ~23k pairs: sampling noise on r is about 0.007
  EXPECT_LT(std::abs(pooled_correlation(zero)), 0.03);
  EXPECT_GT(pooled_correlation(high), 0.8);
}

TEST(Synthetic, ShapesAndNames) {
  auto spec = small_spec(0.9, 2);
  auto c = generate_synthetic(spec);
  ASSERT_EQ(c.sources.size(), 2u);
  EXPECT_EQ(c.sources[1].log.domain, "source1");
  EXPECT_EQ(c.target.log.domain, "target");
  EXPECT_EQ(c.sources[0].log.users.size(), 5u);
  EXPECT_EQ(c.target.log.users.size(), 2u);
  for (const auto& u : c.target.log.users) {
    EXPECT_GE(u.items.size(), 3u);
    EXPECT_LE(u.items.size(), 6u);
    for (auto i : u.items) EXPECT_LT(i, 20u);
  }
}

TEST(Synthetic, SameSeedSameCorpus) {
  auto a = generate_synthetic(small_spec(0.5, 9));
  auto b = generate_synthetic(small_spec(0.5, 9));
  EXPECT_EQ(a.target.transition, b.target.transition);
  EXPECT_EQ(a.sources[1].log.users[3].items, b.sources[1].log.users[3].items);
  auto c = generate_synthetic(small_spec(0.5, 10));
  EXPECT_NE(a.target.transition, c.target.transition);
}

TEST(Synthetic, InvalidSpecs) {
  for (double rho : {-0.1, 1.5, std::nan("")}) {
    EXPECT_THROW(generate_synthetic(small_spec(rho, 1)), std::invalid_argument) << rho;
  }
  auto s = small_spec(0.5, 1);
  s.min_len = 2;
  EXPECT_THROW(generate_synthetic(s), std::invalid_argument);
  s = small_spec(0.5, 1);
  s.fanout = 21;
  EXPECT_THROW(generate_synthetic(s), std::invalid_argument);
}

TEST(Generate, ManifestRoundTrip) {
  RunConfig cfg;
  cfg.synthetic = small_spec(0.9, 4);
  auto dir = scratch("gen");
  auto manifest = cmd_generate(cfg, dir);
  EXPECT_EQ(manifest, dir / "manifest.tsv");
  auto corpus = generate_synthetic(cfg.synthetic);
  std::vector<const SyntheticDomain*> all{&corpus.sources[0], &corpus.sources[1], &corpus.target};
  for (const auto* d : all) {
    auto logs = load_interactions(dir / (d->log.domain + ".tsv"));
    ASSERT_EQ(logs.size(), 1u);
    ASSERT_EQ(logs[0].users.size(), d->log.users.size());
    for (std::size_t u = 0; u < logs[0].users.size(); ++u) {
      std::vector<std::string> got, want;
      for (auto i : logs[0].users[u].items) got.push_back(logs[0].item_tags[i]);
      for (auto i : d->log.users[u].items) want.push_back(d->log.item_tags[i]);
      EXPECT_EQ(got, want);
    }
  }
  auto text = slurp(manifest);
  EXPECT_NE(text.find("# rho=0.9"), std::string::npos);
  EXPECT_NE(text.find("# seed=4"), std::string::npos);
  EXPECT_NE(text.find("target\ttarget\ttarget.tsv\t2\t20"), std::string::npos);

  // the manifest feeds the same datasets as the in-memory path
  RunConfig from_file = cfg;
  from_file.manifest = manifest.string();
  from_file.k_core = 1;
  RunConfig in_memory = cfg;
  in_memory.k_core = 1;
  auto a = prepare_data(from_file);
  auto b = prepare_data(in_memory);
  ASSERT_EQ(a.sources.size(), b.sources.size());
  EXPECT_EQ(a.target.item_tags, b.target.item_tags);
  for (std::size_t u = 0; u < a.target.users.size(); ++u) {
    EXPECT_EQ(a.target.users[u].train, b.target.users[u].train);
    EXPECT_EQ(a.target.users[u].test, b.target.users[u].test);
  }
  std::filesystem::remove_all(dir);
}

TEST(Generate, ByteIdentical) {
  RunConfig cfg;
  cfg.synthetic = small_spec(0.3, 12);
  auto d1 = scratch("gen1"), d2 = scratch("gen2");
  cmd_generate(cfg, d1);
  cmd_generate(cfg, d2);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(d1)) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(d2 / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 4u);  // 2 sources, target, manifest
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

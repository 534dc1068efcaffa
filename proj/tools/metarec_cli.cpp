#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metarec/checkpoint.hpp"
#include "metarec/config.hpp"
#include "metarec/driver.hpp"

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  bool parallel = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Config file (dotted key=value lines)");
  cmd->add_option("--seed", c.seed, "Training and synthetic-data seed (overrides the config)");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--set", c.sets, "Extra key=value assignments applied after the config file");
  cmd->add_flag("--parallel", c.parallel, "Run the task pipelines of an iteration on worker threads");
}

metarec::RunConfig resolve(const Common& c) {
  metarec::RunConfig cfg = c.config_path.empty() ? metarec::RunConfig{} : metarec::load_config(c.config_path);
  for (const auto& kv : c.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    metarec::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) metarec::override_seed(cfg, *c.seed);
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.parallel) cfg.meta.parallel = true;
  return cfg;
}

void print_result(const metarec::EvalResult& r, const char* split) {
  std::printf("split=%s users=%zu\nndcg@%zu=%.6f\nrecall@%zu=%.6f\nmrr=%.6f\n", split, r.num_users, r.k, r.ndcg, r.k,
              r.recall, r.mrr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain sequential recommendation with meta transfer and multi-head VQ"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, eval_opts, ablate_opts;
  auto* gen = app.add_subcommand("generate", "Write a synthetic multi-domain corpus and its manifest");
  add_common(gen, gen_opts);
  auto* train = app.add_subcommand("train", "Train one variant and keep the best validation checkpoint");
  add_common(train, train_opts);
  std::string variant;
  train->add_option("--variant", variant, "full, no_multihead_vq, no_vq, no_rescale or no_meta");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the target domain");
  add_common(eval, eval_opts);
  std::string checkpoint, split = "test";
  std::optional<std::size_t> k;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", split, "val or test");
  eval->add_option("--k", k, "Ranking cutoff");

  auto* ablate = app.add_subcommand("ablate", "Train all five variants on identical data and seeds");
  add_common(ablate, ablate_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto cfg = resolve(gen_opts);
      auto manifest = metarec::cmd_generate(cfg, cfg.out_dir);
      std::printf("wrote %s\n", manifest.string().c_str());
    } else if (*train) {
      auto cfg = resolve(train_opts);
      if (!variant.empty()) cfg.variant = metarec::parse_variant(variant);
      auto s = metarec::cmd_train(cfg, cfg.out_dir, &std::cerr);
      std::printf("best_iteration=%zu\nval_ndcg@%zu=%.6f\n", s.best_iteration, cfg.eval_k, s.best_validation.ndcg);
      print_result(s.test, "test");
    } else if (*eval) {
      metarec::EvalRequest req;
      req.checkpoint = checkpoint;
      if (!eval_opts.config_path.empty() || !eval_opts.sets.empty() || eval_opts.seed) req.config = resolve(eval_opts);
      req.split = metarec::parse_split(split);
      req.k = k;
      if (!eval_opts.out.empty()) req.out_dir = eval_opts.out;
      auto r = metarec::cmd_eval(req);
      print_result(r, metarec::split_name(req.split));
    } else if (*ablate) {
      auto cfg = resolve(ablate_opts);
      auto rows = metarec::cmd_ablate(cfg, cfg.out_dir, &std::cerr);
      std::printf("variant,ndcg@%zu,recall@%zu,mrr\n", cfg.eval_k, cfg.eval_k);
      for (const auto& r : rows) {
        std::printf("%s,%.6f,%.6f,%.6f\n", metarec::variant_name(r.variant), r.test.ndcg, r.test.recall, r.test.mrr);
      }
    }
  } catch (const metarec::CheckpointError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

#include "metarec/driver.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "metarec/backbone.hpp"
#include "metarec/checkpoint.hpp"
#include "metarec/meta.hpp"

namespace metarec {

namespace fs = std::filesystem;

std::vector<DomainShape> PreparedData::shapes() const {
  std::vector<DomainShape> out;
  for (const auto& s : sources) out.push_back({s.domain, s.item_count});
  out.push_back({target.domain, target.item_count});
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<DomainLog> synthetic_logs(const SyntheticSpec& spec) {
  SyntheticCorpus corpus = generate_synthetic(spec);
  std::stringstream tsv;
  for (const auto& s : corpus.sources) write_interactions(tsv, s.log);
  write_interactions(tsv, corpus.target.log);
  return parse_interactions(tsv);
}

struct ManifestRow {
  std::string role, domain, file;
};

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    if (f.size() < 3) throw std::runtime_error("manifest line " + std::to_string(no) + ": expected role, domain, file");
    if (f[0] == "role") continue;
    if (f[0] != "source" && f[0] != "target") {
      throw std::runtime_error("manifest line " + std::to_string(no) + ": unknown role '" + f[0] + "'");
    }
    rows.push_back({f[0], f[1], f[2]});
  }
  return rows;
}

}  // namespace

PreparedData datasets_from_logs(std::vector<DomainLog> logs, const RunConfig& cfg) {
  PreparedData out;
  bool have_target = false;
  for (auto& log : logs) {
    DomainDataset d = leave_one_out_split(k_core_filter(log, cfg.k_core));
    if (d.item_count == 0 || d.users.empty()) {
      throw std::runtime_error("domain '" + d.domain + "' is empty after " + std::to_string(cfg.k_core) +
                               "-core filtering");
    }
    if (d.domain == cfg.target_domain) {
      out.target = std::move(d);
      have_target = true;
    } else {
      out.sources.push_back(std::move(d));
    }
  }
  if (!have_target) throw std::runtime_error("no target domain named '" + cfg.target_domain + "'");
  if (out.sources.empty()) throw std::runtime_error("no source domains");
  return out;
}

PreparedData prepare_data(const RunConfig& cfg) {
  if (cfg.manifest.empty()) return datasets_from_logs(synthetic_logs(cfg.synthetic), cfg);
  const fs::path manifest(cfg.manifest);
  std::vector<DomainLog> logs;
  std::map<std::string, std::vector<DomainLog>> cache;
  for (const auto& row : read_manifest(manifest)) {
    if (row.role == "target" && row.domain != cfg.target_domain) {
      throw std::runtime_error("manifest target '" + row.domain + "' differs from model.target_domain '" +
                               cfg.target_domain + "'");
    }
    fs::path file = fs::path(row.file).is_absolute() ? fs::path(row.file) : manifest.parent_path() / row.file;
    auto it = cache.find(file.string());
    if (it == cache.end()) it = cache.emplace(file.string(), load_interactions(file)).first;
    bool found = false;
    for (const auto& log : it->second) {
      if (log.domain == row.domain) {
        logs.push_back(log);
        found = true;
      }
    }
    if (!found) throw std::runtime_error("domain '" + row.domain + "' not found in " + file.string());
  }
  return datasets_from_logs(std::move(logs), cfg);
}

fs::path cmd_generate(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.synthetic.validate();
  fs::create_directories(out_dir);
  SyntheticCorpus corpus = generate_synthetic(cfg.synthetic);
  const fs::path manifest = out_dir / "manifest.tsv";
  auto m = open_out(manifest);
  m << "# rho=" << fmt(cfg.synthetic.rho) << "\n# seed=" << cfg.synthetic.seed << "\n";
  m << "role\tdomain\tfile\tusers\titems\n";
  auto emit = [&](const SyntheticDomain& d, const char* role) {
    const std::string file = d.log.domain + ".tsv";
    auto out = open_out(out_dir / file);
    write_interactions(out, d.log);
    m << role << '\t' << d.log.domain << '\t' << file << '\t' << d.log.users.size() << '\t' << d.log.item_count()
      << '\n';
  };
  for (const auto& s : corpus.sources) emit(s, "source");
  emit(corpus.target, "target");
  if (!m) throw std::runtime_error("failed writing " + manifest.string());
  return manifest;
}

void check_layout(const ParameterSet& loaded, const ParameterSet& expected) {
  for (const auto& [name, t] : expected) {
    if (!loaded.contains(name)) throw std::invalid_argument("checkpoint lacks entry '" + name + "'");
    const auto& got = loaded.at(name);
    if (got.shape() != t.shape()) {
      throw std::invalid_argument("checkpoint entry '" + name + "' has shape " + ad::shape_str(got.shape()) +
                                  " but the config expects " + ad::shape_str(t.shape()));
    }
  }
  for (const auto& [name, _] : loaded) {
    if (!expected.contains(name)) throw std::invalid_argument("checkpoint has unexpected entry '" + name + "'");
  }
}

TrainSummary run_training(const RunConfig& cfg, const PreparedData& data, const fs::path& out_dir, std::ostream* log) {
  cfg.validate();
  fs::create_directories(out_dir);
  const ModelConfig model = cfg.model();
  const MetaConfig meta = cfg.effective_meta();
  RunConfig embedded = cfg;
  embedded.out_dir = RunConfig{}.out_dir;
  const std::string config_text = serialize_config(embedded);
  const std::string k = std::to_string(cfg.eval_k);

  {
    auto c = open_out(out_dir / "config.txt");
    c << config_text;
  }
  auto metrics = open_out(out_dir / "metrics.csv");
  metrics << "kind,iteration,overall_loss,meta_losses,mean_max_weight,ndcg@" << k << ",recall@" << k << ",mrr\n";
  auto weights = open_out(out_dir / "weights.csv");
  weights << "iteration,layer,task,source,score,weight\n";

  ParameterSet theta = init_parameters(model.encoder, data.shapes(), cfg.seed);
  Rng rng(cfg.seed ^ 0x5eed5eed5eedULL);
  JointConfig joint = cfg.joint;

  TrainSummary summary;
  bool have_best = false;
  auto evaluate_now = [&](std::size_t it) {
    EvalResult val = evaluate(theta, model, data.target, Split::kValidation, cfg.eval_k);
    metrics << "eval," << it << ",,,," << fmt(val.ndcg) << ',' << fmt(val.recall) << ',' << fmt(val.mrr) << '\n';
    ++summary.metric_rows;
    if (log) *log << variant_name(cfg.variant) << " it " << it << " val ndcg@" << k << " " << val.ndcg << '\n';
    if (!have_best || val.ndcg > summary.best_validation.ndcg) {
      have_best = true;
      summary.best = theta;
      summary.best_iteration = it;
      summary.best_validation = val;
      save_checkpoint(out_dir / "best.ckpt", theta, config_text);
    }
  };

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    if (cfg.variant == Variant::kNoMeta) {
      JointResult r = joint_train_iteration(theta, data.sources, data.target, model, joint, rng);
      theta = std::move(r.theta);
      metrics << "iter," << it << ',' << fmt(r.loss) << ",,,,,\n";
    } else {
      UpdateResult r = train_iteration(theta, data.sources, data.target, model, meta, rng);
      theta = std::move(r.theta);
      const auto& rep = r.report;
      std::string losses;
      for (std::size_t i = 0; i < rep.tasks.size(); ++i) {
        if (i) losses += ';';
        losses += fmt(rep.tasks[i].meta_loss);
      }
      metrics << "iter," << it << ',' << fmt(rep.overall_loss) << ',' << losses << ',' << fmt(rep.mean_max_weight())
              << ",,,\n";
      for (const auto& layer : rep.layers) {
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
          weights << it << ',' << layer.layer << ',' << i << ',' << rep.tasks[i].source_domain << ','
                  << fmt(layer.scores[i]) << ',' << fmt(layer.weights[i]) << '\n';
        }
      }
    }
    ++summary.metric_rows;
    if (it % cfg.eval_every == 0 || it == cfg.iterations) evaluate_now(it);
  }
  if (!metrics || !weights) throw std::runtime_error("failed writing metrics under " + out_dir.string());

  summary.final_params = theta;
  save_checkpoint(out_dir / "final.ckpt", theta, config_text);
  summary.test = evaluate(summary.best, model, data.target, Split::kTest, cfg.eval_k);
  auto test = open_out(out_dir / "test_metrics.csv");
  write_metrics(test, summary.test);
  if (log) {
    *log << variant_name(cfg.variant) << " best it " << summary.best_iteration << " test ndcg@" << k << " "
         << summary.test.ndcg << '\n';
  }
  return summary;
}

TrainSummary cmd_train(const RunConfig& cfg, const fs::path& out_dir, std::ostream* log) {
  cfg.validate();
  return run_training(cfg, prepare_data(cfg), out_dir, log);
}

EvalResult cmd_eval(const EvalRequest& req) {
  Checkpoint ck = load_checkpoint(req.checkpoint);
  RunConfig cfg = req.config ? *req.config : parse_config(ck.config_text);
  if (req.k) cfg.eval_k = *req.k;
  cfg.validate();
  PreparedData data = prepare_data(cfg);
  const ModelConfig model = cfg.model();
  check_layout(ck.params, init_parameters(model.encoder, data.shapes(), 0));
  std::vector<std::size_t> ranks;
  EvalResult r = evaluate(ck.params, model, data.target, req.split, cfg.eval_k, &ranks);
  if (req.out_dir) {
    fs::create_directories(*req.out_dir);
    auto m = open_out(*req.out_dir / (std::string(split_name(req.split)) + "_metrics.csv"));
    write_metrics(m, r);
    auto rk = open_out(*req.out_dir / (std::string(split_name(req.split)) + "_ranks.csv"));
    write_ranks(rk, data.target, ranks);
  }
  return r;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const fs::path& out_dir, std::ostream* log) {
  cfg.validate();
  PreparedData data = prepare_data(cfg);
  fs::create_directories(out_dir);
  std::vector<AblationRow> rows;
  for (Variant v : kAllVariants) {
    RunConfig c = cfg;
    c.variant = v;
    c.out_dir = (out_dir / variant_name(v)).string();
    rows.push_back({v, run_training(c, data, c.out_dir, log).test});
  }
  const std::string k = std::to_string(cfg.eval_k);
  auto out = open_out(out_dir / "ablation.csv");
  out << "# seed=" << cfg.seed << " synthetic.seed=" << cfg.synthetic.seed << '\n';
  out << "variant,ndcg@" << k << ",recall@" << k << ",mrr\n";
  for (const auto& r : rows) {
    out << variant_name(r.variant) << ',' << fmt(r.test.ndcg) << ',' << fmt(r.test.recall) << ',' << fmt(r.test.mrr)
        << '\n';
  }
  return rows;
}

}  // namespace metarec

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <sstream>

#include "metarec/checkpoint.hpp"
#include "metarec/config.hpp"
#include "metarec/data.hpp"
#include "metarec/driver.hpp"
#include "metarec/eval.hpp"
#include "metarec/meta.hpp"

namespace py = pybind11;
using namespace metarec;

namespace {

RunConfig make_config(const std::optional<std::string>& text, const std::map<std::string, std::string>& overrides) {
  RunConfig cfg = text ? parse_config(*text) : RunConfig{};
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  return cfg;
}

py::dict result_dict(const EvalResult& r) {
  py::dict d;
  d["ndcg"] = r.ndcg;
  d["recall"] = r.recall;
  d["mrr"] = r.mrr;
  d["k"] = r.k;
  d["users"] = r.num_users;
  return d;
}

// Python-side log: {user: [item tags...]} with the user order preserved.
DomainLog log_from(const std::vector<std::pair<std::string, std::vector<std::string>>>& users) {
  std::stringstream tsv;
  for (const auto& [user, items] : users) {
    for (std::size_t t = 0; t < items.size(); ++t) tsv << "d\t" << user << '\t' << items[t] << '\t' << t << '\n';
  }
  auto logs = parse_interactions(tsv);
  if (logs.empty()) return DomainLog{"d", {}, {}};
  return logs[0];
}

std::vector<std::pair<std::string, std::vector<std::string>>> log_to(const DomainLog& log) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (const auto& u : log.users) {
    std::vector<std::string> items;
    for (auto i : u.items) items.push_back(log.item_tags[i]);
    out.emplace_back(u.user, items);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_metarec, m) {
  m.doc() = "Meta-transfer sequential recommendation (C++ core)";

  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);

  m.def("default_config", [] { return serialize_config(RunConfig{}); });
  m.def(
      "make_config",
      [](std::optional<std::string> text, std::map<std::string, std::string> overrides) {
        return serialize_config(make_config(text, overrides));
      },
      py::arg("text") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{});
  m.def("variants", [] {
    std::vector<std::string> out;
    for (Variant v : kAllVariants) out.push_back(variant_name(v));
    return out;
  });

  m.def(
      "generate",
      [](const std::filesystem::path& out_dir, std::optional<std::string> config,
         std::map<std::string, std::string> overrides) {
        return cmd_generate(make_config(config, overrides), out_dir);
      },
      py::arg("out_dir"), py::arg("config") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{});

  m.def(
      "train",
      [](const std::filesystem::path& out_dir, std::optional<std::string> config,
         std::map<std::string, std::string> overrides) {
        TrainSummary s;
        {
          py::gil_scoped_release release;
          s = cmd_train(make_config(config, overrides), out_dir);
        }
        py::dict d;
        d["best_iteration"] = s.best_iteration;
        d["validation"] = result_dict(s.best_validation);
        d["test"] = result_dict(s.test);
        d["metric_rows"] = s.metric_rows;
        return d;
      },
      py::arg("out_dir"), py::arg("config") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{});

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::string& split, std::optional<std::size_t> k,
         std::optional<std::filesystem::path> out_dir) {
        EvalRequest req;
        req.checkpoint = checkpoint;
        req.split = parse_split(split);
        req.k = k;
        req.out_dir = out_dir;
        return result_dict(cmd_eval(req));
      },
      py::arg("checkpoint"), py::arg("split") = "test", py::arg("k") = py::none(), py::arg("out_dir") = py::none());

  m.def(
      "ablate",
      [](const std::filesystem::path& out_dir, std::optional<std::string> config,
         std::map<std::string, std::string> overrides) {
        std::vector<AblationRow> rows;
        {
          py::gil_scoped_release release;
          rows = cmd_ablate(make_config(config, overrides), out_dir);
        }
        py::dict d;
        for (const auto& r : rows) d[variant_name(r.variant)] = result_dict(r.test);
        return d;
      },
      py::arg("out_dir"), py::arg("config") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{});

  m.def(
      "rank_of_truth",
      [](const std::vector<double>& scores, std::size_t truth) { return rank_of_truth(scores, truth); },
      py::arg("scores"), py::arg("truth"));
  m.def(
      "metrics_from_rank",
      [](std::size_t rank, std::size_t k) {
        auto r = metrics_from_rank(rank, k);
        return py::make_tuple(r.ndcg, r.recall, r.rr);
      },
      py::arg("rank"), py::arg("k"));
  m.def(
      "task_weights",
      [](const std::vector<double>& scores, double temperature, bool rescale) {
        return task_weights(scores, temperature, rescale);
      },
      py::arg("scores"), py::arg("temperature") = 1.0, py::arg("rescale") = true);

  m.def(
      "k_core",
      [](const std::vector<std::pair<std::string, std::vector<std::string>>>& users, std::size_t k) {
        return log_to(k_core_filter(log_from(users), k));
      },
      py::arg("users"), py::arg("k"));
  m.def(
      "leave_one_out",
      [](const std::vector<std::pair<std::string, std::vector<std::string>>>& users) {
        auto log = log_from(users);
        auto d = leave_one_out_split(log);
        py::list out;
        for (const auto& u : d.users) {
          std::vector<std::string> train;
          for (auto i : u.train) train.push_back(d.item_tags[i]);
          out.append(py::make_tuple(u.user, train, d.item_tags[u.validation], d.item_tags[u.test]));
        }
        return py::make_tuple(out, d.dropped_users);
      },
      py::arg("users"));
}

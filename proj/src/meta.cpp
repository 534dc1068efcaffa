#include "metarec/meta.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <thread>

#include "metarec/vq.hpp"

namespace metarec {

void MetaConfig::validate() const {
  if (n_tasks == 0) throw std::invalid_argument("meta.n_tasks must be positive");
  if (!(inner_lr > 0.0)) throw std::invalid_argument("meta.inner_lr must be positive");
  if (!(outer_lr > 0.0)) throw std::invalid_argument("meta.outer_lr must be positive");
  if (inner_steps == 0) throw std::invalid_argument("meta.inner_steps must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("meta.temperature must be positive");
  if (inner_batch == 0) throw std::invalid_argument("meta.inner_batch must be positive");
  if (meta_batch == 0) throw std::invalid_argument("meta.meta_batch must be positive");
}

namespace {

std::vector<ad::Tensor> tensors_of(const ParameterSet& p) {
  std::vector<ad::Tensor> out;
  out.reserve(p.size());
  for (const auto& [_, t] : p) out.push_back(t);
  return out;
}

ParameterSet descend(const ParameterSet& p, const std::vector<ad::Tensor>& grads, double lr) {
  ParameterSet out;
  std::size_t i = 0;
  for (const auto& [name, t] : p) out.set(name, ad::sub(t, ad::scale(grads[i++], lr)));
  return out;
}

ParameterSet rekey(const ParameterSet& like, const std::vector<ad::Tensor>& grads) {
  ParameterSet out;
  std::size_t i = 0;
  for (const auto& [name, _] : like) out.set(name, grads[i++].detach());
  return out;
}

}  // namespace

Adapted inner_adapt(const ParameterSet& theta, const StepLoss& loss, std::size_t steps, double lr,
                    bool second_order) {
  if (steps == 0) throw std::invalid_argument("inner_adapt: at least one step is required");
  Adapted out;
  out.second_order = second_order;
  if (second_order) {
    out.theta = theta.watch(out.tape);
    out.phi = out.theta;
    for (std::size_t s = 0; s < steps; ++s) {
      ad::Tensor l = loss(out.phi, s);
      out.inner_losses.push_back(l.item());
      auto g = ad::grad(l, tensors_of(out.phi), /*create_graph=*/true);
      out.phi = descend(out.phi, g, lr);
    }
    return out;
  }
  out.theta = theta.detached();
  out.phi = out.theta;
  for (std::size_t s = 0; s < steps; ++s) {
    ad::Tape tape;
    ParameterSet leaves = out.phi.watch(tape);
    ad::Tensor l = loss(leaves, s);
    out.inner_losses.push_back(l.item());
    auto g = ad::grad(l, tensors_of(leaves));
    out.phi = descend(out.phi, g, lr);
  }
  return out;
}

Adapted inner_adapt(const ParameterSet& theta, std::span<const TaskBatch> batches, const ModelConfig& model,
                    const MetaConfig& cfg) {
  if (batches.size() < cfg.inner_steps) {
    throw std::invalid_argument("inner_adapt: " + std::to_string(cfg.inner_steps) + " steps need as many batches, got " +
                                std::to_string(batches.size()));
  }
  for (const auto& b : batches) {
    if (b.size() == 0) throw std::invalid_argument("inner_adapt: empty batch for domain '" + b.domain + "'");
  }
  StepLoss loss = [&](const ParameterSet& p, std::size_t step) {
    return batch_loss(p, model, batches[step], cfg.vq_in_inner).total;
  };
  return inner_adapt(theta, loss, cfg.inner_steps, cfg.inner_lr, cfg.second_order);
}

MetaGradient meta_gradient(const Adapted& adapted, const ParamLoss& loss, bool second_order) {
  if (adapted.second_order != second_order) {
    throw std::logic_error(std::string("meta_gradient: parameters were adapted in ") +
                           (adapted.second_order ? "second" : "first") + "-order mode but " +
                           (second_order ? "second" : "first") + "-order gradients were requested");
  }
  MetaGradient out;
  if (second_order) {
    ad::Tensor l = loss(adapted.phi);
    out.meta_loss = l.item();
    out.grads = rekey(adapted.theta, ad::grad(l, tensors_of(adapted.theta)));
    return out;
  }
  ad::Tape tape;
  ParameterSet leaves = adapted.phi.watch(tape);
  ad::Tensor l = loss(leaves);
  out.meta_loss = l.item();
  out.grads = rekey(adapted.theta, ad::grad(l, tensors_of(leaves)));
  return out;
}

MetaGradient meta_gradient(const Adapted& adapted, const TaskBatch& target_batch, const ModelConfig& model,
                           const MetaConfig& cfg) {
  if (target_batch.size() == 0) throw std::invalid_argument("meta_gradient: empty target batch");
  ParamLoss loss = [&](const ParameterSet& p) { return batch_loss(p, model, target_batch, cfg.vq_in_outer).total; };
  return meta_gradient(adapted, loss, cfg.second_order);
}

double MetaIterationReport::mean_max_weight() const {
  if (layers.empty()) return 0.0;
  double s = 0.0;
  for (const auto& l : layers) s += *std::max_element(l.weights.begin(), l.weights.end());
  return s / static_cast<double>(layers.size());
}

std::vector<double> task_weights(std::span<const double> scores, double temperature, bool rescale) {
  const std::size_t n = scores.size();
  std::vector<double> w(n);
  if (n == 0) return w;
  if (!rescale) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
    return w;
  }
  double m = -INFINITY;
  for (double s : scores) m = std::max(m, s / temperature);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp(scores[i] / temperature - m);
    z += w[i];
  }
  for (double& x : w) x /= z;
  return w;
}

UpdateResult rescale_and_update(const ParameterSet& theta, std::span<const TaskResult> tasks, const MetaConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("rescale_and_update: no tasks");
  for (const auto& t : tasks) {
    if (!t.phi.same_layout(theta) || !t.meta_grad.same_layout(theta)) {
      throw std::invalid_argument("rescale_and_update: layer names or shapes of task '" + t.source_domain +
                                  "' do not match theta");
    }
  }
  UpdateResult out;
  const std::size_t n = tasks.size();
  double loss_sum = 0.0;
  for (const auto& t : tasks) {
    out.report.tasks.push_back({t.source_domain, t.inner_losses, t.meta_loss});
    loss_sum += t.meta_loss;
  }
  out.report.overall_loss = loss_sum / static_cast<double>(n);

  for (const auto& [name, th] : theta) {
    const auto values = th.data();
    const std::size_t size = values.size();
    std::vector<double> scores(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = tasks[i].meta_grad.at(name).data();
      const auto phi = tasks[i].phi.at(name).data();
      double dot = 0.0, gg = 0.0, dd = 0.0;
      for (std::size_t k = 0; k < size; ++k) {
        const double disp = phi[k] - values[k];
        dot += g[k] * disp;
        gg += g[k] * g[k];
        dd += disp * disp;
      }
      const double gn = std::sqrt(gg), dn = std::sqrt(dd);
      scores[i] = (gn < kCosineEps || dn < kCosineEps) ? 0.0 : dot / (gn * dn);
    }
    auto w = task_weights(scores, cfg.temperature, cfg.rescale);

    std::vector<double> step(size, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = tasks[i].meta_grad.at(name).data();
      for (std::size_t k = 0; k < size; ++k) step[k] += w[i] * g[k];
    }
    std::vector<double> updated(size);
    for (std::size_t k = 0; k < size; ++k) updated[k] = values[k] - cfg.outer_lr * step[k];
    out.theta.set(name, ad::Tensor(th.shape(), std::move(updated)));
    out.report.layers.push_back({name, std::move(scores), std::move(w)});
  }
  return out;
}

std::size_t thread_cap() {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("METAREC_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) cap = static_cast<std::size_t>(v);
  }
  return cap;
}

namespace {

struct TaskPlan {
  const DomainDataset* source;
  std::vector<TaskBatch> inner;
  TaskBatch meta;
};

TaskResult run_task(const ParameterSet& theta, const TaskPlan& plan, const ModelConfig& model, const MetaConfig& cfg) {
  Adapted adapted = inner_adapt(theta, plan.inner, model, cfg);
  MetaGradient mg = meta_gradient(adapted, plan.meta, model, cfg);
  TaskResult r;
  r.source_domain = plan.source->domain;
  r.phi = adapted.phi.detached();
  r.meta_grad = std::move(mg.grads);
  r.inner_losses = std::move(adapted.inner_losses);
  r.meta_loss = mg.meta_loss;
  return r;
}

}  // namespace

UpdateResult train_iteration(const ParameterSet& theta, std::span<const DomainDataset> sources,
                             const DomainDataset& target, const ModelConfig& model, const MetaConfig& cfg, Rng& rng) {
  if (sources.empty()) throw std::invalid_argument("train_iteration: no source domains");
  if (train_eligible_users(target).empty()) throw std::invalid_argument("train_iteration: empty target train split");
  const std::size_t n = cfg.n_tasks;

  // All sampling happens up front, in task order.
  std::vector<std::size_t> chosen(n);
  if (sources.size() >= n) {
    std::vector<std::size_t> order(sources.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < n; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
    std::copy_n(order.begin(), n, chosen.begin());
  } else {
    for (auto& c : chosen) c = rng.below(sources.size());
  }
  std::vector<TaskPlan> plans(n);
  for (std::size_t i = 0; i < n; ++i) {
    plans[i].source = &sources[chosen[i]];
    for (std::size_t s = 0; s < cfg.inner_steps; ++s) {
      plans[i].inner.push_back(sample_batch(*plans[i].source, Split::kTrain, cfg.inner_batch,
                                            model.encoder.max_len, rng));
    }
  }
  auto metas = sample_disjoint_batches(target, n, cfg.meta_batch, model.encoder.max_len, rng);
  for (std::size_t i = 0; i < n; ++i) plans[i].meta = std::move(metas[i]);

  std::vector<TaskResult> results(n);
  const std::size_t workers = cfg.parallel ? std::min(n, thread_cap()) : 1;
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = run_task(theta, plans[i], model, cfg);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) results[i] = run_task(theta, plans[i], model, cfg);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return rescale_and_update(theta, results, cfg);
}

ad::Tensor pooled_loss(const ParameterSet& params, const ModelConfig& model, std::span<const TaskBatch> batches,
                       bool include_vq) {
  if (batches.empty()) throw std::invalid_argument("pooled_loss: no batches");
  std::size_t total_rows = 0;
  for (const auto& b : batches) total_rows += b.size();
  if (total_rows == 0) throw std::invalid_argument("pooled_loss: empty batches");

  std::map<std::string, DomainItems> items;
  ad::Tensor rec;
  bool first = true;
  for (const auto& b : batches) {
    if (b.size() == 0) continue;
    auto it = items.find(b.domain);
    if (it == items.end()) it = items.emplace(b.domain, domain_items(params, model, b.domain)).first;
    const ad::Tensor& matrix = it->second.matrix;
    ad::Tensor ce = cross_entropy_loss(score(user_states(params, model, matrix, b), matrix), b.targets);
    ad::Tensor part = ad::scale(ce, static_cast<double>(b.size()) / static_cast<double>(total_rows));
    rec = first ? part : ad::add(rec, part);
    first = false;
  }
  if (!include_vq) return rec;

  std::size_t vq_rows = 0;
  for (const auto& [_, d] : items) {
    if (d.vq) vq_rows += d.matrix.dim(0);
  }
  ad::Tensor total = rec;
  for (const auto& [_, d] : items) {
    if (!d.vq) continue;
    total = ad::add(total, ad::scale(*d.vq, static_cast<double>(d.matrix.dim(0)) / static_cast<double>(vq_rows)));
  }
  return total;
}

JointResult joint_train_iteration(const ParameterSet& theta, std::span<const DomainDataset> sources,
                                  const DomainDataset& target, const ModelConfig& model, const JointConfig& cfg,
                                  Rng& rng) {
  std::vector<const DomainDataset*> pool_domains;
  for (const auto& s : sources) pool_domains.push_back(&s);
  pool_domains.push_back(&target);

  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t d = 0; d < pool_domains.size(); ++d) {
    for (std::size_t u : train_eligible_users(*pool_domains[d])) pool.emplace_back(d, u);
  }
  if (pool.empty()) throw std::invalid_argument("joint_train_iteration: empty training pools");
  if (cfg.batch == 0) throw std::invalid_argument("joint.batch must be positive");

  std::vector<std::vector<std::size_t>> picks(pool_domains.size());
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    const auto& [d, u] = pool[rng.below(pool.size())];
    picks[d].push_back(u);
  }
  std::vector<TaskBatch> batches;
  for (std::size_t d = 0; d < pool_domains.size(); ++d) {
    if (picks[d].empty()) continue;
    batches.push_back(train_batch_for_users(*pool_domains[d], picks[d], model.encoder.max_len, rng));
  }

  ad::Tape tape;
  ParameterSet leaves = theta.watch(tape);
  ad::Tensor loss = pooled_loss(leaves, model, batches);
  auto grads = ad::grad(loss, tensors_of(leaves));
  JointResult out;
  out.loss = loss.item();
  out.theta = descend(theta.detached(), grads, cfg.lr);
  return out;
}

}  // namespace metarec

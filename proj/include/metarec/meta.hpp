#pragma once

// Bi-level meta transfer: inner gradient descent on source tasks, meta
// gradients of the target loss through the adaptation, per-layer
// similarity-weighted aggregation and the outer update.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metarec/data.hpp"
#include "metarec/model.hpp"
#include "metarec/params.hpp"
#include "metarec/rng.hpp"

namespace metarec {

struct MetaConfig {
  std::size_t n_tasks = 3;
  double inner_lr = 0.5;
  double outer_lr = 0.5;
  std::size_t inner_steps = 2;
  double temperature = 1.0;
  std::size_t inner_batch = 32;
  std::size_t meta_batch = 32;
  bool second_order = true;
  bool vq_in_inner = true;
  bool vq_in_outer = true;
  // Off: uniform 1/n task weights.
  bool rescale = true;
  bool parallel = false;

  void validate() const;
};

// Loss of the step-th inner update evaluated at the given parameters.
using StepLoss = std::function<ad::Tensor(const ParameterSet&, std::size_t step)>;
using ParamLoss = std::function<ad::Tensor(const ParameterSet&)>;

struct Adapted {
  // Leaves of `tape` in second-order mode, detached otherwise.
  ParameterSet theta;
  // A differentiable function of `theta` in second-order mode.
  ParameterSet phi;
  std::vector<double> inner_losses;
  bool second_order = false;
  ad::Tape tape;
};

// `steps` updates phi <- phi - lr * grad(loss(phi, step)) starting at theta.
// Never mutates theta.
Adapted inner_adapt(const ParameterSet& theta, const StepLoss& loss, std::size_t steps, double lr,
                    bool second_order);

// One source batch per inner step.
Adapted inner_adapt(const ParameterSet& theta, std::span<const TaskBatch> batches, const ModelConfig& model,
                    const MetaConfig& cfg);

struct MetaGradient {
  ParameterSet grads;  // keyed like theta
  double meta_loss = 0.0;
};

// d loss(phi) / d theta through the adaptation when second_order is set;
// grad_phi loss re-keyed onto theta otherwise. Throws std::logic_error if
// `second_order` differs from how `adapted` was built.
MetaGradient meta_gradient(const Adapted& adapted, const ParamLoss& loss, bool second_order);
MetaGradient meta_gradient(const Adapted& adapted, const TaskBatch& target_batch, const ModelConfig& model,
                           const MetaConfig& cfg);

struct TaskResult {
  std::string source_domain;
  ParameterSet phi;        // detached
  ParameterSet meta_grad;  // detached
  std::vector<double> inner_losses;
  double meta_loss = 0.0;
};

struct LayerWeights {
  std::string layer;
  std::vector<double> scores;
  std::vector<double> weights;
};

struct TaskReport {
  std::string source_domain;
  std::vector<double> inner_losses;
  double meta_loss = 0.0;
};

struct MetaIterationReport {
  std::vector<TaskReport> tasks;
  std::vector<LayerWeights> layers;
  // Mean over tasks of the meta objective.
  double overall_loss = 0.0;

  double mean_max_weight() const;
};

struct UpdateResult {
  ParameterSet theta;
  MetaIterationReport report;
};

// Softmax over s_i / tau per layer, s_i the cosine between task i's meta
// gradient and its displacement phi_i - theta (0 when either norm is below
// eps); theta' = theta - outer_lr * sum_i w_i * meta_grad_i.
UpdateResult rescale_and_update(const ParameterSet& theta, std::span<const TaskResult> tasks, const MetaConfig& cfg);

// Weights used for one layer; exposed for property tests.
std::vector<double> task_weights(std::span<const double> scores, double temperature, bool rescale);

// Samples n source tasks and n target meta-batches, adapts and meta-
// differentiates each pair from the same theta, then applies one update.
UpdateResult train_iteration(const ParameterSet& theta, std::span<const DomainDataset> sources,
                             const DomainDataset& target, const ModelConfig& model, const MetaConfig& cfg, Rng& rng);

struct JointConfig {
  std::size_t batch = 288;
  double lr = 0.5;
};

struct JointResult {
  ParameterSet theta;
  double loss = 0.0;
};

// Per-example mean cross entropy over batches from several domains plus the
// row-weighted VQ loss of every quantized domain present.
ad::Tensor pooled_loss(const ParameterSet& params, const ModelConfig& model, std::span<const TaskBatch> batches,
                       bool include_vq = true);

// One gradient step on a batch drawn uniformly from the pooled training users
// of every source and the target.
JointResult joint_train_iteration(const ParameterSet& theta, std::span<const DomainDataset> sources,
                                  const DomainDataset& target, const ModelConfig& model, const JointConfig& cfg,
                                  Rng& rng);

// Worker cap from METAREC_THREADS (default: hardware concurrency).
std::size_t thread_cap();

}  // namespace metarec

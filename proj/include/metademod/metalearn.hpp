#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "metademod/channel.hpp"
#include "metademod/demodnet.hpp"

namespace metademod {

struct MetaConfig {
  double eta = 0.1;     // inner / adaptation step size
  double kappa = 0.025; // outer step size
  std::size_t inner_batch = 4;
  std::size_t outer_batch = 4;
  std::size_t meta_iterations = 10000;
  std::size_t inner_steps = 1;
  bool second_order = true;

  // Target-device adaptation. When adapt_steps is unset the budget is
  // adapt_epochs passes over the P pilots.
  std::size_t adapt_batch = 1;
  std::optional<std::size_t> adapt_steps;
  std::size_t adapt_epochs = 200;
  // Use minibatch 1 when P < adapt_batch instead of min(adapt_batch, P).
  bool adapt_small_batch_fallback = false;

  // Joint-training benchmark.
  double joint_lr = 0.01;
  std::size_t joint_batch = 4;
  std::size_t joint_iterations = 10000;

  static MetaConfig toy();
  static MetaConfig realistic();

  void validate() const;
  std::size_t adaptation_batch(std::size_t num_pilots) const;
  std::size_t adaptation_steps(std::size_t num_pilots) const;
};

struct Split {
  std::size_t n_train;
  std::size_t n_test;
};

// Called with (iteration, meta-loss estimate) after each meta-iteration.
using Telemetry = std::function<void(std::size_t, double)>;

// theta - eta * grad.
NetParams sgd_step(const NetParams& params, std::span<const double> grad, double eta);

NetParams inner_adapt(const NetParams& params, std::span<const Sample> trainset,
                      const MetaConfig& cfg, RngStream& rng);

struct MetaIterationResult {
  NetParams params;
  // Sum over devices of the test-split loss at the adapted parameters.
  double meta_loss;
};

MetaIterationResult maml_meta_iteration(const NetParams& params, const MetaDataset& meta,
                                        Split split, const MetaConfig& cfg, RngStream& rng);

NetParams maml_train(const MetaDataset& meta, Split split, const MetaConfig& cfg,
                     const NetParams& init, RngStream& rng, const Telemetry& telemetry = {});

NetParams joint_train(const MetaDataset& meta, double lr, std::size_t batch,
                      std::size_t iterations, const NetParams& init, RngStream& rng,
                      const Telemetry& telemetry = {});

NetParams target_adapt(const NetParams& params, std::span<const Sample> targetset,
                       const MetaConfig& cfg, RngStream& rng);

// Deterministic full-batch meta-objective sum_k L_te_k(theta - eta grad L_tr_k(theta)),
// with the first n_train samples of each device as the training split.
double maml_objective(const NetParams& params, const MetaDataset& meta, Split split, double eta);

}  // namespace metademod

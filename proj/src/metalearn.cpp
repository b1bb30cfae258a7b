#include "metademod/metalearn.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace metademod {

MetaConfig MetaConfig::toy() { return MetaConfig{}; }

MetaConfig MetaConfig::realistic() {
  MetaConfig c;
  c.eta = 0.01;
  c.kappa = 0.001;
  c.inner_batch = 8;
  c.outer_batch = 8;
  c.adapt_batch = 8;
  c.adapt_small_batch_fallback = true;
  c.joint_lr = 0.01;
  c.joint_batch = 8;
  return c;
}

void MetaConfig::validate() const {
  if (!(eta >= 0.0)) throw std::invalid_argument("meta: eta must be >= 0");
  if (!(kappa >= 0.0)) throw std::invalid_argument("meta: kappa must be >= 0");
  if (inner_batch == 0 || outer_batch == 0 || adapt_batch == 0 || joint_batch == 0)
    throw std::invalid_argument("meta: batch sizes must be >= 1");
  if (!(joint_lr >= 0.0)) throw std::invalid_argument("meta: joint_lr must be >= 0");
}

std::size_t MetaConfig::adaptation_batch(std::size_t num_pilots) const {
  if (num_pilots < adapt_batch) return adapt_small_batch_fallback ? 1 : num_pilots;
  return adapt_batch;
}

std::size_t MetaConfig::adaptation_steps(std::size_t num_pilots) const {
  if (adapt_steps) return *adapt_steps;
  const std::size_t b = adaptation_batch(num_pilots);
  return adapt_epochs * ((num_pilots + b - 1) / b);
}

namespace {

// First `count` entries of a fresh random permutation of `data`.
std::vector<Sample> draw_without_replacement(std::span<const Sample> data, std::size_t count,
                                             RngStream& rng) {
  if (count >= data.size()) return {data.begin(), data.end()};
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(data[idx[i]]);
  return out;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

void warn_first_order_fallback() {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true))
    std::cerr << "warning: inner_steps > 1 uses the first-order meta-gradient\n";
}

// Minibatch cursor that reshuffles at every epoch boundary.
class EpochSampler {
 public:
  EpochSampler(std::span<const Sample> data, std::size_t batch, RngStream& rng)
      : data_(data), batch_(batch), rng_(rng), order_(data.size()) {
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
  }

  std::vector<Sample> next() {
    if (pos_ >= order_.size()) reshuffle();
    const std::size_t end = std::min(pos_ + batch_, order_.size());
    std::vector<Sample> out;
    out.reserve(end - pos_);
    for (; pos_ < end; ++pos_) out.push_back(data_[order_[pos_]]);
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_.engine());
    pos_ = 0;
  }

  std::span<const Sample> data_;
  std::size_t batch_;
  RngStream& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

NetParams sgd_step(const NetParams& params, std::span<const double> grad, double eta) {
  if (grad.size() != params.size()) throw std::invalid_argument("sgd_step: shape mismatch");
  NetParams out = params;
  axpy(-eta, grad, out.theta());
  return out;
}

NetParams inner_adapt(const NetParams& params, std::span<const Sample> trainset,
                      const MetaConfig& cfg, RngStream& rng) {
  if (trainset.empty()) throw std::invalid_argument("inner_adapt: empty training set");
  NetParams theta = params;
  for (std::size_t step = 0; step < cfg.inner_steps; ++step) {
    const auto batch = draw_without_replacement(trainset, cfg.inner_batch, rng);
    theta = sgd_step(theta, loss_grad(theta, batch).grad, cfg.eta);
  }
  return theta;
}

MetaIterationResult maml_meta_iteration(const NetParams& params, const MetaDataset& meta,
                                        Split split, const MetaConfig& cfg, RngStream& rng) {
  if (meta.per_device.empty()) throw std::invalid_argument("maml: empty meta-training set");
  if (split.n_train == 0 || split.n_test == 0)
    throw std::invalid_argument("maml: both split sizes must be >= 1");
  const bool exact = cfg.second_order && cfg.inner_steps == 1;
  if (cfg.second_order && cfg.inner_steps > 1) warn_first_order_fallback();

  std::vector<double> outer(params.size(), 0.0);
  double meta_loss = 0.0;
  for (const auto& data : meta.per_device) {
    if (split.n_train + split.n_test != data.size())
      throw std::invalid_argument("maml: n_train + n_test must equal the per-device pilot count");
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    std::vector<Sample> train, test;
    for (std::size_t i = 0; i < split.n_train; ++i) train.push_back(data[idx[i]]);
    for (std::size_t i = split.n_train; i < data.size(); ++i) test.push_back(data[idx[i]]);

    if (exact) {
      const auto train_batch = draw_without_replacement(train, cfg.inner_batch, rng);
      const auto test_batch = draw_without_replacement(test, cfg.outer_batch, rng);
      const auto adapted = sgd_step(params, loss_grad(params, train_batch).grad, cfg.eta);
      auto [value, g_test] = loss_grad(adapted, test_batch);
      meta_loss += value;
      // (I - eta H_tr(theta)) g_test
      const auto hg = hvp(params, train_batch, g_test);
      axpy(1.0, g_test, outer);
      axpy(-cfg.eta, hg, outer);
    } else {
      const auto adapted = inner_adapt(params, train, cfg, rng);
      const auto test_batch = draw_without_replacement(test, cfg.outer_batch, rng);
      auto [value, g_test] = loss_grad(adapted, test_batch);
      meta_loss += value;
      axpy(1.0, g_test, outer);
    }
  }
  return {sgd_step(params, outer, cfg.kappa), meta_loss};
}

NetParams maml_train(const MetaDataset& meta, Split split, const MetaConfig& cfg,
                     const NetParams& init, RngStream& rng, const Telemetry& telemetry) {
  if (meta.per_device.empty()) throw std::invalid_argument("maml_train: empty meta-training set");
  NetParams theta = init;
  for (std::size_t it = 0; it < cfg.meta_iterations; ++it) {
    auto step = maml_meta_iteration(theta, meta, split, cfg, rng);
    theta = std::move(step.params);
    if (telemetry) telemetry(it, step.meta_loss);
  }
  return theta;
}

NetParams joint_train(const MetaDataset& meta, double lr, std::size_t batch,
                      std::size_t iterations, const NetParams& init, RngStream& rng,
                      const Telemetry& telemetry) {
  if (meta.per_device.empty()) throw std::invalid_argument("joint_train: empty meta-training set");
  if (batch == 0) throw std::invalid_argument("joint_train: batch must be >= 1");
  std::vector<Sample> pooled;
  for (const auto& d : meta.per_device) pooled.insert(pooled.end(), d.begin(), d.end());
  // Canonical order so the result does not depend on device ordering.
  std::sort(pooled.begin(), pooled.end(), [](const Sample& a, const Sample& b) {
    return std::make_tuple(a.label, a.received.real(), a.received.imag()) <
           std::make_tuple(b.label, b.received.real(), b.received.imag());
  });
  NetParams theta = init;
  EpochSampler sampler(pooled, batch, rng);
  for (std::size_t it = 0; it < iterations; ++it) {
    const auto mb = sampler.next();
    auto [value, grad] = loss_grad(theta, mb);
    theta = sgd_step(theta, grad, lr);
    if (telemetry) telemetry(it, value);
  }
  return theta;
}

NetParams target_adapt(const NetParams& params, std::span<const Sample> targetset,
                       const MetaConfig& cfg, RngStream& rng) {
  if (targetset.empty()) throw std::invalid_argument("target_adapt: empty pilot set");
  const std::size_t steps = cfg.adaptation_steps(targetset.size());
  NetParams theta = params;
  if (steps == 0) return theta;
  EpochSampler sampler(targetset, cfg.adaptation_batch(targetset.size()), rng);
  for (std::size_t s = 0; s < steps; ++s) {
    const auto mb = sampler.next();
    theta = sgd_step(theta, loss_grad(theta, mb).grad, cfg.eta);
  }
  return theta;
}

double maml_objective(const NetParams& params, const MetaDataset& meta, Split split, double eta) {
  double total = 0.0;
  for (const auto& data : meta.per_device) {
    if (split.n_train + split.n_test != data.size())
      throw std::invalid_argument("maml_objective: invalid split");
    std::span<const Sample> all(data);
    const auto train = all.first(split.n_train);
    const auto test = all.subspan(split.n_train);
    const auto adapted = sgd_step(params, loss_grad(params, train).grad, eta);
    total += loss(adapted, test);
  }
  return total;
}

}  // namespace metademod

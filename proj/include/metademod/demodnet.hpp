#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metademod/channel.hpp"
#include "metademod/numerics.hpp"

namespace metademod {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { Tanh, Relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct NetArch {
  // Input width 2 (Re y, Im y), then hidden widths, then M outputs.
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::Tanh;

  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  std::size_t num_outputs() const { return layer_sizes.back(); }
  std::size_t num_params() const;
  void validate() const;

  bool operator==(const NetArch&) const = default;
};

// Offsets of one affine layer inside the flat parameter vector. The weight
// block is row-major (out x in), so row s of the last layer is w_s.
struct LayerSlice {
  std::size_t weight_offset;
  std::size_t bias_offset;
  std::size_t in;
  std::size_t out;
};

std::vector<LayerSlice> layer_layout(const NetArch& arch);

class NetParams {
 public:
  NetParams() = default;
  explicit NetParams(NetArch arch);
  NetParams(NetArch arch, std::vector<double> theta);

  const NetArch& arch() const { return arch_; }
  const std::vector<LayerSlice>& layout() const { return layout_; }

  std::span<const double> theta() const { return theta_; }
  std::span<double> theta() { return theta_; }
  std::size_t size() const { return theta_.size(); }

  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    const auto& s = layout_[layer];
    return theta_[s.weight_offset + row * s.in + col];
  }
  double weight(std::size_t layer, std::size_t row, std::size_t col) const {
    const auto& s = layout_[layer];
    return theta_[s.weight_offset + row * s.in + col];
  }
  double& bias(std::size_t layer, std::size_t row) { return theta_[layout_[layer].bias_offset + row]; }
  double bias(std::size_t layer, std::size_t row) const {
    return theta_[layout_[layer].bias_offset + row];
  }

  bool operator==(const NetParams& o) const { return arch_ == o.arch_ && theta_ == o.theta_; }

 private:
  NetArch arch_;
  std::vector<LayerSlice> layout_;
  std::vector<double> theta_;
};

struct InitSpec {
  enum Mode { Constant, Gaussian } mode = Constant;
  double value = 1.0;  // Constant mode
  // Gaussian mode: weight std = scale / sqrt(fan_in), biases zero.
  double scale = 1.0;

  static InitSpec constant(double v) { return {Constant, v, 1.0}; }
  static InitSpec gaussian(double scale = 1.0) { return {Gaussian, 0.0, scale}; }
};

NetParams init_params(const NetArch& arch, const InitSpec& init, RngStream& rng);

std::vector<double> forward(const NetParams& params, Complex y);

// Cross-entropy: -sum log p(label | received).
double loss(const NetParams& params, std::span<const Sample> data);

struct LossGrad {
  double value;
  std::vector<double> grad;
};

LossGrad loss_grad(const NetParams& params, std::span<const Sample> data);

// Exact Hessian-vector product of the loss (forward-over-reverse).
std::vector<double> hvp(const NetParams& params, std::span<const Sample> data,
                        std::span<const double> v);

std::size_t demodulate(const NetParams& params, Complex y);
std::vector<std::size_t> demodulate(const NetParams& params, std::span<const Complex> ys);

}  // namespace metademod

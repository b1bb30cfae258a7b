#include "metademod/demodnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace metademod {

std::string to_string(Activation a) {
  return a == Activation::Tanh ? "tanh" : "relu";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::size_t NetArch::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  return n;
}

void NetArch::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("arch: need at least input and output layers");
  if (layer_sizes.front() != 2) throw std::invalid_argument("arch: input width must be 2");
  for (auto w : layer_sizes)
    if (w == 0) throw std::invalid_argument("arch: zero-width layer");
}

std::vector<LayerSlice> layer_layout(const NetArch& arch) {
  std::vector<LayerSlice> out;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l) {
    const std::size_t in = arch.layer_sizes[l];
    const std::size_t n = arch.layer_sizes[l + 1];
    out.push_back({offset, offset + n * in, in, n});
    offset += n * (in + 1);
  }
  return out;
}

NetParams::NetParams(NetArch arch) : NetParams(arch, std::vector<double>(arch.num_params(), 0.0)) {}

NetParams::NetParams(NetArch arch, std::vector<double> theta)
    : arch_(std::move(arch)), theta_(std::move(theta)) {
  arch_.validate();
  if (theta_.size() != arch_.num_params())
    throw std::invalid_argument("NetParams: parameter vector length does not match architecture");
  layout_ = layer_layout(arch_);
}

NetParams init_params(const NetArch& arch, const InitSpec& init, RngStream& rng) {
  NetParams p(arch);
  if (init.mode == InitSpec::Constant) {
    std::fill(p.theta().begin(), p.theta().end(), init.value);
    return p;
  }
  for (std::size_t l = 0; l < p.layout().size(); ++l) {
    const auto& s = p.layout()[l];
    const double sd = init.scale / std::sqrt(static_cast<double>(s.in));
    for (std::size_t i = 0; i < s.out * s.in; ++i) p.theta()[s.weight_offset + i] = sd * rng.normal();
  }
  return p;
}

namespace {

// Per-sample forward/backward buffers. pre[l] / post[l] hold layer l's
// pre-activation and output; post[0] is the input and post[L] the softmax.
class Evaluator {
 public:
  explicit Evaluator(const NetParams& params) : p_(params), layout_(params.layout()) {
    const auto& sizes = params.arch().layer_sizes;
    tanh_ = params.arch().activation == Activation::Tanh;
    pre_.resize(sizes.size());
    post_.resize(sizes.size());
    rpre_.resize(sizes.size());
    rpost_.resize(sizes.size());
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      pre_[l].assign(sizes[l], 0.0);
      post_[l].assign(sizes[l], 0.0);
      rpre_[l].assign(sizes[l], 0.0);
      rpost_[l].assign(sizes[l], 0.0);
    }
    delta_.assign(*std::max_element(sizes.begin(), sizes.end()), 0.0);
    rdelta_ = delta_;
    back_ = delta_;
    rback_ = delta_;
  }

  // Returns -log p(label | y).
  double forward(Complex y, std::size_t label) {
    const std::size_t nl = layout_.size();
    const auto theta = p_.theta();
    post_[0][0] = y.real();
    post_[0][1] = y.imag();
    for (std::size_t l = 0; l < nl; ++l) {
      const auto& s = layout_[l];
      const double* w = theta.data() + s.weight_offset;
      const double* b = theta.data() + s.bias_offset;
      const auto& x = post_[l];
      auto& a = pre_[l + 1];
      for (std::size_t i = 0; i < s.out; ++i) {
        double acc = b[i];
        const double* row = w + i * s.in;
        for (std::size_t j = 0; j < s.in; ++j) acc += row[j] * x[j];
        a[i] = acc;
      }
      if (l + 1 < nl) {
        auto& h = post_[l + 1];
        if (tanh_)
          for (std::size_t i = 0; i < s.out; ++i) h[i] = std::tanh(a[i]);
        else
          for (std::size_t i = 0; i < s.out; ++i) h[i] = a[i] > 0.0 ? a[i] : 0.0;
      }
    }
    const auto& z = pre_[nl];
    auto& prob = post_[nl];
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      prob[i] = std::exp(z[i] - zmax);
      sum += prob[i];
    }
    for (auto& q : prob) q /= sum;
    const double out = std::log(sum) + zmax - (label < z.size() ? z[label] : 0.0);
    if (!std::isfinite(out) || !std::isfinite(sum))
      throw NumericError("demodulator forward pass produced non-finite values");
    return out;
  }

  const std::vector<double>& probabilities() const { return post_.back(); }
  const std::vector<double>& logits() const { return pre_.back(); }

  // Adds d(-log p(label|y))/dtheta into grad. Requires a preceding forward().
  void backward(std::size_t label, std::span<double> grad) {
    const std::size_t nl = layout_.size();
    const auto theta = p_.theta();
    const auto& prob = post_[nl];
    for (std::size_t i = 0; i < prob.size(); ++i) delta_[i] = prob[i] - (i == label ? 1.0 : 0.0);
    for (std::size_t l = nl; l-- > 0;) {
      const auto& s = layout_[l];
      const auto& x = post_[l];
      double* gw = grad.data() + s.weight_offset;
      double* gb = grad.data() + s.bias_offset;
      for (std::size_t i = 0; i < s.out; ++i) {
        const double d = delta_[i];
        gb[i] += d;
        double* row = gw + i * s.in;
        for (std::size_t j = 0; j < s.in; ++j) row[j] += d * x[j];
      }
      if (l == 0) break;
      const double* w = theta.data() + s.weight_offset;
      std::fill(back_.begin(), back_.begin() + s.in, 0.0);
      for (std::size_t i = 0; i < s.out; ++i) {
        const double* row = w + i * s.in;
        for (std::size_t j = 0; j < s.in; ++j) back_[j] += row[j] * delta_[i];
      }
      for (std::size_t j = 0; j < s.in; ++j) delta_[j] = back_[j] * dsigma(l, j);
    }
  }

  // Adds H(sample) * v into out, where H is the Hessian of -log p(label|y).
  // Requires a preceding forward().
  void hessian_vector(std::size_t label, std::span<const double> v, std::span<double> out) {
    const std::size_t nl = layout_.size();
    const auto theta = p_.theta();

    // Directional derivative of the forward pass along v.
    std::fill(rpost_[0].begin(), rpost_[0].end(), 0.0);
    for (std::size_t l = 0; l < nl; ++l) {
      const auto& s = layout_[l];
      const double* w = theta.data() + s.weight_offset;
      const double* vw = v.data() + s.weight_offset;
      const double* vb = v.data() + s.bias_offset;
      const auto& x = post_[l];
      const auto& rx = rpost_[l];
      auto& ra = rpre_[l + 1];
      for (std::size_t i = 0; i < s.out; ++i) {
        double acc = vb[i];
        const double* row = w + i * s.in;
        const double* vrow = vw + i * s.in;
        for (std::size_t j = 0; j < s.in; ++j) acc += vrow[j] * x[j] + row[j] * rx[j];
        ra[i] = acc;
      }
      if (l + 1 < nl) {
        auto& rh = rpost_[l + 1];
        for (std::size_t i = 0; i < s.out; ++i) rh[i] = dsigma(l + 1, i) * ra[i];
      }
    }
    const auto& prob = post_[nl];
    const auto& rz = rpre_[nl];
    double pdot = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) pdot += prob[i] * rz[i];
    for (std::size_t i = 0; i < prob.size(); ++i) {
      delta_[i] = prob[i] - (i == label ? 1.0 : 0.0);
      rdelta_[i] = prob[i] * (rz[i] - pdot);
    }

    // Directional derivative of the backward pass.
    for (std::size_t l = nl; l-- > 0;) {
      const auto& s = layout_[l];
      const auto& x = post_[l];
      const auto& rx = rpost_[l];
      double* ow = out.data() + s.weight_offset;
      double* ob = out.data() + s.bias_offset;
      for (std::size_t i = 0; i < s.out; ++i) {
        const double d = delta_[i];
        const double rd = rdelta_[i];
        ob[i] += rd;
        double* row = ow + i * s.in;
        for (std::size_t j = 0; j < s.in; ++j) row[j] += rd * x[j] + d * rx[j];
      }
      if (l == 0) break;
      const double* w = theta.data() + s.weight_offset;
      const double* vw = v.data() + s.weight_offset;
      std::fill(back_.begin(), back_.begin() + s.in, 0.0);
      std::fill(rback_.begin(), rback_.begin() + s.in, 0.0);
      for (std::size_t i = 0; i < s.out; ++i) {
        const double* row = w + i * s.in;
        const double* vrow = vw + i * s.in;
        for (std::size_t j = 0; j < s.in; ++j) {
          back_[j] += row[j] * delta_[i];
          rback_[j] += vrow[j] * delta_[i] + row[j] * rdelta_[i];
        }
      }
      for (std::size_t j = 0; j < s.in; ++j) {
        delta_[j] = back_[j] * dsigma(l, j);
        rdelta_[j] = rback_[j] * dsigma(l, j) + back_[j] * d2sigma(l, j) * rpre_[l][j];
      }
    }
  }

 private:
  double dsigma(std::size_t layer, std::size_t i) const {
    if (tanh_) {
      const double t = post_[layer][i];
      return 1.0 - t * t;
    }
    return pre_[layer][i] > 0.0 ? 1.0 : 0.0;
  }

  // ReLU curvature is taken as zero everywhere, including the kink.
  double d2sigma(std::size_t layer, std::size_t i) const {
    if (!tanh_) return 0.0;
    const double t = post_[layer][i];
    return -2.0 * t * (1.0 - t * t);
  }

  const NetParams& p_;
  const std::vector<LayerSlice>& layout_;
  bool tanh_;
  std::vector<std::vector<double>> pre_, post_, rpre_, rpost_;
  std::vector<double> delta_, rdelta_, back_, rback_;
};

void require_nonempty(std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("loss: empty dataset");
}

}  // namespace

std::vector<double> forward(const NetParams& params, Complex y) {
  if (!std::isfinite(y.real()) || !std::isfinite(y.imag()))
    throw NumericError("forward: non-finite input");
  Evaluator ev(params);
  ev.forward(y, 0);
  return ev.probabilities();
}

double loss(const NetParams& params, std::span<const Sample> data) {
  require_nonempty(data);
  Evaluator ev(params);
  double total = 0.0;
  for (const auto& s : data) total += ev.forward(s.received, s.label);
  return total;
}

LossGrad loss_grad(const NetParams& params, std::span<const Sample> data) {
  require_nonempty(data);
  Evaluator ev(params);
  LossGrad out{0.0, std::vector<double>(params.size(), 0.0)};
  for (const auto& s : data) {
    out.value += ev.forward(s.received, s.label);
    ev.backward(s.label, out.grad);
  }
  return out;
}

std::vector<double> hvp(const NetParams& params, std::span<const Sample> data,
                        std::span<const double> v) {
  require_nonempty(data);
  if (v.size() != params.size()) throw std::invalid_argument("hvp: direction has wrong length");
  Evaluator ev(params);
  std::vector<double> out(params.size(), 0.0);
  for (const auto& s : data) {
    ev.forward(s.received, s.label);
    ev.hessian_vector(s.label, v, out);
  }
  return out;
}

std::size_t demodulate(const NetParams& params, Complex y) {
  if (!std::isfinite(y.real()) || !std::isfinite(y.imag()))
    throw NumericError("demodulate: non-finite input");
  Evaluator ev(params);
  ev.forward(y, 0);
  const auto& z = ev.logits();
  // max_element returns the first maximum: ties go to the lowest index.
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

std::vector<std::size_t> demodulate(const NetParams& params, std::span<const Complex> ys) {
  Evaluator ev(params);
  std::vector<std::size_t> out;
  out.reserve(ys.size());
  for (const auto& y : ys) {
    if (!std::isfinite(y.real()) || !std::isfinite(y.imag()))
      throw NumericError("demodulate: non-finite input");
    ev.forward(y, 0);
    const auto& z = ev.logits();
    out.push_back(static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()));
  }
  return out;
}

}  // namespace metademod

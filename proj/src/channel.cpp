#include "metademod/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace metademod {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::PAM4: return "pam4";
    case Scheme::QAM16: return "qam16";
  }
  throw std::invalid_argument("unknown scheme");
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "pam4" || name == "PAM4") return Scheme::PAM4;
  if (name == "qam16" || name == "QAM16") return Scheme::QAM16;
  throw std::invalid_argument("unknown modulation scheme '" + name + "'");
}

double Constellation::mean_energy() const {
  double acc = 0.0;
  for (const auto& s : symbols) acc += std::norm(s);
  return acc / static_cast<double>(symbols.size());
}

Constellation make_constellation(Scheme scheme, double amplitude) {
  Constellation c{scheme, amplitude, {}};
  switch (scheme) {
    case Scheme::PAM4:
      c.amplitude = 1.0;
      c.symbols = {{-3.0, 0.0}, {-1.0, 0.0}, {1.0, 0.0}, {3.0, 0.0}};
      return c;
    case Scheme::QAM16: {
      if (!(amplitude > 0.0)) throw DomainError("QAM16 amplitude must be positive");
      const double levels[] = {-3.0, -1.0, 1.0, 3.0};
      for (double a : levels)
        for (double b : levels) c.symbols.emplace_back(a * amplitude, b * amplitude);
      return c;
    }
  }
  throw std::invalid_argument("unknown scheme");
}

Complex apply_nonlinearity(Complex s, double alpha, double beta) {
  const double r = std::abs(s);
  if (r == 0.0) return {0.0, 0.0};
  const double gain = alpha / (1.0 + beta * r * r);
  // alpha r / (1 + beta r^2) * e^{j arg s} == gain * s
  return gain * s;
}

ScenarioConfig ScenarioConfig::toy() { return ScenarioConfig{}; }

ScenarioConfig ScenarioConfig::realistic() {
  ScenarioConfig c;
  c.scheme = Scheme::QAM16;
  c.amplitude = 1.0;
  c.snr_db = 21.0;
  c.num_devices = 20;
  c.pilots_per_device = 32;
  c.n_train = 16;
  c.n_test = 16;
  c.noise = NoiseModel::Complex;
  return c;
}

void ScenarioConfig::validate() const {
  if (num_devices == 0) throw std::invalid_argument("scenario: num_devices must be >= 1");
  if (pilots_per_device == 0) throw std::invalid_argument("scenario: pilots_per_device must be >= 1");
  if (n_train + n_test != pilots_per_device)
    throw std::invalid_argument("scenario: n_train + n_test must equal pilots_per_device");
  if (n_train == 0 || n_test == 0)
    throw std::invalid_argument("scenario: n_train and n_test must be >= 1");
  if (!(amplitude > 0.0)) throw std::invalid_argument("scenario: amplitude must be positive");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("scenario: snr_db must be finite");
  if (beta_min < 0.0 || beta_max < beta_min)
    throw std::invalid_argument("scenario: require 0 <= beta_min <= beta_max");
  if (noiseless && !allow_noiseless)
    throw std::invalid_argument("scenario: noiseless channels are restricted to tests");
}

double ScenarioConfig::noise_power() const {
  if (noiseless) return 0.0;
  return constellation().mean_energy() / std::pow(10.0, snr_db / 10.0);
}

Complex sample_noise(const DeviceChannel& device, RngStream& rng) {
  if (device.noise == NoiseModel::Complex) return sample_cgaussian(rng, device.noise_power);
  if (!(device.noise_power >= 0.0)) throw DomainError("sample_noise: negative noise power");
  if (device.noise_power == 0.0) return {0.0, 0.0};
  return {std::sqrt(device.noise_power) * rng.normal(), 0.0};
}

Complex transmit(std::size_t label, const DeviceChannel& device, const Constellation& constellation,
                 RngStream& rng) {
  if (label >= constellation.order()) throw std::out_of_range("transmit: label out of range");
  return device.response(constellation.symbols[label]) + sample_noise(device, rng);
}

std::vector<std::size_t> pilot_sequence(const Constellation& constellation, std::size_t n) {
  if (n == 0) throw std::invalid_argument("pilot_sequence: n must be >= 1");
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % constellation.order();
  return labels;
}

DeviceChannel sample_device(const ScenarioConfig& scenario, DeviceRole role, RngStream& rng) {
  DeviceChannel d;
  d.noise_power = scenario.noise_power();
  d.noise = scenario.noise;
  if (scenario.scheme == Scheme::PAM4) {
    // Binary fading, no amplifier distortion.
    d.alpha = 1.0;
    d.beta = 0.0;
    double sign;
    if (role.kind == DeviceRole::MetaTrain)
      sign = (role.index < scenario.num_devices / 2) ? 1.0 : -1.0;
    else
      sign = rng.coin() ? 1.0 : -1.0;
    d.h = {sign, 0.0};
  } else {
    d.h = sample_cgaussian(rng, 1.0);
    d.alpha = scenario.alpha;
    d.beta = rng.uniform(scenario.beta_min, scenario.beta_max);
  }
  return d;
}

namespace {

Dataset pilots_through(const DeviceChannel& device, const Constellation& constellation,
                       std::size_t n, RngStream& rng) {
  Dataset out;
  out.reserve(n);
  for (std::size_t label : pilot_sequence(constellation, n))
    out.push_back({label, transmit(label, device, constellation, rng)});
  return out;
}

}  // namespace

MetaDataset build_meta_dataset(const ScenarioConfig& scenario, RngStream& rng) {
  scenario.validate();
  const auto constellation = scenario.constellation();
  MetaDataset meta;
  meta.per_device.reserve(scenario.num_devices);
  meta.devices.reserve(scenario.num_devices);
  for (std::size_t k = 0; k < scenario.num_devices; ++k) {
    auto device = sample_device(scenario, DeviceRole::meta_train(k), rng);
    meta.per_device.push_back(
        pilots_through(device, constellation, scenario.pilots_per_device, rng));
    meta.devices.push_back(device);
  }
  return meta;
}

Dataset build_target_dataset(const DeviceChannel& device, const ScenarioConfig& scenario,
                             std::size_t num_pilots, RngStream& rng) {
  if (num_pilots == 0) throw std::invalid_argument("build_target_dataset: P must be >= 1");
  return pilots_through(device, scenario.constellation(), num_pilots, rng);
}

}  // namespace metademod

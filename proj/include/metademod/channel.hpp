#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "metademod/numerics.hpp"

namespace metademod {

enum class Scheme { PAM4, QAM16 };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& name);

struct Constellation {
  Scheme scheme;
  double amplitude;
  std::vector<Complex> symbols;

  std::size_t order() const { return symbols.size(); }
  double mean_energy() const;
};

// PAM4: {-3,-1,1,3}. QAM16: a+jb with a,b in {-3A,-A,A,3A}, row-major by (a, b).
Constellation make_constellation(Scheme scheme, double amplitude = 1.0);

// Amplitude-only amplifier distortion: alpha|s| / (1 + beta|s|^2) with the phase of s.
Complex apply_nonlinearity(Complex s, double alpha, double beta);

// Complex: z ~ CN(0, N_o). Real: z ~ N(0, N_o) on the in-phase axis only,
// the baseband model of a real (PAM) constellation.
enum class NoiseModel { Complex, Real };

struct DeviceChannel {
  Complex h{1.0, 0.0};
  double alpha = 1.0;
  double beta = 0.0;
  double noise_power = 0.0;
  NoiseModel noise = NoiseModel::Complex;

  // Noiseless end-to-end response h * g(s).
  Complex response(Complex s) const { return h * apply_nonlinearity(s, alpha, beta); }
};

struct Sample {
  std::size_t label;
  Complex received;
};

using Dataset = std::vector<Sample>;

struct MetaDataset {
  std::vector<Dataset> per_device;
  // Kept for oracle evaluation only.
  std::vector<DeviceChannel> devices;

  std::size_t size() const { return per_device.size(); }
};

struct ScenarioConfig {
  Scheme scheme = Scheme::PAM4;
  double amplitude = 1.0;
  double snr_db = 15.0;
  std::size_t num_devices = 20;      // K
  std::size_t pilots_per_device = 8; // N
  std::size_t n_train = 4;           // N^tr
  std::size_t n_test = 4;            // N^te

  // Realistic-scenario device distribution.
  double alpha = 4.0;
  double beta_min = 0.05;
  double beta_max = 0.15;

  NoiseModel noise = NoiseModel::Real;

  // Permits noise_power == 0; tests only.
  bool allow_noiseless = false;
  bool noiseless = false;

  static ScenarioConfig toy();
  static ScenarioConfig realistic();

  void validate() const;
  double noise_power() const;
  Constellation constellation() const { return make_constellation(scheme, amplitude); }
};

Complex sample_noise(const DeviceChannel& device, RngStream& rng);

// y = h g(s) + z.
Complex transmit(std::size_t label, const DeviceChannel& device, const Constellation& constellation,
                 RngStream& rng);

std::vector<std::size_t> pilot_sequence(const Constellation& constellation, std::size_t n);

struct DeviceRole {
  enum Kind { MetaTrain, MetaTest } kind;
  std::size_t index = 0;

  static DeviceRole meta_train(std::size_t k) { return {MetaTrain, k}; }
  static DeviceRole meta_test() { return {MetaTest, 0}; }
};

DeviceChannel sample_device(const ScenarioConfig& scenario, DeviceRole role, RngStream& rng);

MetaDataset build_meta_dataset(const ScenarioConfig& scenario, RngStream& rng);

Dataset build_target_dataset(const DeviceChannel& device, const ScenarioConfig& scenario,
                             std::size_t num_pilots, RngStream& rng);

}  // namespace metademod

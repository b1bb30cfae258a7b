#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metademod/channel.hpp"
#include "metademod/demodnet.hpp"
#include "metademod/eval.hpp"
#include "metademod/metalearn.hpp"

namespace metademod {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class IdealSource { Formula, Oracle };

struct GridConfig {
  bool enabled = false;
  GridSpec spec;
  std::size_t adapt_pilots = 6;
};

struct ExperimentConfig {
  std::string name = "toy";
  ScenarioConfig scenario;
  NetArch arch{{2, 30, 4}, Activation::Tanh};
  InitSpec init = InitSpec::constant(1.0);
  MetaConfig meta;

  std::vector<std::string> schemes{"maml", "joint", "fixed", "ideal"};
  std::vector<std::size_t> p_sweep{1, 2, 3, 4, 5, 6, 7, 8};
  std::size_t trials = 100;
  std::size_t test_symbols = 10000;
  std::uint64_t seed = 1;
  IdealSource ideal_source = IdealSource::Formula;
  std::size_t telemetry_every = 100;

  GridConfig grid;
  std::string output_dir = "out";

  static ExperimentConfig toy();
  static ExperimentConfig realistic();

  bool has_scheme(const std::string& s) const;
  Split split() const { return {scenario.n_train, scenario.n_test}; }
  void validate() const;
};

// Parses JSON text. Missing keys keep the defaults of the preset selected by
// scenario.scheme; unknown keys and invalid values raise ConfigError with the
// offending line number.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentConfig& cfg);

// Checkpoints: JSON object with the architecture and the flat parameter vector.
void save_checkpoint(const std::filesystem::path& path, const NetParams& params);
NetParams load_checkpoint(const std::filesystem::path& path);
nlohmann::json checkpoint_json(const NetParams& params);
NetParams checkpoint_from_json(const nlohmann::json& j);

// FNV-1a over the raw bytes of theta.
std::uint64_t params_checksum(const NetParams& params);

}  // namespace metademod

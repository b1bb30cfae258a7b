// metademod: meta-learned few-pilot demodulation experiments.
//
//   metademod experiment --config configs/toy.json --out out/toy --threads 4
//   metademod meta-train --config configs/toy.json --out ckpt
//   metademod adapt --checkpoint ckpt/checkpoint_maml.json --num-pilots 4 --out ckpt
//   metademod eval --checkpoint ckpt/checkpoint_adapted.json --device device.json
//   metademod grid --checkpoint ckpt/checkpoint_maml.json --out grid

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "metademod/config.hpp"
#include "metademod/experiment.hpp"

namespace fs = std::filesystem;
using namespace metademod;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t threads = 1;
  bool verbose = false;
};

ExperimentConfig resolve_config(const GlobalOptions& g) {
  ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig::toy() : load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.output_dir = *g.out;
  return cfg;
}

Dataset read_pilots_csv(const fs::path& path, std::size_t order) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pilot file " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("label,re,im", 0) != 0)
    throw std::runtime_error(path.string() + ": expected header label,re,im");
  Dataset data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t label;
    double re, im;
    char c1, c2;
    if (!(ls >> label >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',' || label >= order)
      throw std::runtime_error(path.string() + " line " + std::to_string(lineno) + ": malformed pilot row");
    data.push_back({label, {re, im}});
  }
  if (data.empty()) throw std::runtime_error(path.string() + ": no pilots");
  return data;
}

void write_pilots_csv(std::ostream& os, const Dataset& data, std::optional<std::size_t> device = {}) {
  os.precision(17);
  for (const auto& s : data) {
    if (device) os << *device << ',';
    os << s.label << ',' << s.received.real() << ',' << s.received.imag() << '\n';
  }
}

DeviceChannel read_device_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open device file " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    DeviceChannel d;
    d.h = {j.at("h").at(0).get<double>(), j.at("h").at(1).get<double>()};
    d.alpha = j.at("alpha").get<double>();
    d.beta = j.at("beta").get<double>();
    d.noise_power = j.at("noise_power").get<double>();
    if (j.contains("noise")) d.noise = j["noise"] == "real" ? NoiseModel::Real : NoiseModel::Complex;
    if (!(d.noise_power > 0.0)) throw std::runtime_error("noise_power must be positive");
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": invalid device description: " + e.what());
  }
}

nlohmann::json device_json(const DeviceChannel& d) {
  return {{"h", {d.h.real(), d.h.imag()}},
          {"alpha", d.alpha},
          {"beta", d.beta},
          {"noise_power", d.noise_power},
          {"noise", d.noise == NoiseModel::Real ? "real" : "complex"}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-pilot demodulation via meta-learning"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Experiment configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads for trials")->check(CLI::PositiveNumber);
  app.add_flag("--verbose", g.verbose, "Emit training telemetry on stderr");

  auto* meta_train = app.add_subcommand("meta-train", "Meta-train (or joint-train) and write a checkpoint");
  std::string scheme = "maml";
  std::size_t trial = 0;
  meta_train->add_option("--scheme", scheme, "maml, joint or fixed")
      ->check(CLI::IsMember({"maml", "joint", "fixed"}));
  meta_train->add_option("--trial", trial, "Trial index selecting the random streams");

  auto* adapt = app.add_subcommand("adapt", "Adapt a checkpoint to target-device pilots");
  std::string checkpoint, pilots_path, device_path, output_path;
  std::size_t num_pilots = 0;
  adapt->add_option("--checkpoint", checkpoint, "Input checkpoint")->required();
  adapt->add_option("--pilots", pilots_path, "Pilot CSV (label,re,im)");
  adapt->add_option("--num-pilots", num_pilots, "Simulate P pilots from a freshly drawn target device");
  adapt->add_option("--device", device_path, "Target device JSON used with --num-pilots");
  adapt->add_option("--trial", trial, "Trial index selecting the random streams");
  adapt->add_option("--output", output_path, "Adapted checkpoint path");

  auto* eval = app.add_subcommand("eval", "Monte-Carlo symbol error rate of a checkpoint");
  std::size_t symbols = 0;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--device", device_path, "Device JSON (h, alpha, beta, noise_power)");
  eval->add_option("--symbols", symbols, "Number of test symbols");
  eval->add_option("--trial", trial, "Trial index selecting the random streams");

  auto* experiment = app.add_subcommand("experiment", "Full comparison sweep over P");

  auto* grid = app.add_subcommand("grid", "Decision-grid CSV of a checkpoint");
  grid->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
  grid->add_option("--output", output_path, "Grid CSV path");
  std::optional<double> re_min, re_max, im_min, im_max;
  std::optional<std::size_t> points;
  grid->add_option("--re-min", re_min);
  grid->add_option("--re-max", re_max);
  grid->add_option("--im-min", im_min);
  grid->add_option("--im-max", im_max);
  grid->add_option("--points", points, "Points per axis");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = resolve_config(g);
    const fs::path out_dir = cfg.output_dir;

    if (*meta_train) {
      fs::create_directories(out_dir);
      auto data_rng = trial_stream(cfg.seed, StreamTag::MetaData, trial);
      auto init_rng = trial_stream(cfg.seed, StreamTag::Init, trial);
      const auto meta = build_meta_dataset(cfg.scenario, data_rng);
      const auto init = init_params(cfg.arch, cfg.init, init_rng);
      Telemetry telemetry;
      if (g.verbose)
        telemetry = [&](std::size_t it, double v) {
          if (cfg.telemetry_every && (it + 1) % cfg.telemetry_every == 0)
            std::cerr << "telemetry," << scheme << ',' << it + 1 << ',' << v << '\n';
        };
      NetParams theta = init;
      if (scheme == "maml") {
        auto rng = trial_stream(cfg.seed, StreamTag::Maml, trial);
        theta = maml_train(meta, cfg.split(), cfg.meta, init, rng, telemetry);
      } else if (scheme == "joint") {
        auto rng = trial_stream(cfg.seed, StreamTag::Joint, trial);
        theta = joint_train(meta, cfg.meta.joint_lr, cfg.meta.joint_batch, cfg.meta.joint_iterations,
                            init, rng, telemetry);
      }
      const auto path = out_dir / ("checkpoint_" + scheme + ".json");
      save_checkpoint(path, theta);
      std::ofstream ds(out_dir / "meta_dataset.csv");
      ds << "device,label,re,im\n";
      for (std::size_t k = 0; k < meta.size(); ++k) write_pilots_csv(ds, meta.per_device[k], k);
      std::cout << path.string() << '\n';
    } else if (*adapt) {
      const auto theta = load_checkpoint(checkpoint);
      Dataset pilots;
      if (!pilots_path.empty()) {
        pilots = read_pilots_csv(pilots_path, theta.arch().num_outputs());
      } else if (num_pilots > 0) {
        DeviceChannel device;
        if (!device_path.empty()) {
          device = read_device_json(device_path);
        } else {
          auto rng = trial_stream(cfg.seed, StreamTag::TargetDevice, trial);
          device = sample_device(cfg.scenario, DeviceRole::meta_test(), rng);
        }
        auto rng = trial_stream(cfg.seed, StreamTag::TargetPilots, trial);
        pilots = build_target_dataset(device, cfg.scenario, num_pilots, rng);
      } else {
        throw std::runtime_error("adapt: provide --pilots or --num-pilots");
      }
      auto rng = trial_stream(cfg.seed, StreamTag::Adapt, trial).derive(pilots.size());
      const auto adapted = target_adapt(theta, pilots, cfg.meta, rng);
      const fs::path path = output_path.empty() ? out_dir / "checkpoint_adapted.json" : fs::path(output_path);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      save_checkpoint(path, adapted);
      std::cout << path.string() << '\n';
    } else if (*eval) {
      const auto theta = load_checkpoint(checkpoint);
      DeviceChannel device;
      if (!device_path.empty()) {
        device = read_device_json(device_path);
      } else {
        auto rng = trial_stream(cfg.seed, StreamTag::TargetDevice, trial);
        device = sample_device(cfg.scenario, DeviceRole::meta_test(), rng);
      }
      const auto constellation = cfg.scenario.constellation();
      if (theta.arch().num_outputs() != constellation.order())
        throw std::runtime_error("eval: checkpoint output width does not match the constellation");
      const std::size_t n = symbols ? symbols : cfg.test_symbols;
      const auto test_rng = trial_stream(cfg.seed, StreamTag::TestSymbols, trial);
      auto rng = test_rng;
      const auto est = estimate_ser(theta, device, constellation, n, rng);
      rng = test_rng;
      const auto oracle = ml_oracle_ser(device, constellation, n, rng);
      std::cout << "ser,std_error,errors,trials,oracle_ser\n"
                << est.rate << ',' << est.std_error << ',' << est.errors << ',' << est.trials << ','
                << oracle.rate << '\n';
      if (g.verbose) std::cerr << device_json(device).dump() << '\n';
    } else if (*experiment) {
      RunOptions opts{g.threads, g.verbose, &std::cerr};
      const auto result = run_experiment(cfg, opts);
      write_outputs(out_dir, result);
      write_aggregate_csv(std::cout, result.aggregates);
    } else if (*grid) {
      const auto theta = load_checkpoint(checkpoint);
      GridSpec spec = cfg.grid.spec;
      if (re_min) spec.re_min = *re_min;
      if (re_max) spec.re_max = *re_max;
      if (im_min) spec.im_min = *im_min;
      if (im_max) spec.im_max = *im_max;
      if (points) spec.re_points = spec.im_points = *points;
      const auto rows = decision_grid(theta, spec);
      const fs::path path = output_path.empty() ? out_dir / "grid.csv" : fs::path(output_path);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      std::ofstream os(path);
      if (!os) throw std::runtime_error("cannot write " + path.string());
      write_grid_csv(os, rows);
      std::cout << path.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

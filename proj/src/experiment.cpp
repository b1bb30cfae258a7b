#include "metademod/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace metademod {

using nlohmann::json;

RngStream trial_stream(std::uint64_t seed, StreamTag tag, std::size_t trial) {
  return RngStream(seed, 0).derive(static_cast<std::uint64_t>(tag), trial);
}

namespace {

struct TrialOutcome {
  std::vector<ResultRow> rows;
  double ideal_formula = 0.0;
  double ideal_formula_abs = 0.0;
  double ideal_oracle = 0.0;
  std::uint64_t maml_checksum = 0;
  std::uint64_t joint_checksum = 0;
  json target_device;
  std::vector<GridRow> grid_pre, grid_post;
  std::optional<SymmetryDiagnostic> symmetry;
};

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

double snr_linear(const ScenarioConfig& s) { return std::pow(10.0, s.snr_db / 10.0); }

double formula_ser(const ExperimentConfig& cfg, const DeviceChannel& device, DminVariant variant) {
  if (cfg.scenario.scheme == Scheme::PAM4) return ideal_ser_toy(snr_linear(cfg.scenario));
  return ideal_ser_realistic(snr_linear(cfg.scenario), device.alpha, device.beta,
                             cfg.scenario.amplitude, variant);
}

class TelemetryLog {
 public:
  TelemetryLog(const RunOptions& opts) : out_(opts.verbose ? opts.log : nullptr) {}

  Telemetry make(std::size_t trial, const std::string& scheme, std::size_t every) {
    if (!out_ || trial != 0 || every == 0) return {};
    return [this, scheme, every](std::size_t it, double value) {
      if ((it + 1) % every != 0) return;
      std::lock_guard lock(mu_);
      *out_ << "telemetry," << scheme << ',' << it + 1 << ',' << value << '\n';
    };
  }

 private:
  std::ostream* out_;
  std::mutex mu_;
};

TrialOutcome run_trial(const ExperimentConfig& cfg, std::size_t trial, TelemetryLog& log) {
  TrialOutcome out;
  const auto& sc = cfg.scenario;
  const auto constellation = sc.constellation();

  // Offline phase: once per trial, reused for every P.
  auto data_rng = trial_stream(cfg.seed, StreamTag::MetaData, trial);
  auto init_rng = trial_stream(cfg.seed, StreamTag::Init, trial);
  const NetParams init = init_params(cfg.arch, cfg.init, init_rng);

  const bool need_meta = cfg.has_scheme("maml") || cfg.has_scheme("joint");
  MetaDataset meta;
  if (need_meta) meta = build_meta_dataset(sc, data_rng);

  std::vector<std::pair<std::string, NetParams>> learners;
  if (cfg.has_scheme("fixed")) learners.emplace_back("fixed", init);
  if (cfg.has_scheme("joint")) {
    auto rng = trial_stream(cfg.seed, StreamTag::Joint, trial);
    auto theta = joint_train(meta, cfg.meta.joint_lr, cfg.meta.joint_batch, cfg.meta.joint_iterations,
                             init, rng, log.make(trial, "joint", cfg.telemetry_every));
    out.joint_checksum = params_checksum(theta);
    learners.emplace_back("joint", std::move(theta));
  }
  if (cfg.has_scheme("maml")) {
    auto rng = trial_stream(cfg.seed, StreamTag::Maml, trial);
    auto theta = maml_train(meta, cfg.split(), cfg.meta, init, rng,
                            log.make(trial, "maml", cfg.telemetry_every));
    out.maml_checksum = params_checksum(theta);
    learners.emplace_back("maml", std::move(theta));
  }

  // Target device and its pilots: shared by all schemes and nested across P.
  auto device_rng = trial_stream(cfg.seed, StreamTag::TargetDevice, trial);
  const auto device = sample_device(sc, DeviceRole::meta_test(), device_rng);
  out.target_device = {{"h", {device.h.real(), device.h.imag()}},
                       {"alpha", device.alpha},
                       {"beta", device.beta},
                       {"noise_power", device.noise_power}};
  std::size_t max_pilots = *std::max_element(cfg.p_sweep.begin(), cfg.p_sweep.end());
  if (cfg.grid.enabled && trial == 0) max_pilots = std::max(max_pilots, cfg.grid.adapt_pilots);
  auto pilot_rng = trial_stream(cfg.seed, StreamTag::TargetPilots, trial);
  const Dataset pilots = build_target_dataset(device, sc, max_pilots, pilot_rng);
  const auto test_rng = trial_stream(cfg.seed, StreamTag::TestSymbols, trial);

  out.ideal_formula = formula_ser(cfg, device, DminVariant::Verbatim);
  out.ideal_formula_abs = formula_ser(cfg, device, DminVariant::AbsoluteBranches);
  {
    auto rng = test_rng;
    out.ideal_oracle = ml_oracle_ser(device, constellation, cfg.test_symbols, rng).rate;
  }

  for (std::size_t p : cfg.p_sweep) {
    const std::span<const Sample> target(pilots.data(), p);
    const auto adapt_rng = trial_stream(cfg.seed, StreamTag::Adapt, trial).derive(p);
    for (const auto& [scheme, theta] : learners) {
      const std::uint64_t* recorded =
          scheme == "maml" ? &out.maml_checksum : scheme == "joint" ? &out.joint_checksum : nullptr;
      if (recorded && params_checksum(theta) != *recorded)
        throw std::logic_error("offline " + scheme + " parameters changed between pilot counts");
      auto rng = adapt_rng;
      const auto adapted = target_adapt(theta, target, cfg.meta, rng);
      auto symbols = test_rng;
      const auto est = estimate_ser(adapted, device, constellation, cfg.test_symbols, symbols);
      out.rows.push_back({scheme, p, trial, est.rate, est.std_error});
    }
    if (cfg.has_scheme("ideal")) {
      if (cfg.ideal_source == IdealSource::Formula) {
        out.rows.push_back({"ideal", p, trial, out.ideal_formula, 0.0});
      } else {
        auto symbols = test_rng;
        const auto est = ml_oracle_ser(device, constellation, cfg.test_symbols, symbols);
        out.rows.push_back({"ideal", p, trial, est.rate, est.std_error});
      }
    }
  }

  if (cfg.grid.enabled && trial == 0 && cfg.has_scheme("maml")) {
    const auto it = std::find_if(learners.begin(), learners.end(),
                                 [](const auto& l) { return l.first == "maml"; });
    const NetParams& theta = it->second;
    out.grid_pre = decision_grid(theta, cfg.grid.spec);
    out.symmetry = origin_symmetry(theta, cfg.grid.spec);
    const std::span<const Sample> target(pilots.data(), cfg.grid.adapt_pilots);
    auto rng = trial_stream(cfg.seed, StreamTag::Adapt, trial).derive(cfg.grid.adapt_pilots);
    out.grid_post = decision_grid(target_adapt(theta, target, cfg.meta, rng), cfg.grid.spec);
  }
  return out;
}

double max_row_sum_error(const std::vector<GridRow>& rows) {
  double worst = 0.0;
  for (const auto& r : rows) {
    double s = 0.0;
    for (double p : r.probs) s += p;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

}  // namespace

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows) {
    auto& a = acc[{r.scheme, r.pilots}];
    a.first += r.ser;
    a.second += 1;
  }
  std::vector<AggregateRow> out;
  for (const auto& [key, a] : acc)
    out.push_back({key.first, key.second, a.first / static_cast<double>(a.second), a.second});
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  std::vector<TrialOutcome> outcomes(cfg.trials);
  TelemetryLog log(opts);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t t = next++; t < cfg.trials; t = next++) {
      try {
        outcomes[t] = run_trial(cfg, t, log);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = cfg.trials;
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(opts.threads, 1, cfg.trials);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentResult result;
  double formula = 0.0, formula_abs = 0.0, oracle = 0.0;
  json checksums = json::array();
  json devices = json::array();
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    auto& o = outcomes[t];
    result.rows.insert(result.rows.end(), o.rows.begin(), o.rows.end());
    formula += o.ideal_formula;
    formula_abs += o.ideal_formula_abs;
    oracle += o.ideal_oracle;
    checksums.push_back({{"trial", t}, {"maml", hex(o.maml_checksum)}, {"joint", hex(o.joint_checksum)}});
    devices.push_back(o.target_device);
  }
  std::sort(result.rows.begin(), result.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.scheme, a.pilots, a.trial) < std::tie(b.scheme, b.pilots, b.trial);
  });
  result.aggregates = aggregate(result.rows);

  const double n = static_cast<double>(cfg.trials);
  json& md = result.metadata;
  md["config"] = to_json(cfg);
  md["notes"] = {
      "trials, test_symbols, p_sweep, meta_iterations, joint_iterations and adapt_epochs are "
      "defaults chosen for this tool, not values taken from the reference experiments",
      "meta-test device, pilot noise and test symbols are shared by all schemes within a trial"};
  md["ideal_comparison"] = {{"formula_verbatim_mean", formula / n},
                            {"formula_abs_branches_mean", formula_abs / n},
                            {"ml_oracle_mean", oracle / n}};
  md["offline_checksums"] = checksums;
  md["target_devices"] = devices;
  auto& first = outcomes.front();
  if (first.symmetry) {
    md["grid"] = {{"trial", 0},
                  {"adapt_pilots", cfg.grid.adapt_pilots},
                  {"origin_asymmetry", first.symmetry->asymmetry},
                  {"class_spread", first.symmetry->spread},
                  {"asymmetry_to_spread", first.symmetry->ratio()},
                  {"max_row_sum_error_pre", max_row_sum_error(first.grid_pre)},
                  {"max_row_sum_error_post", max_row_sum_error(first.grid_post)}};
    result.grid_pre = std::move(first.grid_pre);
    result.grid_post = std::move(first.grid_post);
  }
  return result;
}

void write_raw_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  const auto old = os.precision(10);
  os << "scheme,P,trial,ser,std_error\n";
  for (const auto& r : rows)
    os << r.scheme << ',' << r.pilots << ',' << r.trial << ',' << r.ser << ',' << r.std_error << '\n';
  os.precision(old);
}

void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  const auto old = os.precision(10);
  os << "scheme,P,mean_ser,trials\n";
  for (const auto& r : rows) os << r.scheme << ',' << r.pilots << ',' << r.mean_ser << ',' << r.trials << '\n';
  os.precision(old);
}

namespace {

template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  fn(out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

void write_outputs(const std::filesystem::path& dir, const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  write_file(dir / "raw.csv", [&](std::ostream& os) { write_raw_csv(os, result.rows); });
  write_file(dir / "aggregate.csv", [&](std::ostream& os) { write_aggregate_csv(os, result.aggregates); });
  write_file(dir / "metadata.json", [&](std::ostream& os) { os << result.metadata.dump(2) << '\n'; });
  if (!result.grid_pre.empty())
    write_file(dir / "grid_maml_pre.csv", [&](std::ostream& os) { write_grid_csv(os, result.grid_pre); });
  if (!result.grid_post.empty())
    write_file(dir / "grid_maml_post.csv", [&](std::ostream& os) { write_grid_csv(os, result.grid_post); });
}

}  // namespace metademod

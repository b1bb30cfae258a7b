// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "grad_check.hpp"
#include "metademod/experiment.hpp"

using namespace metademod;
using namespace gradcheck;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& title, const std::vector<std::string>& details) {
  std::printf("criterion %d %s  %s\n", id, pass ? "PASS" : "FAIL", title.c_str());
  for (const auto& d : details) std::printf("    %s\n", d.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::size_t threads() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Instance {
  NetParams net;
  Dataset data;
  std::vector<double> u, v;
};

constexpr double kGradStep = 1e-5;
constexpr double kHvpStep = 1e-4;

// Random (net, dataset) pairs. ReLU instances whose difference stencils would
// cross a kink are redrawn: there the loss is not differentiable and central
// differences do not estimate a derivative.
std::vector<Instance> instances(const NetArch& arch, std::size_t n, std::uint64_t seed, std::size_t* redrawn) {
  RngStream r(seed, 0);
  std::vector<Instance> out;
  *redrawn = 0;
  while (out.size() < n) {
    Instance inst{random_net(arch, r), {}, {}, {}};
    inst.data = sample_set(8, arch.num_outputs(), r);
    inst.u = random_vector(inst.net.size(), r);
    inst.v = random_vector(inst.net.size(), r);
    if (!smooth_for_gradient(inst.net, inst.data, kGradStep) ||
        !smooth_along(inst.net, inst.data, inst.v, kHvpStep)) {
      ++*redrawn;
      continue;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

const NetArch kToy{{2, 30, 4}, Activation::Tanh};
const NetArch kReal{{2, 10, 10, 16}, Activation::Relu};

void autodiff() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::vector<std::string> details;
  for (const auto& arch : {kToy, kReal}) {
    double w = 0.0;
    std::size_t redrawn = 0;
    for (const auto& inst : instances(arch, 50, arch.num_params(), &redrawn)) {
      const auto g = loss_grad(inst.net, inst.data).grad;
      w = std::max(w, max_rel_error(g, fd_gradient(inst.net, inst.data, kGradStep)));
    }
    details.push_back(fmt("%s: max coordinate error %.3e (50 instances, step 1e-5, %zu redrawn at kinks)",
                          arch.activation == Activation::Tanh ? "2-30-4 tanh" : "2-10-10-16 relu", w, redrawn));
    worst = std::max(worst, w);
  }
  const double t = seconds_since(t0);
  details.push_back(fmt("runtime %.2f s (limit 30 s)", t));
  report(1, worst <= 1e-6 && t < 30.0, "loss_grad matches central differences", details);
}

void hessian() {
  double worst_l2 = 0.0, worst_sym = 0.0;
  std::vector<std::string> details;
  for (const auto& arch : {kToy, kReal}) {
    double l2 = 0.0, sym = 0.0;
    std::size_t redrawn = 0;
    for (const auto& inst : instances(arch, 50, arch.num_params(), &redrawn)) {
      const auto hv = hvp(inst.net, inst.data, inst.v);
      l2 = std::max(l2, rel_l2_error(hv, fd_hvp(inst.net, inst.data, inst.v, kHvpStep)));
      const double uhv = dot(inst.u, hv);
      const double vhu = dot(inst.v, hvp(inst.net, inst.data, inst.u));
      sym = std::max(sym, std::abs(uhv - vhu) / std::max(1.0, std::abs(uhv)));
    }
    details.push_back(fmt("%s: relative L2 error %.3e, symmetry gap %.3e",
                          arch.activation == Activation::Tanh ? "2-30-4 tanh" : "2-10-10-16 relu", l2, sym));
    worst_l2 = std::max(worst_l2, l2);
    worst_sym = std::max(worst_sym, sym);
  }
  report(2, worst_l2 <= 1e-4 && worst_sym <= 1e-8, "hvp matches differences of gradients", details);
}

std::vector<double> fd_meta_gradient(const NetParams& p, const MetaDataset& meta, Split split, double eta) {
  const double h = 1e-5;
  std::vector<double> g(p.size());
  NetParams q = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p.theta()[i];
    q.theta()[i] = x + h;
    const double up = maml_objective(q, meta, split, eta);
    q.theta()[i] = x - h;
    const double down = maml_objective(q, meta, split, eta);
    q.theta()[i] = x;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

void meta_gradient() {
  const NetArch tiny{{2, 3, 2}, Activation::Tanh};
  RngStream r(3, 3);
  double worst = 0.0, worst_eta0 = 0.0;
  const Split split{1, 1};
  for (int rep = 0; rep < 50; ++rep) {
    const auto net = random_net(tiny, r);
    MetaDataset meta;
    for (int k = 0; k < 2; ++k) {
      meta.per_device.push_back(sample_set(2, 2, r));
      meta.devices.push_back({});
    }
    MetaConfig cfg;
    cfg.eta = 0.3;
    cfg.kappa = 1.0;
    cfg.inner_batch = cfg.outer_batch = 1;
    auto rng = r.derive(rep);
    const auto next = maml_meta_iteration(net, meta, split, cfg, rng).params;
    std::vector<double> update(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) update[i] = net.theta()[i] - next.theta()[i];
    // The train/test assignment inside the iteration is random; compare
    // against every assignment and keep the closest.
    double best = 1e300;
    for (int mask = 0; mask < 4; ++mask) {
      MetaDataset m = meta;
      for (int k = 0; k < 2; ++k)
        if (mask >> k & 1) std::swap(m.per_device[k][0], m.per_device[k][1]);
      best = std::min(best, rel_l2_error(update, fd_meta_gradient(net, m, split, cfg.eta)));
    }
    worst = std::max(worst, best);

    cfg.eta = 0.0;
    auto fo_cfg = cfg;
    fo_cfg.second_order = false;
    auto r1 = r.derive(1000 + rep), r2 = r.derive(1000 + rep);
    const auto so = maml_meta_iteration(net, meta, split, cfg, r1).params;
    const auto fo = maml_meta_iteration(net, meta, split, fo_cfg, r2).params;
    for (std::size_t i = 0; i < net.size(); ++i)
      worst_eta0 = std::max(worst_eta0, std::abs(so.theta()[i] - fo.theta()[i]));
  }
  report(3, worst <= 1e-4 && worst_eta0 <= 1e-12, "second-order meta-gradient",
         {fmt("K=2, %zu parameters, 50 instances: relative error %.3e (limit 1e-4)", tiny.num_params(), worst),
          fmt("eta=0 first/second-order max difference %.3e (limit 1e-12)", worst_eta0)});
}

void toy_baseline() {
  const auto t0 = Clock::now();
  const double snr = std::pow(10.0, 1.5);
  const double formula = ideal_ser_toy(snr);
  const double direct = 1.5 * q_function(std::sqrt(snr / 5.0));
  const auto scenario = ScenarioConfig::toy();
  DeviceChannel dev;
  dev.noise_power = scenario.noise_power();
  dev.noise = scenario.noise;
  RngStream r(4, 4);
  const auto est = ml_oracle_ser(dev, scenario.constellation(), 1000000, r);
  const bool agree = std::abs(est.rate - formula) <= 3 * est.std_error;
  const double t = seconds_since(t0);
  report(4, formula == direct && std::abs(formula - 8.9e-3) < 5e-5 && agree && t < 60,
         "ideal toy baseline",
         {fmt("ideal_ser_toy(15 dB) = %.6e", formula),
          fmt("ML oracle, 1e6 symbols: %.6e +- %.2e (|diff| = %.2f sigma)", est.rate, est.std_error,
              std::abs(est.rate - formula) / est.std_error),
          fmt("runtime %.2f s", t)});
}

void noise_calibration() {
  std::vector<std::string> details;
  bool ok = true;
  const std::pair<const char*, double> expected[] = {{"toy", 0.158114}, {"realistic", 0.0794328}};
  int i = 0;
  for (const auto& s : {ScenarioConfig::toy(), ScenarioConfig::realistic()}) {
    RngStream r(5, i);
    DeviceChannel dev;
    dev.noise_power = s.noise_power();
    dev.noise = s.noise;
    double acc = 0.0;
    const int n = 1000000;
    for (int k = 0; k < n; ++k) acc += std::norm(sample_noise(dev, r));
    const double rel = std::abs(acc / n / s.noise_power() - 1.0);
    const bool nominal = std::abs(s.noise_power() - expected[i].second) < 1e-6;
    ok = ok && rel <= 0.01 && nominal;
    details.push_back(fmt("%s: N_o = %.7f, empirical E|z|^2 = %.7f (relative gap %.2e)", expected[i].first,
                          s.noise_power(), acc / n, rel));
    ++i;
  }
  report(5, ok, "noise calibration", details);
}

struct SchemeStats {
  std::map<std::size_t, double> mean;                         // P -> mean SER
  std::map<std::size_t, std::vector<double>> per_trial;       // P -> SER by trial
};

std::map<std::string, SchemeStats> collect(const ExperimentResult& r) {
  std::map<std::string, SchemeStats> out;
  for (const auto& row : r.rows) out[row.scheme].per_trial[row.pilots].push_back(row.ser);
  for (const auto& a : r.aggregates) out[a.scheme].mean[a.pilots] = a.mean_ser;
  return out;
}

// Mean and standard error of paired per-trial differences a - b.
std::pair<double, double> paired(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m += a[i] - b[i];
  m /= n;
  double v = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) v += (a[i] - b[i] - m) * (a[i] - b[i] - m);
  return {m, std::sqrt(v / (n - 1) / n)};
}

// Smallest swept P whose mean MAML SER is within twice its value at the largest P.
std::size_t pilots_to_floor(const SchemeStats& maml) {
  const double floor = maml.mean.rbegin()->second;
  for (const auto& [p, v] : maml.mean)
    if (v <= 2.0 * floor) return p;
  return maml.mean.rbegin()->first;
}

ExperimentResult run_preset(const std::string& file, double& elapsed) {
  const auto cfg = load_config(fs::path(METADEMOD_CONFIG_DIR) / file);
  const auto t0 = Clock::now();
  auto result = run_experiment(cfg, {threads()});
  elapsed = seconds_since(t0);
  write_outputs(fs::path("acceptance_out") / cfg.name, result);
  return result;
}

std::size_t toy_floor_pilots = 0;

void toy_experiment(const ExperimentResult& r, double elapsed) {
  const auto s = collect(r);
  const auto& maml = s.at("maml");
  const auto& joint = s.at("joint");
  const auto& fixed = s.at("fixed");
  const std::size_t trials = maml.per_trial.begin()->second.size();
  std::vector<std::string> d;

  const double ideal = ideal_ser_toy(std::pow(10.0, 1.5));
  const double at8 = maml.mean.at(8);
  const bool a = at8 <= 3.0 * ideal;
  d.push_back(fmt("(a) %s: MAML SER at P=8 %.4f vs 3 x ideal %.4f", a ? "pass" : "fail", at8, 3 * ideal));

  bool b = true;
  std::string worst_b;
  for (const auto& [p, m] : maml.mean) {
    if (p < 2) continue;
    const bool ok = m < joint.mean.at(p) && m < fixed.mean.at(p);
    if (!ok) worst_b += fmt(" P=%zu", p);
    b = b && ok;
  }
  d.push_back(fmt("(b) %s: MAML below joint and fixed at every P >= 2%s", b ? "pass" : "fail",
                  worst_b.empty() ? "" : (" (violated at" + worst_b + ")").c_str()));

  bool c = true;
  for (const auto& [p, v] : joint.per_trial) {
    if (p > 4) continue;
    const auto [diff, se] = paired(v, fixed.per_trial.at(p));
    const bool ok = diff >= -3.0 * se;
    c = c && ok;
    d.push_back(fmt("(c) P=%zu: joint - fixed = %+.4f, 3 sigma = %.4f -> %s", p, diff, 3 * se, ok ? "ok" : "joint better"));
  }
  d.push_back(fmt("(c) %s", c ? "pass" : "fail"));

  for (const auto& [p, m] : maml.mean)
    d.push_back(fmt("P=%zu  maml %.4f  joint %.4f  fixed %.4f", p, m, joint.mean.at(p), fixed.mean.at(p)));
  toy_floor_pilots = pilots_to_floor(maml);
  d.push_back(fmt("%zu trials, runtime %.0f s on %zu thread(s) (limit 900 s)", trials, elapsed, threads()));
  report(6, a && b && c && trials >= 50 && elapsed <= 900, "toy experiment", d);
}

void realistic_experiment(const ExperimentResult& r, double elapsed) {
  const auto s = collect(r);
  const auto& maml = s.at("maml");
  const auto& joint = s.at("joint");
  const auto& fixed = s.at("fixed");
  const std::size_t trials = maml.per_trial.begin()->second.size();
  std::vector<std::string> d;
  bool ok = true;
  for (std::size_t p : {16, 32}) {
    const bool below = maml.mean.at(p) < joint.mean.at(p) && maml.mean.at(p) < fixed.mean.at(p);
    const auto [dj, sj] = paired(maml.per_trial.at(p), joint.per_trial.at(p));
    const auto [df, sf] = paired(maml.per_trial.at(p), fixed.per_trial.at(p));
    d.push_back(fmt("P=%zu: maml %.4f  joint %.4f  fixed %.4f  (paired maml-joint %+.4f +- %.4f, maml-fixed %+.4f +- %.4f)",
                    p, maml.mean.at(p), joint.mean.at(p), fixed.mean.at(p), dj, sj, df, sf));
    ok = ok && below;
  }
  const std::size_t real_floor = pilots_to_floor(maml);
  const bool slower = real_floor > toy_floor_pilots;
  d.push_back(fmt("pilots to reach 2x the MAML floor: realistic %zu vs toy %zu", real_floor, toy_floor_pilots));
  if (s.count("ideal")) d.push_back(fmt("ideal (ML oracle) %.4f", s.at("ideal").mean.begin()->second));
  d.push_back(fmt("%zu trials, runtime %.0f s on %zu thread(s) (limit 2700 s)", trials, elapsed, threads()));
  report(7, ok && slower && trials >= 50 && elapsed <= 2700, "realistic experiment", d);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism() {
  std::vector<std::string> d;
  bool ok = true;
  for (const std::string file : {"toy.json", "realistic.json"}) {
    auto cfg = load_config(fs::path(METADEMOD_CONFIG_DIR) / file);
    cfg.trials = 3;
    cfg.meta.meta_iterations = 300;
    cfg.meta.joint_iterations = 300;
    const fs::path a = fs::path("acceptance_out") / "determinism" / (cfg.name + "_a");
    const fs::path b = fs::path("acceptance_out") / "determinism" / (cfg.name + "_b");
    write_outputs(a, run_experiment(cfg, {1}));
    write_outputs(b, run_experiment(cfg, {threads() + 2}));
    for (const char* f : {"raw.csv", "aggregate.csv"}) {
      const bool same = file_bytes(a / f) == file_bytes(b / f) && !file_bytes(a / f).empty();
      ok = ok && same;
      d.push_back(fmt("%s %s: %s", cfg.name.c_str(), f, same ? "byte-identical" : "DIFFERS"));
    }
  }
  report(8, ok, "determinism across repeated runs and thread counts", d);
}

void grid_sanity(const ExperimentResult& toy) {
  double worst = 0.0;
  std::size_t rows = 0;
  for (const auto* grid : {&toy.grid_pre, &toy.grid_post})
    for (const auto& row : *grid) {
      double sum = 0.0;
      for (double p : row.probs) sum += p;
      worst = std::max(worst, std::abs(sum - 1.0));
      ++rows;
    }
  const bool reported = toy.metadata.contains("grid") && toy.metadata["grid"].contains("asymmetry_to_spread");
  std::vector<std::string> d{fmt("%zu grid rows, max |sum - 1| = %.2e", rows, worst)};
  if (reported) {
    const auto& g = toy.metadata["grid"];
    d.push_back(fmt("origin symmetry (meta-trained net): asymmetry %.4f, spread %.4f, ratio %.4f",
                    g["origin_asymmetry"].get<double>(), g["class_spread"].get<double>(),
                    g["asymmetry_to_spread"].get<double>()));
  }
  report(9, rows > 0 && worst <= 1e-9 && reported, "decision grid sanity", d);
}

}  // namespace

// Optional arguments select criteria by number; default runs all.
int main(int argc, char** argv) {
  std::vector<bool> want(10, argc == 1);
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > 9) {
      std::fprintf(stderr, "usage: acceptance [criterion ...]  (1-9)\n");
      return 2;
    }
    want[id] = true;
  }
  try {
    if (want[1]) autodiff();
    if (want[2]) hessian();
    if (want[3]) meta_gradient();
    if (want[4]) toy_baseline();
    if (want[5]) noise_calibration();
    if (want[6] || want[7] || want[9]) {
      double toy_time = 0.0, real_time = 0.0;
      const auto toy = run_preset("toy.json", toy_time);
      if (want[6] || want[7]) toy_experiment(toy, toy_time);
      if (want[7]) {
        const auto real = run_preset("realistic.json", real_time);
        realistic_experiment(real, real_time);
      }
      if (want[9]) grid_sanity(toy);
    }
    if (want[8]) determinism();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

#include "metademod/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace metademod {

using nlohmann::json;

ExperimentConfig ExperimentConfig::toy() {
  ExperimentConfig c;
  c.grid.enabled = true;
  c.output_dir = "out/toy";
  return c;
}

ExperimentConfig ExperimentConfig::realistic() {
  ExperimentConfig c;
  c.name = "realistic";
  c.scenario = ScenarioConfig::realistic();
  c.arch = {{2, 10, 10, 16}, Activation::Relu};
  c.init = InitSpec::gaussian();
  c.meta = MetaConfig::realistic();
  c.p_sweep = {2, 4, 8, 16, 24, 32};
  c.ideal_source = IdealSource::Oracle;
  c.grid.enabled = false;
  c.output_dir = "out/realistic";
  return c;
}

bool ExperimentConfig::has_scheme(const std::string& s) const {
  return std::find(schemes.begin(), schemes.end(), s) != schemes.end();
}

void ExperimentConfig::validate() const {
  scenario.validate();
  arch.validate();
  meta.validate();
  if (arch.num_outputs() != scenario.constellation().order())
    throw ConfigError("network output width must equal the constellation order");
  if (p_sweep.empty()) throw ConfigError("p_sweep must not be empty");
  for (auto p : p_sweep)
    if (p == 0) throw ConfigError("p_sweep values must be >= 1");
  if (trials == 0) throw ConfigError("trials must be >= 1");
  if (test_symbols == 0) throw ConfigError("test_symbols must be >= 1");
  for (const auto& s : schemes)
    if (s != "maml" && s != "joint" && s != "fixed" && s != "ideal")
      throw ConfigError("unknown scheme '" + s + "'");
  if (grid.enabled) {
    grid.spec.validate();
    if (grid.adapt_pilots == 0) throw ConfigError("grid.adapt_pilots must be >= 1");
  }
}

namespace {

class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& what) const {
    std::ostringstream os;
    os << "config";
    if (const auto line = line_of(section, key); line > 0) os << " line " << line;
    os << ": " << (section.empty() ? "" : section + ".") << key << ": " << what;
    throw ConfigError(os.str());
  }

  double number(const json& v, const std::string& sec, const std::string& key) const {
    if (!v.is_number()) fail(sec, key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(sec, key, "expected a finite number");
    return d;
  }

  std::size_t count(const json& v, const std::string& sec, const std::string& key) const {
    if (!v.is_number_integer() || v.get<long long>() < 0)
      fail(sec, key, "expected a non-negative integer");
    return v.get<std::size_t>();
  }

  std::size_t positive(const json& v, const std::string& sec, const std::string& key) const {
    const auto n = count(v, sec, key);
    if (n == 0) fail(sec, key, "must be >= 1");
    return n;
  }

  double nonnegative(const json& v, const std::string& sec, const std::string& key) const {
    const double d = number(v, sec, key);
    if (d < 0.0) fail(sec, key, "must be >= 0");
    return d;
  }

  bool boolean(const json& v, const std::string& sec, const std::string& key) const {
    if (!v.is_boolean()) fail(sec, key, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const json& v, const std::string& sec, const std::string& key) const {
    if (!v.is_string()) fail(sec, key, "expected a string");
    return v.get<std::string>();
  }

  std::vector<std::size_t> counts(const json& v, const std::string& sec, const std::string& key) const {
    if (!v.is_array()) fail(sec, key, "expected an array of integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) out.push_back(count(e, sec, key));
    return out;
  }

  std::size_t line_of(const std::string& section, const std::string& key) const {
    std::size_t pos = 0;
    if (!section.empty()) {
      pos = text_.find("\"" + section + "\"");
      if (pos == std::string::npos) return 0;
    }
    pos = text_.find("\"" + key + "\"", pos);
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + pos, '\n'));
  }

 private:
  const std::string& text_;
};

template <class Handler>
void for_each_key(const Reader& r, const json& obj, const std::string& sec, Handler&& h) {
  if (!obj.is_object()) r.fail("", sec, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!h(it.key(), it.value())) r.fail(sec, it.key(), "unknown key");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const Reader r(text);
  if (!root.is_object()) throw ConfigError("config: top level must be an object");

  Scheme scheme = Scheme::PAM4;
  if (root.contains("scenario") && root["scenario"].is_object() && root["scenario"].contains("scheme")) {
    const auto name = r.string(root["scenario"]["scheme"], "scenario", "scheme");
    try {
      scheme = scheme_from_string(name);
    } catch (const std::invalid_argument& e) {
      r.fail("scenario", "scheme", e.what());
    }
  }
  ExperimentConfig c = scheme == Scheme::PAM4 ? ExperimentConfig::toy() : ExperimentConfig::realistic();

  for_each_key(r, root, "", [&](const std::string& key, const json& v) {
    if (key == "name") {
      c.name = r.string(v, "", key);
    } else if (key == "scenario") {
      auto& s = c.scenario;
      for_each_key(r, v, key, [&](const std::string& k, const json& x) {
        if (k == "scheme") return true;
        if (k == "amplitude") s.amplitude = r.number(x, key, k);
        else if (k == "snr_db") s.snr_db = r.number(x, key, k);
        else if (k == "num_devices") s.num_devices = r.positive(x, key, k);
        else if (k == "pilots_per_device") s.pilots_per_device = r.positive(x, key, k);
        else if (k == "n_train") s.n_train = r.positive(x, key, k);
        else if (k == "n_test") s.n_test = r.positive(x, key, k);
        else if (k == "alpha") s.alpha = r.number(x, key, k);
        else if (k == "beta_min") s.beta_min = r.nonnegative(x, key, k);
        else if (k == "beta_max") s.beta_max = r.nonnegative(x, key, k);
        else if (k == "noise") {
          const auto n = r.string(x, key, k);
          if (n == "real") s.noise = NoiseModel::Real;
          else if (n == "complex") s.noise = NoiseModel::Complex;
          else r.fail(key, k, "expected \"real\" or \"complex\"");
        } else return false;
        return true;
      });
    } else if (key == "network") {
      for_each_key(r, v, key, [&](const std::string& k, const json& x) {
        if (k == "layer_sizes") {
          c.arch.layer_sizes = r.counts(x, key, k);
        } else if (k == "activation") {
          try {
            c.arch.activation = activation_from_string(r.string(x, key, k));
          } catch (const std::invalid_argument& e) {
            r.fail(key, k, e.what());
          }
        } else if (k == "init") {
          for_each_key(r, x, "init", [&](const std::string& ik, const json& ix) {
            if (ik == "mode") {
              const auto mode = r.string(ix, "init", ik);
              if (mode == "constant") c.init.mode = InitSpec::Constant;
              else if (mode == "gaussian") c.init.mode = InitSpec::Gaussian;
              else r.fail("init", ik, "expected \"constant\" or \"gaussian\"");
            } else if (ik == "value") {
              c.init.value = r.number(ix, "init", ik);
            } else if (ik == "scale") {
              c.init.scale = r.number(ix, "init", ik);
            } else {
              return false;
            }
            return true;
          });
        } else {
          return false;
        }
        return true;
      });
    } else if (key == "meta") {
      auto& m = c.meta;
      for_each_key(r, v, key, [&](const std::string& k, const json& x) {
        if (k == "eta") m.eta = r.nonnegative(x, key, k);
        else if (k == "kappa") m.kappa = r.nonnegative(x, key, k);
        else if (k == "inner_batch") m.inner_batch = r.positive(x, key, k);
        else if (k == "outer_batch") m.outer_batch = r.positive(x, key, k);
        else if (k == "meta_iterations") m.meta_iterations = r.count(x, key, k);
        else if (k == "inner_steps") m.inner_steps = r.count(x, key, k);
        else if (k == "second_order") m.second_order = r.boolean(x, key, k);
        else if (k == "adapt_batch") m.adapt_batch = r.positive(x, key, k);
        else if (k == "adapt_steps") m.adapt_steps = x.is_null() ? std::nullopt : std::optional(r.count(x, key, k));
        else if (k == "adapt_epochs") m.adapt_epochs = r.count(x, key, k);
        else if (k == "adapt_small_batch_fallback") m.adapt_small_batch_fallback = r.boolean(x, key, k);
        else if (k == "joint_lr") m.joint_lr = r.nonnegative(x, key, k);
        else if (k == "joint_batch") m.joint_batch = r.positive(x, key, k);
        else if (k == "joint_iterations") m.joint_iterations = r.count(x, key, k);
        else return false;
        return true;
      });
    } else if (key == "experiment") {
      for_each_key(r, v, key, [&](const std::string& k, const json& x) {
        if (k == "schemes") {
          if (!x.is_array()) r.fail(key, k, "expected an array of scheme names");
          c.schemes.clear();
          for (const auto& e : x) {
            auto name = r.string(e, key, k);
            if (name != "maml" && name != "joint" && name != "fixed" && name != "ideal")
              r.fail(key, k, "unknown scheme '" + name + "'");
            c.schemes.push_back(std::move(name));
          }
        } else if (k == "p_sweep") {
          c.p_sweep = r.counts(x, key, k);
          if (c.p_sweep.empty()) r.fail(key, k, "must not be empty");
          for (auto p : c.p_sweep)
            if (p == 0) r.fail(key, k, "values must be >= 1");
        } else if (k == "trials") {
          c.trials = r.positive(x, key, k);
        } else if (k == "test_symbols") {
          c.test_symbols = r.positive(x, key, k);
        } else if (k == "seed") {
          c.seed = static_cast<std::uint64_t>(r.count(x, key, k));
        } else if (k == "ideal_source") {
          const auto s = r.string(x, key, k);
          if (s == "formula") c.ideal_source = IdealSource::Formula;
          else if (s == "oracle") c.ideal_source = IdealSource::Oracle;
          else r.fail(key, k, "expected \"formula\" or \"oracle\"");
        } else if (k == "telemetry_every") {
          c.telemetry_every = r.count(x, key, k);
        } else {
          return false;
        }
        return true;
      });
    } else if (key == "grid") {
      auto& g = c.grid;
      for_each_key(r, v, key, [&](const std::string& k, const json& x) {
        if (k == "enabled") g.enabled = r.boolean(x, key, k);
        else if (k == "re_min") g.spec.re_min = r.number(x, key, k);
        else if (k == "re_max") g.spec.re_max = r.number(x, key, k);
        else if (k == "im_min") g.spec.im_min = r.number(x, key, k);
        else if (k == "im_max") g.spec.im_max = r.number(x, key, k);
        else if (k == "re_points" || k == "im_points") {
          const auto n = r.count(x, key, k);
          if (n < 2) r.fail(key, k, "must be >= 2");
          (k == "re_points" ? g.spec.re_points : g.spec.im_points) = n;
        }
        else if (k == "adapt_pilots") g.adapt_pilots = r.positive(x, key, k);
        else return false;
        return true;
      });
    } else if (key == "output") {
      for_each_key(r, v, key, [&](const std::string& k, const json& x) {
        if (k != "dir") return false;
        c.output_dir = r.string(x, key, k);
        return true;
      });
    } else {
      return false;
    }
    return true;
  });

  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  const auto& s = c.scenario;
  j["scenario"] = {{"scheme", to_string(s.scheme)}, {"amplitude", s.amplitude},
                   {"snr_db", s.snr_db},             {"num_devices", s.num_devices},
                   {"pilots_per_device", s.pilots_per_device},
                   {"n_train", s.n_train},           {"n_test", s.n_test},
                   {"alpha", s.alpha},               {"beta_min", s.beta_min},
                   {"beta_max", s.beta_max},
                   {"noise", s.noise == NoiseModel::Real ? "real" : "complex"}};
  json init = {{"mode", c.init.mode == InitSpec::Constant ? "constant" : "gaussian"}};
  if (c.init.mode == InitSpec::Constant) init["value"] = c.init.value;
  else init["scale"] = c.init.scale;
  j["network"] = {{"layer_sizes", c.arch.layer_sizes},
                  {"activation", to_string(c.arch.activation)},
                  {"init", init}};
  const auto& m = c.meta;
  j["meta"] = {{"eta", m.eta},
               {"kappa", m.kappa},
               {"inner_batch", m.inner_batch},
               {"outer_batch", m.outer_batch},
               {"meta_iterations", m.meta_iterations},
               {"inner_steps", m.inner_steps},
               {"second_order", m.second_order},
               {"adapt_batch", m.adapt_batch},
               {"adapt_steps", m.adapt_steps ? json(*m.adapt_steps) : json(nullptr)},
               {"adapt_epochs", m.adapt_epochs},
               {"adapt_small_batch_fallback", m.adapt_small_batch_fallback},
               {"joint_lr", m.joint_lr},
               {"joint_batch", m.joint_batch},
               {"joint_iterations", m.joint_iterations}};
  j["experiment"] = {{"schemes", c.schemes},
                     {"p_sweep", c.p_sweep},
                     {"trials", c.trials},
                     {"test_symbols", c.test_symbols},
                     {"seed", c.seed},
                     {"ideal_source", c.ideal_source == IdealSource::Formula ? "formula" : "oracle"},
                     {"telemetry_every", c.telemetry_every}};
  const auto& g = c.grid;
  j["grid"] = {{"enabled", g.enabled},
               {"re_min", g.spec.re_min},
               {"re_max", g.spec.re_max},
               {"im_min", g.spec.im_min},
               {"im_max", g.spec.im_max},
               {"re_points", g.spec.re_points},
               {"im_points", g.spec.im_points},
               {"adapt_pilots", g.adapt_pilots}};
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

json checkpoint_json(const NetParams& params) {
  json j;
  j["format"] = "metademod-checkpoint";
  j["version"] = 1;
  j["layer_sizes"] = params.arch().layer_sizes;
  j["activation"] = to_string(params.arch().activation);
  j["theta"] = std::vector<double>(params.theta().begin(), params.theta().end());
  return j;
}

NetParams checkpoint_from_json(const json& j) {
  try {
    if (j.at("format") != "metademod-checkpoint" || j.at("version") != 1)
      throw std::runtime_error("unrecognized checkpoint format");
    NetArch arch{j.at("layer_sizes").get<std::vector<std::size_t>>(),
                 activation_from_string(j.at("activation").get<std::string>())};
    return NetParams(arch, j.at("theta").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("corrupt checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const NetParams& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_json(params).dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

NetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": corrupt checkpoint: " + e.what());
  }
  return checkpoint_from_json(j);
}

std::uint64_t params_checksum(const NetParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double d : params.theta()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &d, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace metademod

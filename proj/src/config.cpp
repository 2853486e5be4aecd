#include <hsfuse/config.hpp>

#include <fstream>
#include <sstream>

namespace hsfuse::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: " + key + " expects a boolean, got '" + v + "'");
}

std::vector<Index> parse_widths(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    out.push_back(static_cast<Index>(parse_long(key, trim(tok))));
  }
  if (out.empty()) throw ConfigError("config: " + key + " must list at least one width");
  return out;
}

std::string widths_str(const std::vector<Index>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(w[i]);
  }
  return s;
}

}  // namespace

KvMap read_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  KvMap kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

void apply_overrides(KvMap& kv, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "': expected key=value");
    kv[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
  }
}

train::RunConfig parse_run_config(const KvMap& kv) {
  train::RunConfig cfg;
  for (const auto& [k, v] : kv) {
    if (k == "lambda") cfg.lambda = parse_double(k, v);
    else if (k == "mu") cfg.mu = parse_double(k, v);
    else if (k == "hsi_iters") cfg.hsi_iters = parse_long(k, v);
    else if (k == "msi_iters") cfg.msi_iters = parse_long(k, v);
    else if (k == "angle_period") cfg.angle_period = parse_long(k, v);
    else if (k == "optimizer") cfg.optimizer = v;
    else if (k == "step_size") cfg.step_size = parse_double(k, v);
    else if (k == "seed") cfg.seed = static_cast<std::uint64_t>(parse_long(k, v));
    else if (k == "log_every") cfg.log_every = parse_long(k, v);
    else if (k == "early_stop_tol") cfg.early_stop_tol = parse_double(k, v);
    else if (k == "early_stop_window") cfg.early_stop_window = parse_long(k, v);
    else if (k == "c") cfg.c = static_cast<Index>(parse_long(k, v));
    else if (k == "hsi_widths") cfg.hsi_widths = parse_widths(k, v);
    else if (k == "msi_widths") cfg.msi_widths = parse_widths(k, v);
    else if (k == "decoder_widths") cfg.decoder_widths = parse_widths(k, v);
    else if (k == "hidden_activation") cfg.hidden_activation = v;
    else if (k == "use_stick_break") cfg.use_stick_break = parse_bool(k, v);
    else if (k == "use_angle") cfg.use_angle = parse_bool(k, v);
    else throw ConfigError("config: unknown key '" + k + "'");
  }
  cfg.validate();
  return cfg;
}

data::SynthSpec parse_synth_spec(const KvMap& kv) {
  data::SynthSpec spec;
  for (const auto& [k, v] : kv) {
    if (k == "width") spec.width = static_cast<Index>(parse_long(k, v));
    else if (k == "height") spec.height = static_cast<Index>(parse_long(k, v));
    else if (k == "bands") spec.bands = static_cast<Index>(parse_long(k, v));
    else if (k == "ratio") spec.ratio = static_cast<Index>(parse_long(k, v));
    else if (k == "msi_bands") spec.msi_bands = static_cast<Index>(parse_long(k, v));
    else if (k == "c_true") spec.c_true = static_cast<Index>(parse_long(k, v));
    else if (k == "sparsity") spec.sparsity = static_cast<Index>(parse_long(k, v));
    else if (k == "smoothness") spec.smoothness = static_cast<Index>(parse_long(k, v));
    else if (k == "concentration") spec.concentration = parse_double(k, v);
    else if (k == "seed") spec.seed = static_cast<std::uint64_t>(parse_long(k, v));
    else throw ConfigError("synth spec: unknown key '" + k + "'");
  }
  return spec;
}

std::vector<std::pair<std::string, std::string>> describe(const train::RunConfig& cfg) {
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  return {
      {"angle_period", std::to_string(cfg.angle_period)},
      {"c", std::to_string(cfg.c)},
      {"decoder_widths", widths_str(cfg.decoder_widths)},
      {"early_stop_tol", fmt(cfg.early_stop_tol)},
      {"early_stop_window", std::to_string(cfg.early_stop_window)},
      {"hidden_activation", cfg.hidden_activation},
      {"hsi_iters", std::to_string(cfg.hsi_iters)},
      {"hsi_widths", widths_str(cfg.hsi_widths)},
      {"lambda", fmt(cfg.lambda)},
      {"log_every", std::to_string(cfg.log_every)},
      {"msi_iters", std::to_string(cfg.msi_iters)},
      {"msi_widths", widths_str(cfg.msi_widths)},
      {"mu", fmt(cfg.mu)},
      {"optimizer", cfg.optimizer},
      {"seed", std::to_string(cfg.seed)},
      {"step_size", fmt(cfg.step_size)},
      {"use_angle", cfg.use_angle ? "true" : "false"},
      {"use_stick_break", cfg.use_stick_break ? "true" : "false"},
  };
}

std::vector<std::pair<std::string, std::string>> describe(const data::SynthSpec& spec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", spec.concentration);
  return {
      {"bands", std::to_string(spec.bands)},
      {"c_true", std::to_string(spec.c_true)},
      {"concentration", std::string(buf)},
      {"height", std::to_string(spec.height)},
      {"msi_bands", std::to_string(spec.msi_bands)},
      {"ratio", std::to_string(spec.ratio)},
      {"seed", std::to_string(spec.seed)},
      {"smoothness", std::to_string(spec.smoothness)},
      {"sparsity", std::to_string(spec.sparsity)},
      {"width", std::to_string(spec.width)},
  };
}

}  // namespace hsfuse::config

#include "sig/config.hpp"

#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "sig/errors.hpp"

namespace sig {

namespace {

// Key, default. Every accepted key is listed here.
const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d = {
      {"data.actions", "14"},
      {"train.lambda_sup", "0"},
      {"train.epochs", "100"},
      {"train.batch_size", "32"},
      {"train.d_steps", "1"},
      {"train.seed", "1"},
      {"train.adversarial_on", "true"},
      {"train.eval_interval", "10"},
      {"train.save_interval", "0"},
      {"train.eval_samples", "0"},
      {"train.lr_g", "1e-4"},
      {"train.lr_d", "4e-4"},
      {"train.beta1", "0.5"},
      {"train.beta2", "0.999"},
      {"train.adam_eps", "1e-8"},
      {"train.plots", "false"},
      {"disc.kind", "local"},
      {"disc.chunks", ""},
      {"disc.d_h", "64"},
      {"disc.d_embed", "64"},
      {"disc.d_phi", "128"},
      {"disc.d_psi", "128"},
      {"disc.lambda_inter", "1.0"},
      {"disc.spectral", "true"},
      {"disc.leaky_slope", "0.2"},
      {"disc.indiv_on", "true"},
      {"disc.inter_on", "true"},
      {"gen.d_h", "64"},
      {"gen.d_embed", "64"},
      {"gen.temperature", "0.1"},
      {"gen.deep_width", "128"},
      {"gen.layer_norm", "true"},
      {"gen.spectral", "true"},
      {"gen.leaky_slope", "0.2"},
      {"gen.sample", "false"},
      {"synth.actions", "14"},
      {"synth.persons", "3"},
      {"synth.personas", "3"},
      {"synth.coupling", "0.3"},
      {"synth.dwell", "0"},
      {"synth.stickiness", "0.93"},
      {"synth.burn_in", "20"},
      {"synth.samples", "600"},
      {"synth.t_obs", "60"},
      {"synth.horizon", "40"},
      {"synth.seed", "1"},
      {"metrics.d_h", "64"},
      {"metrics.d_embed", "64"},
      {"metrics.lr", "1e-3"},
      {"metrics.batch_size", "64"},
      {"metrics.max_epochs", "2000"},
      {"metrics.patience", "50"},
      {"metrics.min_delta", "1e-4"},
      {"metrics.val_fraction", "0.1"},
      {"metrics.seed", "7"},
      {"preprocess.fps", "20"},
      {"preprocess.seg_seconds", "3"},
      {"preprocess.horizon", "40"},
      {"preprocess.occlusion_max", "0.10"},
      {"preprocess.coverage", "0.9"},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

}  // namespace

Config::Config() : values_(defaults()) {}

void Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  parse(in, path.string());
}

void Config::parse(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(n, source + ": expected 'key = value'");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
  explicit_.insert(key);
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::apply_env_seed() {
  const char* env = std::getenv("SIG_SEED");
  if (env == nullptr || *env == '\0') return;
  for (const char* key : {"train.seed", "synth.seed", "metrics.seed"}) {
    if (is_set(key)) continue;
    values_[key] = env;
    (void)uint(key);  // validates the value
  }
}

std::string Config::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int Config::integer(const std::string& key) const {
  const std::string v = str(key);
  std::size_t pos = 0;
  try {
    const long r = std::stol(v, &pos);
    if (pos == v.size() && r >= std::numeric_limits<int>::min() && r <= std::numeric_limits<int>::max()) {
      return static_cast<int>(r);
    }
  } catch (const std::exception&) {
  }
  bad_value(key, v, "an integer");
}

std::uint64_t Config::uint(const std::string& key) const {
  const std::string v = str(key);
  std::size_t pos = 0;
  try {
    if (!v.empty() && v[0] != '-') {
      const unsigned long long r = std::stoull(v, &pos);
      if (pos == v.size()) return r;
    }
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a non-negative integer");
}

double Config::real(const std::string& key) const {
  const std::string v = str(key);
  std::size_t pos = 0;
  try {
    const double r = std::stod(v, &pos);
    if (pos == v.size()) return r;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

bool Config::flag(const std::string& key) const {
  const std::string v = str(key);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<int> Config::int_list(const std::string& key) const {
  std::string v = str(key);
  for (char& ch : v) {
    if (ch == '[' || ch == ']' || ch == ',') ch = ' ';
  }
  std::istringstream in(v);
  std::vector<int> out;
  std::string tok;
  while (in >> tok) {
    std::size_t pos = 0;
    try {
      out.push_back(std::stoi(tok, &pos));
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size()) bad_value(key, str(key), "a list of integers");
  }
  return out;
}

void Config::dump(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
}

// ---------------------------------------------------------------------------

GeneratorConfig generator_config(const Config& c, int num_actions) {
  GeneratorConfig g;
  g.num_actions = num_actions;
  g.d_h = c.integer("gen.d_h");
  g.noise_dim = g.d_h;
  g.d_embed = c.integer("gen.d_embed");
  g.temperature = c.real("gen.temperature");
  g.deep_width = c.integer("gen.deep_width");
  g.layer_norm = c.flag("gen.layer_norm");
  g.spectral = c.flag("gen.spectral");
  g.leaky_slope = c.real("gen.leaky_slope");
  g.sample = c.flag("gen.sample");
  g.validate();
  return g;
}

DiscriminatorConfig discriminator_config(const Config& c, int num_actions, int horizon) {
  DiscriminatorConfig d;
  d.num_actions = num_actions;
  d.horizon = horizon;
  d.kind = parse_disc_kind(c.str("disc.kind"));
  d.chunks = c.int_list("disc.chunks");
  d.d_h = c.integer("disc.d_h");
  d.d_embed = c.integer("disc.d_embed");
  d.d_phi = c.integer("disc.d_phi");
  d.d_psi = c.integer("disc.d_psi");
  d.lambda_inter = c.real("disc.lambda_inter");
  d.spectral = c.flag("disc.spectral");
  d.leaky_slope = c.real("disc.leaky_slope");
  d.indiv_on = c.flag("disc.indiv_on");
  d.inter_on = c.flag("disc.inter_on");
  if (!d.inter_on) d.lambda_inter = 0.0;
  d.validate();
  return d;
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.lambda_sup = c.real("train.lambda_sup");
  t.epochs = c.integer("train.epochs");
  t.batch_size = c.integer("train.batch_size");
  t.d_steps = c.integer("train.d_steps");
  t.seed = c.uint("train.seed");
  t.adversarial_on = c.flag("train.adversarial_on");
  t.eval_interval = c.integer("train.eval_interval");
  t.save_interval = c.integer("train.save_interval");
  t.eval_samples = c.integer("train.eval_samples");
  t.adam_g = {c.real("train.lr_g"), c.real("train.beta1"), c.real("train.beta2"), c.real("train.adam_eps")};
  t.adam_d = {c.real("train.lr_d"), c.real("train.beta1"), c.real("train.beta2"), c.real("train.adam_eps")};
  t.validate();
  return t;
}

synth::SynthConfig synth_config(const Config& c) {
  synth::SynthConfig s;
  s.actions = c.integer("synth.actions");
  s.persons = c.integer("synth.persons");
  s.personas = c.integer("synth.personas");
  s.coupling = c.real("synth.coupling");
  s.dwell = c.real("synth.dwell");
  s.stickiness = c.real("synth.stickiness");
  s.burn_in = c.integer("synth.burn_in");
  s.seed = c.uint("synth.seed");
  s.validate();
  return s;
}

metrics::InceptionConfig inception_config(const Config& c, int num_actions) {
  metrics::InceptionConfig m;
  m.num_actions = num_actions;
  m.d_h = c.integer("metrics.d_h");
  m.d_embed = c.integer("metrics.d_embed");
  return m;
}

metrics::InceptionTrainConfig inception_train_config(const Config& c) {
  metrics::InceptionTrainConfig t;
  t.lr = c.real("metrics.lr");
  t.batch_size = c.integer("metrics.batch_size");
  t.max_epochs = c.integer("metrics.max_epochs");
  t.patience = c.integer("metrics.patience");
  t.min_delta = c.real("metrics.min_delta");
  t.val_fraction = c.real("metrics.val_fraction");
  t.seed = c.uint("metrics.seed");
  if (!(t.lr > 0) || t.batch_size < 1 || t.max_epochs < 1 || t.patience < 1 || !(t.val_fraction > 0 && t.val_fraction < 1)) {
    throw ConfigError("metrics: invalid inception training settings");
  }
  return t;
}

actions::SegmentConfig segment_config(const Config& c) {
  actions::SegmentConfig s;
  s.fps = c.real("preprocess.fps");
  s.seg_seconds = c.real("preprocess.seg_seconds");
  s.horizon = c.integer("preprocess.horizon");
  s.occlusion_max = c.real("preprocess.occlusion_max");
  if (!(s.fps > 0) || !(s.seg_seconds > 0) || s.horizon < 1 || !(s.occlusion_max >= 0 && s.occlusion_max <= 1)) {
    throw ConfigError("preprocess: invalid segmentation settings");
  }
  return s;
}

}  // namespace sig

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sig/actionspace.hpp"
#include "sig/discriminator.hpp"
#include "sig/generator.hpp"
#include "sig/metrics.hpp"
#include "sig/synthdata.hpp"
#include "sig/training.hpp"

namespace sig {

/// Flat `key = value` settings with dotted sections (train., disc., gen.,
/// synth., metrics., preprocess., data.). Every key has a default; unknown
/// keys are rejected. `#` starts a comment.
class Config {
 public:
  Config();

  /// Merges a file; throws ParseError for malformed lines and ConfigError
  /// (naming file and key) for unknown keys.
  void load(const std::filesystem::path& path);
  void parse(std::istream& in, const std::string& source);
  /// Single override; `assignment` may also be "key=value".
  void set(const std::string& key, const std::string& value);
  void set(const std::string& assignment);

  /// Seeds not set explicitly take the value of SIG_SEED when present.
  void apply_env_seed();

  bool is_set(const std::string& key) const { return explicit_.count(key) != 0; }
  std::string str(const std::string& key) const;
  int integer(const std::string& key) const;
  std::uint64_t uint(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;

  /// Resolved settings, one `key = value` per line in key order.
  void dump(std::ostream& out) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

GeneratorConfig generator_config(const Config& c, int num_actions);
DiscriminatorConfig discriminator_config(const Config& c, int num_actions, int horizon);
TrainConfig train_config(const Config& c);
synth::SynthConfig synth_config(const Config& c);
metrics::InceptionConfig inception_config(const Config& c, int num_actions);
metrics::InceptionTrainConfig inception_train_config(const Config& c);
actions::SegmentConfig segment_config(const Config& c);

}  // namespace sig

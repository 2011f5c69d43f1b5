#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "skillrouter/bootstrap/bootstrap.hpp"
#include "skillrouter/corpus/split.hpp"
#include "skillrouter/synth/world.hpp"
#include "skillrouter/training/train.hpp"
#include "skillrouter/weak/pipeline.hpp"

namespace skillrouter::io {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EvalConfig {
  std::vector<int> top_n = {1, 3, 5};
  int attention_min_enabled = 4;  // attention analysis keeps users with more enabled skills
  double binomial_p0 = 0.4;
  double binomial_confidence = 0.95;
};

// Flat dotted-key configuration covering every stage. Files hold one
// key=value per line with '#' comments. Unknown keys and malformed values
// are rejected. Precedence: command-line overrides, then SKILLROUTER_SEED,
// then the file, then built-in defaults.
class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  // Applies "key=value" lines; errors name the file and line.
  void merge_file(const std::filesystem::path& path);
  void merge_text(const std::string& text, const std::string& source);
  // Applies SKILLROUTER_SEED when set.
  void apply_env();

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t seed() const;

  std::vector<std::string> keys() const;
  nlohmann::ordered_json to_json() const;
  std::string to_text() const;

  synth::WorldConfig world() const;
  weak::FilterConfig filter() const;  // shared intents come from the input file
  corpus::SplitRatios split() const;
  training::TrainConfig train() const;
  bootstrap::ExpandConfig expand() const;
  EvalConfig eval() const;

 private:
  std::map<std::string, std::string> values_;
};

// Provenance block embedded in every output: the full configuration, seed,
// command line and digests of the inputs read.
nlohmann::ordered_json provenance(const std::string& command, const RunConfig& cfg,
                                  const std::vector<std::filesystem::path>& inputs,
                                  const std::vector<std::string>& argv = {});

}  // namespace skillrouter::io

#include "skillrouter/io/run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "skillrouter/io/checkpoint.hpp"

namespace skillrouter::io {

namespace {

enum class Kind { kInt, kUInt, kDouble, kBool, kEnum, kIntList };

struct KeySpec {
  Kind kind;
  std::vector<std::string> options;  // kEnum only
};

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <class T>
std::string fmt(T v) requires std::is_integral_v<T> { return std::to_string(v); }

template <class T>
bool parse_number(const std::string& s, T& out) {
  if (s.empty()) return false;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && end == s.data() + s.size();
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int v = 0;
    if (!parse_number(item, v)) throw ConfigError("bad integer list '" + s + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Table {
  std::map<std::string, KeySpec> specs;
  std::map<std::string, std::string> defaults;

  void add(const std::string& key, Kind kind, std::string def, std::vector<std::string> options = {}) {
    specs[key] = {kind, std::move(options)};
    defaults[key] = std::move(def);
  }
};

const Table& table() {
  static const Table t = [] {
    Table t;
    const synth::WorldConfig w;
    const weak::FilterConfig f;
    const corpus::SplitRatios sp;
    const training::TrainConfig tr;
    const bootstrap::ExpandConfig ex;
    const EvalConfig ev;
    t.add("seed", Kind::kUInt, "1");
    t.add("synth.num_skills", Kind::kInt, fmt(w.num_skills));
    t.add("synth.num_categories", Kind::kInt, fmt(w.num_categories));
    t.add("synth.overlap_factor", Kind::kDouble, fmt(w.overlap_factor));
    t.add("synth.num_users", Kind::kInt, fmt(w.num_users));
    t.add("synth.enablement_mean", Kind::kDouble, fmt(w.enablement_mean));
    t.add("synth.utterances_per_skill", Kind::kInt, fmt(w.utterances_per_skill));
    t.add("synth.char_corruption_rate", Kind::kDouble, fmt(w.char_corruption_rate));
    t.add("synth.short_command_rate", Kind::kDouble, fmt(w.short_command_rate));
    t.add("synth.shared_intent_rate", Kind::kDouble, fmt(w.shared_intent_rate));
    t.add("synth.catch_all_rate", Kind::kDouble, fmt(w.catch_all_rate));
    t.add("synth.no_pattern_rate", Kind::kDouble, fmt(w.no_pattern_rate));
    t.add("synth.preference_strength", Kind::kDouble, fmt(w.preference_strength));
    t.add("synth.commands_per_category", Kind::kInt, fmt(w.commands_per_category));
    t.add("synth.new_skills", Kind::kInt, fmt(w.new_skills));
    t.add("synth.new_train_per_skill", Kind::kInt, fmt(w.new_train_per_skill));
    t.add("synth.new_test_per_skill", Kind::kInt, fmt(w.new_test_per_skill));
    t.add("synth.new_novel_word_rate", Kind::kDouble, fmt(w.new_novel_word_rate));
    t.add("synth.new_skill_adoption", Kind::kDouble, fmt(w.new_skill_adoption));
    t.add("weak.min_tokens", Kind::kInt, fmt(f.min_tokens));
    t.add("weak.min_count", Kind::kInt, fmt(f.min_count));
    t.add("weak.catch_all_policy", Kind::kEnum, "registry", {"registry", "heuristic"});
    t.add("weak.share_threshold", Kind::kDouble, fmt(f.share_threshold));
    t.add("weak.median_multiple", Kind::kDouble, fmt(f.median_multiple));
    t.add("split.train", Kind::kDouble, fmt(sp.train));
    t.add("split.validation", Kind::kDouble, fmt(sp.validation));
    t.add("split.test", Kind::kDouble, fmt(sp.test));
    t.add("model.variant", Kind::kEnum, personalization::to_string(tr.variant), {"binary", "multiclass", "multitask"});
    t.add("model.mode", Kind::kEnum, personalization::to_string(tr.mode),
          {"none", "one_bit", "attention", "one_bit_and_attention"});
    t.add("model.char_emb_dim", Kind::kInt, fmt(tr.encoder.char_emb_dim));
    t.add("model.char_hidden", Kind::kInt, fmt(tr.encoder.char_hidden));
    t.add("model.word_emb_dim", Kind::kInt, fmt(tr.encoder.word_emb_dim));
    t.add("model.word_hidden", Kind::kInt, fmt(tr.encoder.word_hidden));
    t.add("model.embedding_dim", Kind::kInt, fmt(tr.embedding_dim));
    t.add("train.min_word_count", Kind::kInt, fmt(tr.min_word_count));
    t.add("train.epochs", Kind::kInt, fmt(tr.epochs));
    t.add("train.batch_size", Kind::kInt, fmt(tr.batch_size));
    t.add("train.lr", Kind::kDouble, fmt(tr.adam.lr));
    t.add("train.beta1", Kind::kDouble, fmt(tr.adam.beta1));
    t.add("train.beta2", Kind::kDouble, fmt(tr.adam.beta2));
    t.add("train.eps", Kind::kDouble, fmt(tr.adam.eps));
    t.add("train.negatives", Kind::kEnum, "exact", {"exact", "sampled"});
    t.add("train.sampled_q", Kind::kInt, fmt(tr.sampled_q));
    t.add("train.binary_negative_ratio", Kind::kInt, fmt(tr.binary_negative_ratio));
    t.add("train.dropout", Kind::kDouble, fmt(tr.dropout));
    t.add("expand.ridge", Kind::kDouble, fmt(ex.ridge));
    t.add("expand.old_sample", Kind::kInt, fmt(ex.old_sample));
    t.add("expand.freeze_new_embedding", Kind::kBool, fmt(ex.freeze_new_embedding));
    t.add("expand.coverage_warning", Kind::kDouble, fmt(ex.coverage_warning));
    t.add("eval.top_n", Kind::kIntList, "1,3,5");
    t.add("eval.attention_min_enabled", Kind::kInt, fmt(ev.attention_min_enabled));
    t.add("eval.binomial_p0", Kind::kDouble, fmt(ev.binomial_p0));
    t.add("eval.binomial_confidence", Kind::kDouble, fmt(ev.binomial_confidence));
    return t;
  }();
  return t;
}

void check_value(const std::string& key, const KeySpec& spec, const std::string& value) {
  auto bad = [&](const std::string& what) { throw ConfigError(key + ": expected " + what + ", got '" + value + "'"); };
  switch (spec.kind) {
    case Kind::kInt: {
      long long v = 0;
      if (!parse_number(value, v) || v < INT32_MIN || v > INT32_MAX) bad("an integer");
      break;
    }
    case Kind::kUInt: {
      std::uint64_t v = 0;
      if (!parse_number(value, v)) bad("a non-negative integer");
      break;
    }
    case Kind::kDouble: {
      double v = 0;
      if (!parse_number(value, v)) bad("a number");
      break;
    }
    case Kind::kBool:
      if (value != "true" && value != "false") bad("true or false");
      break;
    case Kind::kEnum: {
      if (std::find(spec.options.begin(), spec.options.end(), value) == spec.options.end()) {
        std::string opts;
        for (const auto& o : spec.options) opts += (opts.empty() ? "" : "|") + o;
        bad(opts);
      }
      break;
    }
    case Kind::kIntList:
      parse_int_list(value);
      break;
  }
}

}  // namespace

RunConfig::RunConfig() : values_(table().defaults) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = table().specs.find(key);
  if (it == table().specs.end()) throw ConfigError("unknown config key '" + key + "'");
  check_value(key, it->second, value);
  values_[key] = value;
}

void RunConfig::merge_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(n) + ": expected key=value");
    try {
      set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

void RunConfig::apply_env() {
  if (const char* s = std::getenv("SKILLROUTER_SEED"); s != nullptr && *s != '\0') {
    try {
      set("seed", s);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("SKILLROUTER_SEED: ") + e.what());
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  int v = 0;
  parse_number(get(key), v);
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0;
  parse_number(get(key), v);
  return v;
}

bool RunConfig::get_bool(const std::string& key) const { return get(key) == "true"; }

std::uint64_t RunConfig::seed() const {
  std::uint64_t v = 0;
  parse_number(get("seed"), v);
  return v;
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

synth::WorldConfig RunConfig::world() const {
  synth::WorldConfig w;
  w.num_skills = get_int("synth.num_skills");
  w.num_categories = get_int("synth.num_categories");
  w.overlap_factor = get_double("synth.overlap_factor");
  w.num_users = get_int("synth.num_users");
  w.enablement_mean = get_double("synth.enablement_mean");
  w.utterances_per_skill = get_int("synth.utterances_per_skill");
  w.char_corruption_rate = get_double("synth.char_corruption_rate");
  w.short_command_rate = get_double("synth.short_command_rate");
  w.shared_intent_rate = get_double("synth.shared_intent_rate");
  w.catch_all_rate = get_double("synth.catch_all_rate");
  w.no_pattern_rate = get_double("synth.no_pattern_rate");
  w.preference_strength = get_double("synth.preference_strength");
  w.commands_per_category = get_int("synth.commands_per_category");
  w.new_skills = get_int("synth.new_skills");
  w.new_train_per_skill = get_int("synth.new_train_per_skill");
  w.new_test_per_skill = get_int("synth.new_test_per_skill");
  w.new_novel_word_rate = get_double("synth.new_novel_word_rate");
  w.new_skill_adoption = get_double("synth.new_skill_adoption");
  w.seed = seed();
  w.validate();
  return w;
}

weak::FilterConfig RunConfig::filter() const {
  weak::FilterConfig f;
  f.min_tokens = get_int("weak.min_tokens");
  f.min_count = get_int("weak.min_count");
  f.catch_all_policy =
      get("weak.catch_all_policy") == "registry" ? weak::CatchAllPolicy::kRegistryFlag : weak::CatchAllPolicy::kHeuristic;
  f.share_threshold = get_double("weak.share_threshold");
  f.median_multiple = get_double("weak.median_multiple");
  f.validate();
  return f;
}

corpus::SplitRatios RunConfig::split() const {
  return {get_double("split.train"), get_double("split.validation"), get_double("split.test")};
}

training::TrainConfig RunConfig::train() const {
  training::TrainConfig t;
  t.variant = personalization::parse_variant(get("model.variant"));
  t.mode = personalization::parse_mode(get("model.mode"));
  t.encoder = {get_int("model.char_emb_dim"), get_int("model.char_hidden"), get_int("model.word_emb_dim"),
               get_int("model.word_hidden")};
  t.embedding_dim = get_int("model.embedding_dim");
  t.min_word_count = get_int("train.min_word_count");
  t.epochs = get_int("train.epochs");
  t.batch_size = get_int("train.batch_size");
  t.adam = {get_double("train.lr"), get_double("train.beta1"), get_double("train.beta2"), get_double("train.eps")};
  t.negatives = get("train.negatives") == "exact" ? training::NegativeSampling::kExact
                                                  : training::NegativeSampling::kSampled;
  t.sampled_q = get_int("train.sampled_q");
  t.binary_negative_ratio = get_int("train.binary_negative_ratio");
  t.dropout = get_double("train.dropout");
  t.seed = seed();
  t.validate();
  return t;
}

bootstrap::ExpandConfig RunConfig::expand() const {
  bootstrap::ExpandConfig e;
  e.train = train();
  e.ridge = get_double("expand.ridge");
  const int old_sample = get_int("expand.old_sample");
  if (old_sample < 1) throw ConfigError("expand.old_sample must be >= 1");
  e.old_sample = static_cast<std::size_t>(old_sample);
  e.freeze_new_embedding = get_bool("expand.freeze_new_embedding");
  e.coverage_warning = get_double("expand.coverage_warning");
  return e;
}

EvalConfig RunConfig::eval() const {
  EvalConfig e;
  e.top_n = parse_int_list(get("eval.top_n"));
  for (int n : e.top_n) {
    if (n < 1) throw ConfigError("eval.top_n entries must be >= 1");
  }
  e.attention_min_enabled = get_int("eval.attention_min_enabled");
  e.binomial_p0 = get_double("eval.binomial_p0");
  e.binomial_confidence = get_double("eval.binomial_confidence");
  return e;
}

nlohmann::ordered_json provenance(const std::string& command, const RunConfig& cfg,
                                  const std::vector<std::filesystem::path>& inputs,
                                  const std::vector<std::string>& argv) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["argv"] = argv;
  j["seed"] = cfg.seed();
  j["config"] = cfg.to_json();
  nlohmann::ordered_json digests = nlohmann::ordered_json::object();
  for (const auto& p : inputs) digests[p.string()] = file_sha256(p);
  j["inputs"] = digests;
  return j;
}

}  // namespace skillrouter::io

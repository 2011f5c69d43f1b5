#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "skillrouter/bootstrap/bootstrap.hpp"
#include "skillrouter/corpus/jsonl.hpp"
#include "skillrouter/corpus/normalize.hpp"
#include "skillrouter/corpus/split.hpp"
#include "skillrouter/evaluation/metrics.hpp"
#include "skillrouter/io/checkpoint.hpp"
#include "skillrouter/io/run_config.hpp"
#include "skillrouter/synth/world.hpp"
#include "skillrouter/training/train.hpp"
#include "skillrouter/weak/patterns.hpp"
#include "skillrouter/weak/pipeline.hpp"

namespace fs = std::filesystem;
using namespace skillrouter;
using json = nlohmann::ordered_json;

namespace {

// Raised for bad user input; maps to exit code 1.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> argv;

  io::RunConfig build() const {
    io::RunConfig cfg;
    if (!config_file.empty()) cfg.merge_file(config_file);
    cfg.apply_env();
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw io::ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.set("seed", std::to_string(*seed));
    return cfg;
  }
};

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json write_provenance(const fs::path& dir, const std::string& command, const io::RunConfig& cfg,
                      const std::vector<fs::path>& inputs, const Common& common) {
  auto p = io::provenance(command, cfg, inputs, common.argv);
  write_json(dir / "provenance.json", p);
  return p;
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw UsageError("missing input file " + p.string());
}

std::vector<corpus::Instance> read_dataset(const fs::path& p) {
  require_file(p);
  return corpus::read_jsonl<corpus::Instance>(p, "dataset/v1");
}

std::vector<corpus::Skill> read_skills(const fs::path& p) {
  require_file(p);
  return corpus::read_jsonl<corpus::Skill>(p, "skills/v1");
}

evaluation::ProfileIndex read_profiles(const fs::path& p) {
  require_file(p);
  return evaluation::index_profiles(corpus::read_jsonl<corpus::UserProfile>(p, "profiles/v1"));
}

std::vector<std::string> skill_ids(const std::vector<corpus::Skill>& skills) {
  std::vector<std::string> out;
  for (const auto& s : skills) out.push_back(s.skill_id);
  return out;
}

training::EpochCallback log_epoch(const fs::path& metrics_path) {
  auto out = std::make_shared<std::ofstream>(metrics_path, std::ios::trunc);
  if (!*out) throw std::runtime_error("cannot write " + metrics_path.string());
  return [out](const training::EpochMetrics& m) {
    *out << training::to_json(m).dump() << '\n';
    out->flush();
    std::cerr << "epoch " << m.epoch << " loss " << m.train_loss << " val_top1 " << m.val_top1 << " ("
              << m.seconds << " s)\n";
  };
}

// Inference metadata carried in the checkpoint so infer can strip the
// invocation pattern from raw text.
nlohmann::json inference_extra(const std::vector<corpus::QueryPattern>& patterns,
                               const std::vector<corpus::Skill>& skills, const json& prov) {
  nlohmann::json extra;
  extra["patterns"] = patterns;
  extra["skills"] = skills;
  // Only path-independent fields, so identical configs and inputs give
  // identical checkpoint bytes; argv and paths stay in provenance.json.
  std::vector<std::string> digests;
  for (const auto& [path, digest] : prov["inputs"].items()) digests.push_back(digest.get<std::string>());
  std::sort(digests.begin(), digests.end());
  extra["provenance"] = {{"command", prov["command"].get<std::string>()},
                         {"seed", prov["seed"].get<std::uint64_t>()},
                         {"config", nlohmann::json::parse(prov["config"].dump())},
                         {"input_digests", digests}};
  return extra;
}

std::vector<corpus::QueryPattern> default_patterns(const fs::path& data_dir) {
  const auto p = data_dir / "patterns.jsonl";
  if (!fs::is_regular_file(p)) return {};
  return corpus::read_jsonl<corpus::QueryPattern>(p, "patterns/v1");
}

std::vector<std::string> parse_profile(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

personalization::Tokens command_tokens(const io::Checkpoint& ckpt, const std::string& text) {
  corpus::Utterance u;
  u.id = "infer";
  u.user_id = "infer";
  u.text = text;
  u.tokens = corpus::normalize(text);
  if (ckpt.extra.contains("patterns") && ckpt.extra.contains("skills")) {
    const auto patterns = ckpt.extra["patterns"].get<std::vector<corpus::QueryPattern>>();
    const auto skills = ckpt.extra["skills"].get<std::vector<corpus::Skill>>();
    if (!patterns.empty()) {
      const corpus::SkillRegistry registry(skills, {});
      if (auto c = weak::PatternMatcher(patterns, registry).match(u)) return c->weak.command_tokens;
    }
  }
  return u.tokens;
}

std::string fmt_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

int cmd_synth(const Common& common, const fs::path& out) {
  const auto cfg = common.build();
  const auto world = synth::generate_world(cfg.world());
  synth::write_world(world, out);
  write_provenance(out, "synth", cfg, {}, common);
  std::cerr << "wrote " << world.log.size() << " log lines for " << world.registry.size() << " skills to " << out
            << '\n';
  return 0;
}

struct WeakInputs {
  fs::path world, log, patterns, skills, shared_intents;

  void resolve() {
    if (!world.empty()) {
      if (log.empty()) log = world / "log.jsonl";
      if (patterns.empty()) patterns = world / "patterns.jsonl";
      if (skills.empty()) skills = world / "skills.jsonl";
      if (shared_intents.empty() && fs::exists(world / "shared_intents.txt")) {
        shared_intents = world / "shared_intents.txt";
      }
    }
    if (log.empty() || patterns.empty() || skills.empty()) {
      throw UsageError("weakgen needs --world or all of --log, --patterns and --skills");
    }
  }
};

int cmd_weakgen(const Common& common, WeakInputs in, const fs::path& out) {
  in.resolve();
  const auto cfg = common.build();
  for (const auto& p : {in.log, in.patterns, in.skills}) require_file(p);
  const auto log = corpus::read_jsonl<corpus::Utterance>(in.log, "log/v1");
  const auto patterns = corpus::read_jsonl<corpus::QueryPattern>(in.patterns, "patterns/v1");
  std::vector<std::string> shared;
  if (!in.shared_intents.empty()) shared = corpus::read_lines(in.shared_intents);
  const corpus::SkillRegistry registry(corpus::read_jsonl<corpus::Skill>(in.skills, "skills/v1"), shared);
  auto filter = cfg.filter();
  for (const auto& s : shared) filter.shared_intents.insert(corpus::join_tokens(corpus::normalize(s)));
  const auto data = weak::build_weak_dataset(log, patterns, registry, filter);
  const auto split = corpus::split_by_user_time(data.instances, cfg.split(), cfg.seed());

  std::vector<fs::path> inputs = {in.log, in.patterns, in.skills};
  if (!in.shared_intents.empty()) inputs.push_back(in.shared_intents);
  fs::create_directories(out);
  const auto prov = write_provenance(out, "weakgen", cfg, inputs, common);
  corpus::write_jsonl(out / "weak.jsonl", "weak/v1", data.samples);
  // Registry and patterns travel with the dataset so train and refresh can find them.
  corpus::write_jsonl(out / "skills.jsonl", "skills/v1", registry.skills());
  corpus::write_jsonl(out / "patterns.jsonl", "patterns/v1", patterns);
  corpus::write_jsonl(out / "train.jsonl", "dataset/v1", split.train);
  corpus::write_jsonl(out / "validation.jsonl", "dataset/v1", split.validation);
  corpus::write_jsonl(out / "test.jsonl", "dataset/v1", split.test);
  auto report = data.report_json();
  report["split"] = {{"policy", split.split_policy},
                     {"train", split.train.size()},
                     {"validation", split.validation.size()},
                     {"test", split.test.size()},
                     {"clipped", split.clipped}};
  report["provenance"] = prov;
  write_json(out / "filter_report.json", report);
  std::cerr << "kept " << data.samples.size() << " weak samples (" << data.instances.size() << " instances)\n";
  return 0;
}

int cmd_train(const Common& common, const fs::path& data, const fs::path& profiles_path, fs::path skills_path,
              fs::path patterns_path, const fs::path& out) {
  const auto cfg = common.build();
  const auto tcfg = cfg.train();
  if (skills_path.empty()) skills_path = data / "skills.jsonl";
  const auto train_set = read_dataset(data / "train.jsonl");
  std::vector<corpus::Instance> validation;
  if (fs::exists(data / "validation.jsonl")) validation = read_dataset(data / "validation.jsonl");
  const auto skills = read_skills(skills_path);
  const auto profiles = read_profiles(profiles_path);
  std::vector<corpus::QueryPattern> patterns;
  if (!patterns_path.empty()) {
    require_file(patterns_path);
    patterns = corpus::read_jsonl<corpus::QueryPattern>(patterns_path, "patterns/v1");
  } else {
    patterns = default_patterns(data);
  }

  std::vector<fs::path> inputs = {data / "train.jsonl", profiles_path, skills_path};
  if (!validation.empty()) inputs.push_back(data / "validation.jsonl");
  if (!patterns_path.empty()) inputs.push_back(patterns_path);
  fs::create_directories(out);
  const auto prov = write_provenance(out, "train", cfg, inputs, common);
  auto result = training::train(train_set, validation, skill_ids(skills), profiles, tcfg, log_epoch(out / "metrics.jsonl"));
  const auto digest =
      io::save_checkpoint({std::move(result.model), inference_extra(patterns, skills, prov)}, out / "model.ckpt");
  std::cout << digest << '\n';
  return 0;
}

struct ExpandInputs {
  fs::path checkpoint, data, new_train, new_skills, profiles, skills, patterns;
};

int cmd_expand(const Common& common, const ExpandInputs& in, const fs::path& out, bool full_refresh) {
  const auto cfg = common.build();
  const auto ecfg = cfg.expand();
  const auto old_train = read_dataset(in.data / "train.jsonl");
  const auto new_train = read_dataset(in.new_train);
  const auto new_skills = read_skills(in.new_skills);
  const auto profiles = read_profiles(in.profiles);
  std::vector<corpus::Instance> validation;
  if (fs::exists(in.data / "validation.jsonl")) validation = read_dataset(in.data / "validation.jsonl");

  std::vector<fs::path> inputs = {in.data / "train.jsonl", in.new_train, in.new_skills, in.profiles};
  fs::create_directories(out);
  bootstrap::TimingReport timing;
  io::Checkpoint result;
  std::vector<corpus::Skill> all_skills;
  std::vector<corpus::QueryPattern> patterns;
  json report;
  if (full_refresh) {
    const auto skills_path = in.skills.empty() ? in.data / "skills.jsonl" : in.skills;
    inputs.push_back(skills_path);
    all_skills = read_skills(skills_path);
    patterns = default_patterns(in.data);
    const auto prov = write_provenance(out, "refresh", cfg, inputs, common);
    for (const auto& s : new_skills) all_skills.push_back(s);
    auto r = bootstrap::refresh(old_train, new_train, validation, skill_ids(all_skills), profiles, ecfg.train,
                                log_epoch(out / "metrics.jsonl"));
    double total = 0.0;
    for (const auto& m : r.metrics) total += m.seconds;
    timing = {"refresh", r.metrics.empty() ? 0.0 : total / static_cast<double>(r.metrics.size()),
              static_cast<int>(r.metrics.size()), r.metrics.empty() ? 0.0 : r.metrics.back().val_top1};
    result = {std::move(r.model), inference_extra(patterns, all_skills, prov)};
    report = {{"mode", "refresh"}, {"skills", result.model.skills.size()}, {"provenance", prov}};
  } else {
    require_file(in.checkpoint);
    inputs.insert(inputs.begin(), in.checkpoint);
    auto base = io::load_checkpoint(in.checkpoint);
    const auto prov = write_provenance(out, "expand", cfg, inputs, common);
    if (base.extra.contains("skills")) all_skills = base.extra["skills"].get<std::vector<corpus::Skill>>();
    if (base.extra.contains("patterns")) patterns = base.extra["patterns"].get<std::vector<corpus::QueryPattern>>();
    for (const auto& s : new_skills) all_skills.push_back(s);
    auto r = bootstrap::expand(base.model, old_train, new_train, skill_ids(new_skills), profiles, validation, ecfg,
                               log_epoch(out / "metrics.jsonl"));
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    timing = {"expand", r.seconds_per_epoch(), static_cast<int>(r.epochs.size()),
              r.epochs.empty() ? 0.0 : r.epochs.back().val_top1};
    result = {std::move(base.model), inference_extra(patterns, all_skills, prov)};
    report = r.to_json();
    report["provenance"] = prov;
  }
  auto timing_json = timing.to_json();
  timing_json["provenance"] = report["provenance"];
  write_json(out / "timing.json", timing_json);
  write_json(out / (full_refresh ? "refresh_report.json" : "expand_report.json"), report);
  std::cout << io::save_checkpoint(result, out / "model.ckpt") << '\n';
  return 0;
}

std::vector<double> model_confidence(const personalization::Model& model,
                                     const std::vector<evaluation::Suggestion>& log,
                                     const evaluation::ProfileIndex& profiles, const std::vector<std::size_t>& rows) {
  std::vector<personalization::Tokens> utts;
  std::vector<std::vector<int>> enabled;
  std::vector<int> cols;
  for (std::size_t i : rows) {
    const auto& s = log[i];
    utts.push_back(corpus::normalize(s.text));
    auto it = profiles.find(s.user_id);
    enabled.push_back(it == profiles.end() ? std::vector<int>{}
                                           : personalization::enabled_indices(model, it->second));
    cols.push_back(model.skill_index(s.skill_id));
  }
  const auto table = personalization::score(model, utts, enabled);
  std::vector<double> out;
  for (std::size_t r = 0; r < rows.size(); ++r) out.push_back(table.p.data()[r * model.size() + cols[r]]);
  return out;
}

int cmd_eval(const Common& common, const fs::path& checkpoint, const fs::path& test, const fs::path& profiles_path,
             const fs::path& suggestions, bool export_embeddings, const fs::path& out) {
  const auto cfg = common.build();
  const auto ecfg = cfg.eval();
  require_file(checkpoint);
  const auto ckpt = io::load_checkpoint(checkpoint);
  const auto& model = ckpt.model;
  const auto profiles = read_profiles(profiles_path);
  const auto set = evaluation::resolve(model, read_dataset(test), profiles);
  std::vector<fs::path> inputs = {checkpoint, test, profiles_path};
  if (!suggestions.empty()) inputs.push_back(suggestions);
  fs::create_directories(out);
  const auto prov = write_provenance(out, "eval", cfg, inputs, common);

  const auto scores = personalization::score(model, set.utterances, set.enabled);
  json report;
  report["variant"] = personalization::to_string(model.spec.variant);
  report["mode"] = personalization::to_string(model.spec.mode);
  report["full"] = evaluation::top_n_accuracy(model, scores, set, personalization::Scope::kFull, ecfg.top_n).to_json();
  report["enabled"] =
      evaluation::top_n_accuracy(model, scores, set, personalization::Scope::kEnabled, ecfg.top_n).to_json();
  if (personalization::uses_attention(model.spec.mode)) {
    report["attention"] =
        evaluation::attention_top_n(model, scores, set, ecfg.top_n, ecfg.attention_min_enabled).to_json();
  }
  if (!suggestions.empty()) {
    require_file(suggestions);
    const auto log = corpus::read_jsonl<evaluation::Suggestion>(suggestions, "suggestions/v1");
    const auto bin = evaluation::binomial_binarize(log, ecfg.binomial_p0, ecfg.binomial_confidence);
    std::vector<evaluation::Suggestion> kept;
    std::vector<double> labels;
    std::vector<std::size_t> rows;
    for (const auto& r : bin.records) {
      if (model.skill_index(r.skill_id) < 0) continue;
      kept.push_back({r.user_id, r.text, r.skill_id, r.label == 1});
      labels.push_back(r.label);
      rows.push_back(kept.size() - 1);
    }
    const auto conf = model_confidence(model, kept, profiles, rows);
    report["correlation"] = {{"groups", bin.groups},
                             {"discarded", bin.discarded},
                             {"records", kept.size()},
                             {"pearson", kept.size() >= 2 ? evaluation::pearson_correlation(conf, labels) : 0.0}};
  }
  if (export_embeddings) {
    if (!personalization::uses_attention(model.spec.mode)) {
      throw UsageError("--embeddings needs a model with skill embeddings (attention modes)");
    }
    std::ofstream tsv(out / "embeddings.tsv", std::ios::trunc);
    for (const auto& skill : model.skills) {
      tsv << skill;
      for (double x : model.params.at(personalization::Model::embedding_path(skill)).value.data()) tsv << '\t' << x;
      tsv << '\n';
    }
  }
  report["provenance"] = prov;
  write_json(out / "eval.json", report);
  std::cout << report["enabled"].dump() << '\n';
  return 0;
}

int cmd_infer(const fs::path& checkpoint, const std::string& text, const std::string& profile,
              const std::string& scope, std::size_t top) {
  require_file(checkpoint);
  if (scope != "full" && scope != "enabled") throw UsageError("--scope must be full or enabled");
  const auto ckpt = io::load_checkpoint(checkpoint);
  const auto tokens = command_tokens(ckpt, text);
  const auto ranked = personalization::classify(ckpt.model, tokens, parse_profile(profile),
                                                scope == "full" ? personalization::Scope::kFull
                                                                : personalization::Scope::kEnabled,
                                                top);
  for (const auto& r : ranked) std::cout << r.skill_id << '\t' << fmt_score(r.score) << '\n';
  return 0;
}

int cmd_bench(const Common& common, const fs::path& checkpoint, const fs::path& data, const std::string& profile,
              int iterations) {
  require_file(checkpoint);
  if (iterations < 1) throw UsageError("--iterations must be >= 1");
  const auto cfg = common.build();
  const auto ckpt = io::load_checkpoint(checkpoint);
  std::vector<personalization::Tokens> utts;
  if (!data.empty()) {
    for (const auto& inst : read_dataset(data)) utts.push_back(inst.tokens);
  } else {
    // Deterministic pseudo-utterances from the model vocabulary.
    numeric::Rng rng(cfg.seed());
    const auto& words = ckpt.model.vocab.words();
    for (int i = 0; i < 256; ++i) {
      personalization::Tokens t;
      const int len = 2 + static_cast<int>(rng.below(5));
      for (int w = 0; w < len; ++w) t.push_back(words.empty() ? "x" : words[rng.below(words.size())]);
      utts.push_back(std::move(t));
    }
  }
  if (utts.empty()) throw UsageError("no utterances to benchmark");
  const auto enabled = parse_profile(profile);
  std::vector<double> ms;
  for (int i = 0; i < iterations; ++i) {
    const auto& u = utts[static_cast<std::size_t>(i) % utts.size()];
    const auto t0 = std::chrono::steady_clock::now();
    auto r = personalization::classify(ckpt.model, u, enabled, personalization::Scope::kFull, 1);
    const auto t1 = std::chrono::steady_clock::now();
    if (r.empty()) throw std::runtime_error("empty ranking");
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  auto pct = [&](double q) { return ms[std::min(ms.size() - 1, static_cast<std::size_t>(q * ms.size()))]; };
  std::size_t bytes = 0;
  for (const auto& [path, p] : ckpt.model.params) bytes += p.value.size() * sizeof(double);
  json j = {{"iterations", iterations},
            {"threads", 1},
            {"p50_ms", pct(0.50)},
            {"p99_ms", pct(0.99)},
            {"parameter_bytes", bytes},
            {"skills", ckpt.model.size()}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--config", common.config_file, "key=value config file")->check(CLI::ExistingFile);
  sub->add_option("--set", common.overrides, "override one config key (key=value), repeatable");
  sub->add_option("--seed", common.seed, "seed; overrides SKILLROUTER_SEED and the config file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skillrouter: personalized skill routing from weakly labeled logs"};
  app.require_subcommand(1);
  Common common;
  common.argv.assign(argv, argv + argc);
  int rc = 0;
  std::function<int()> run;

  fs::path out, data, profiles, skills, patterns, checkpoint, test, suggestions;
  WeakInputs weak_in;
  ExpandInputs expand_in;
  std::string text, profile, scope = "enabled";
  std::size_t top = 5;
  int iterations = 1000;
  bool embeddings = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic world");
  add_common(synth, common);
  synth->add_option("--out", out, "output directory")->required();
  synth->callback([&] { run = [&] { return cmd_synth(common, out); }; });

  auto* weakgen = app.add_subcommand("weakgen", "build the weakly labeled dataset and splits");
  add_common(weakgen, common);
  weakgen->add_option("--world", weak_in.world, "directory holding log, patterns, skills and shared intents");
  weakgen->add_option("--log", weak_in.log);
  weakgen->add_option("--patterns", weak_in.patterns);
  weakgen->add_option("--skills", weak_in.skills);
  weakgen->add_option("--shared-intents", weak_in.shared_intents);
  weakgen->add_option("--out", out)->required();
  weakgen->callback([&] { run = [&] { return cmd_weakgen(common, weak_in, out); }; });

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, common);
  train->add_option("--data", data, "directory with train.jsonl and validation.jsonl")->required();
  train->add_option("--profiles", profiles)->required();
  train->add_option("--skills", skills, "skill registry; defaults to <data>/skills.jsonl");
  train->add_option("--patterns", patterns, "invocation patterns stored for infer");
  train->add_option("--out", out)->required();
  train->callback([&] { run = [&] { return cmd_train(common, data, profiles, skills, patterns, out); }; });

  auto add_expand_opts = [&](CLI::App* sub, bool with_checkpoint) {
    add_common(sub, common);
    if (with_checkpoint) sub->add_option("--checkpoint", expand_in.checkpoint)->required();
    sub->add_option("--data", expand_in.data, "directory with the existing train.jsonl")->required();
    sub->add_option("--new-train", expand_in.new_train)->required();
    sub->add_option("--new-skills", expand_in.new_skills)->required();
    sub->add_option("--profiles", expand_in.profiles)->required();
    sub->add_option("--out", out)->required();
  };
  auto* expand = app.add_subcommand("expand", "add new skills to a trained model");
  add_expand_opts(expand, true);
  expand->callback([&] { run = [&] { return cmd_expand(common, expand_in, out, false); }; });
  auto* refresh = app.add_subcommand("refresh", "retrain on existing plus new skills");
  add_expand_opts(refresh, false);
  refresh->add_option("--skills", expand_in.skills, "existing skill registry; defaults to <data>/skills.jsonl");
  refresh->callback([&] { run = [&] { return cmd_expand(common, expand_in, out, true); }; });

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--test", test)->required();
  eval->add_option("--profiles", profiles)->required();
  eval->add_option("--suggestions", suggestions, "suggestion log for the correlation study");
  eval->add_flag("--embeddings", embeddings, "export skill embeddings as TSV");
  eval->add_option("--out", out)->required();
  eval->callback(
      [&] { run = [&] { return cmd_eval(common, checkpoint, test, profiles, suggestions, embeddings, out); }; });

  auto* infer = app.add_subcommand("infer", "rank skills for one utterance");
  infer->add_option("--checkpoint", checkpoint)->required();
  infer->add_option("--text", text)->required();
  infer->add_option("--profile", profile, "comma-separated enabled skill ids");
  infer->add_option("--scope", scope, "full or enabled");
  infer->add_option("--top", top)->check(CLI::PositiveNumber);
  infer->callback([&] { run = [&] { return cmd_infer(checkpoint, text, profile, scope, top); }; });

  auto* bench = app.add_subcommand("bench", "single-thread latency and parameter size");
  add_common(bench, common);
  bench->add_option("--checkpoint", checkpoint)->required();
  bench->add_option("--data", data, "dataset file to draw utterances from");
  bench->add_option("--profile", profile);
  bench->add_option("--iterations", iterations);
  bench->callback([&] { run = [&] { return cmd_bench(common, checkpoint, data, profile, iterations); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    rc = run();
  } catch (const io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const corpus::SchemaError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const io::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return rc;
}

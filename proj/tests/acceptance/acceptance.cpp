// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset; the exit code is nonzero when any run
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "skillrouter/bootstrap/bootstrap.hpp"
#include "skillrouter/corpus/jsonl.hpp"
#include "skillrouter/corpus/normalize.hpp"
#include "skillrouter/corpus/split.hpp"
#include "skillrouter/evaluation/metrics.hpp"
#include "skillrouter/io/checkpoint.hpp"
#include "skillrouter/io/run_config.hpp"
#include "skillrouter/numeric/activations.hpp"
#include "skillrouter/synth/world.hpp"
#include "skillrouter/training/train.hpp"
#include "skillrouter/weak/pipeline.hpp"

using namespace skillrouter;
using numeric::Rng;
using numeric::Tape;
using numeric::Tensor;
using personalization::Model;
using personalization::PersonalizationMode;
using personalization::Scope;
using personalization::Variant;

namespace {

// Thresholds from the acceptance criteria.
constexpr double kGradTolerance = 1e-4;
constexpr int kGradSeeds = 20;
constexpr double kGradSeconds = 60.0;
constexpr double kLadderMargin = 0.05;
constexpr double kCombinedSlack = 0.005;
constexpr double kLadderSecondsPerSeed = 15 * 60.0;
constexpr double kExpandSpeedup = 10.0;
constexpr double kExpandAccuracyGap = 0.02;
constexpr double kBootstrapSeconds = 20 * 60.0;
constexpr double kScopeGap = 0.20;
constexpr double kRandomMultiple = 3.0;
constexpr int kPropertyCases = 1000;
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

// Testbed sized for roughly 20k weak instances.
constexpr int kUtterancesPerSkill = 950;
constexpr int kNewSkills = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * x);
  return buf;
}

std::string num(double x, int digits = 3) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, x);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "" : "[fail] ") + what);
  }
  void info(const std::string& what) { notes.push_back(what); }
};

// ---------------------------------------------------------------------------
// Shared testbed: one world, weak dataset, split and trained models per seed.

struct SeedRun {
  std::uint64_t seed = 0;
  synth::World world;
  corpus::DatasetSplit split;
  evaluation::ProfileIndex profiles;
  evaluation::ProfileIndex expanded_profiles;
  std::size_t weak_instances = 0;
  double setup_seconds = 0.0;
  std::map<std::string, Model> models;
  std::map<std::string, double> train_seconds;
};

training::TrainConfig testbed_train_config(std::uint64_t seed) {
  training::TrainConfig cfg;
  cfg.seed = seed;
  return cfg;
}

SeedRun& seed_run(std::uint64_t seed) {
  static std::map<std::uint64_t, std::unique_ptr<SeedRun>> cache;
  auto& slot = cache[seed];
  if (slot) return *slot;
  const auto t0 = Clock::now();
  slot = std::make_unique<SeedRun>();
  auto& r = *slot;
  r.seed = seed;
  synth::WorldConfig wc;
  wc.utterances_per_skill = kUtterancesPerSkill;
  wc.new_skills = kNewSkills;
  wc.seed = seed;
  r.world = synth::generate_world(wc);
  weak::FilterConfig fc;
  for (const auto& s : r.world.registry.shared_intents()) fc.shared_intents.insert(s);
  const auto data = weak::build_weak_dataset(r.world.log, r.world.patterns, r.world.registry, fc);
  r.weak_instances = data.instances.size();
  r.split = corpus::split_by_user_time(data.instances, {}, seed);
  r.profiles = evaluation::index_profiles(r.world.profiles);
  r.expanded_profiles = evaluation::index_profiles(r.world.expanded_profiles);
  r.setup_seconds = seconds_since(t0);
  std::cerr << "[seed " << seed << "] " << r.world.log.size() << " log lines, " << r.weak_instances
            << " weak instances, train " << r.split.train.size() << " test " << r.split.test.size() << '\n';
  return r;
}

const Model& trained(SeedRun& r, Variant variant, PersonalizationMode mode) {
  const std::string key = personalization::to_string(variant) + "/" + personalization::to_string(mode);
  if (auto it = r.models.find(key); it != r.models.end()) return it->second;
  auto cfg = testbed_train_config(r.seed);
  cfg.variant = variant;
  cfg.mode = mode;
  const auto t0 = Clock::now();
  auto result = training::train(r.split.train, r.split.validation, r.world.registry.ids(), r.profiles, cfg,
                                [&](const training::EpochMetrics& m) {
                                  std::cerr << "[seed " << r.seed << " " << key << "] epoch " << m.epoch << " loss "
                                            << num(m.train_loss, 4) << " val " << pct(m.val_top1) << " ("
                                            << num(m.seconds) << " s)\n";
                                });
  r.train_seconds[key] = seconds_since(t0);
  return r.models.emplace(key, std::move(result.model)).first->second;
}

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference gradient suite.

const encoder::EncoderConfig kTiny{3, 2, 4, 3};

std::vector<std::string> tiny_ids(int k) {
  std::vector<std::string> ids;
  for (int i = 0; i < k; ++i) ids.push_back("s" + std::to_string(i));
  return ids;
}

std::vector<corpus::Instance> tiny_data(int k, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::string> filler = {"get", "me", "a", "the", "now", "play"};
  std::vector<corpus::Instance> out;
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < 3; ++i) {
      corpus::Instance inst;
      inst.id = "i" + std::to_string(j) + "_" + std::to_string(i);
      inst.user_id = "u" + std::to_string((i + j) % 3);
      inst.skill_id = "s" + std::to_string(j);
      inst.tokens = {filler[rng.below(filler.size())], "w" + std::to_string(j)};
      if (rng.bernoulli(0.5)) inst.tokens.push_back(filler[rng.below(filler.size())]);
      out.push_back(inst);
    }
  }
  return out;
}

evaluation::ProfileIndex tiny_profiles(int k, Rng& rng) {
  evaluation::ProfileIndex p;
  for (int u = 0; u < 3; ++u) {
    for (int j = 0; j < k; ++j) {
      if (rng.bernoulli(0.6)) p["u" + std::to_string(u)].push_back("s" + std::to_string(j));
    }
  }
  return p;
}

training::TrainConfig tiny_config(Variant variant, PersonalizationMode mode, std::uint64_t seed) {
  training::TrainConfig cfg;
  cfg.variant = variant;
  cfg.mode = mode;
  cfg.encoder = kTiny;
  cfg.embedding_dim = static_cast<int>(kTiny.output_dim());
  cfg.min_word_count = 1;
  cfg.batch_size = 8;
  cfg.seed = seed;
  return cfg;
}

// Scales every parameter so gradients are far from the relative-error floor.
void spread(Model& model, double factor) {
  for (auto& [path, p] : model.params) {
    for (auto& x : p.value.data()) x *= factor;
  }
}

Outcome criterion_gradients() {
  Outcome out;
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  std::size_t probes = 0;
  auto record = [&](const std::string& what, const testing::GradCheckResult& r) {
    worst[what] = std::max(worst[what], r.max_rel_error);
    probes += r.checked;
  };
  const int k = 4;
  for (int s = 0; s < kGradSeeds; ++s) {
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(s);
    Rng rng(seed);
    const auto data = tiny_data(k, seed);
    const auto profiles = tiny_profiles(k, rng);
    std::vector<personalization::Tokens> utts;
    std::vector<int> labels;
    for (std::size_t i = 0; i < data.size(); i += 2) {
      utts.push_back(data[i].tokens);
      labels.push_back(static_cast<int>(i / 3));
    }

    // Char LSTM and word BiLSTM, through a SeLU readout.
    {
      auto model = training::init_model(data, tiny_ids(k), tiny_config(Variant::kMultiTask, PersonalizationMode::kNone, seed));
      spread(model, 5.0);
      const auto enc = model.shared_encoder();
      Tensor proj({utts.size(), kTiny.output_dim()});
      numeric::init_uniform(proj, rng, 1.0);
      const auto paths = enc.param_paths();
      std::vector<std::string> chars, words;
      for (const auto& p : paths) (p.find("char") != std::string::npos ? chars : words).push_back(p);
      auto loss = [&](bool backward) {
        Tape tape;
        auto h = enc.encode(tape, enc.refs(model.params), utts).h_bar;
        auto l = tape.weighted_sum(tape.selu(h), proj);
        if (backward) tape.backward(l);
        return tape.value(l)[0];
      };
      record("char LSTM", testing::gradient_check(model.params, chars, loss, 8));
      record("word BiLSTM", testing::gradient_check(model.params, words, loss, 8));
    }

    // Multitask loss with SeLU heads, in every personalization mode.
    for (auto mode : {PersonalizationMode::kNone, PersonalizationMode::kOneBit, PersonalizationMode::kAttention,
                      PersonalizationMode::kOneBitAndAttention}) {
      auto model = training::init_model(data, tiny_ids(k), tiny_config(Variant::kMultiTask, mode, seed));
      spread(model, 5.0);
      const auto set = evaluation::resolve(model, data, profiles);
      training::NegativeSampler sampler(model.size(), training::NegativeSampler::skill_tokens(model, data),
                                        training::NegativeSampling::kExact, 8);
      std::vector<std::size_t> order(set.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng brng(seed);
      const auto batch = training::build_batch(set, order, 0, order.size(), sampler, brng);
      auto loss = [&](bool backward) {
        Tape tape;
        auto l = training::multitask_graph(tape, model, batch);
        if (backward) tape.backward(l);
        return tape.value(l)[0];
      };
      std::vector<std::string> heads, attention;
      for (const auto& p : model.params.paths()) {
        if (p.rfind("head/", 0) == 0) heads.push_back(p);
        if (p.rfind("domain/", 0) == 0) attention.push_back(p);
      }
      record("multitask loss (" + personalization::to_string(mode) + ")",
             testing::gradient_check(model.params, model.params.paths(), loss, 6));
      record("SeLU heads", testing::gradient_check(model.params, heads, loss));
      if (!attention.empty()) record("attention path", testing::gradient_check(model.params, attention, loss));
    }

    // MultiClass softmax loss over the shared encoder.
    {
      auto model = training::init_model(data, tiny_ids(k), tiny_config(Variant::kMultiClass, PersonalizationMode::kNone, seed));
      spread(model, 5.0);
      const auto enc = model.shared_encoder();
      auto loss = [&](bool backward) {
        Tape tape;
        auto h = enc.encode(tape, enc.refs(model.params), utts).h_bar;
        const auto b = model.params.ref("multiclass/b");
        auto l = tape.softmax_xent(tape.affine(h, model.params.ref("multiclass/W"), &b), labels);
        if (backward) tape.backward(l);
        return tape.value(l)[0];
      };
      record("multiclass loss", testing::gradient_check(model.params, model.params.paths(), loss, 6));
    }

    // Binary one-vs-rest loss over a per-skill encoder.
    {
      auto model = training::init_model(data, tiny_ids(k), tiny_config(Variant::kBinary, PersonalizationMode::kNone, seed));
      spread(model, 5.0);
      const std::string skill = "s" + std::to_string(rng.below(k));
      const auto enc = model.binary_encoder(skill);
      std::vector<int> binary_labels;
      for (int l : labels) binary_labels.push_back("s" + std::to_string(l) == skill ? 1 : 0);
      auto loss = [&](bool backward) {
        Tape tape;
        auto h = enc.encode(tape, enc.refs(model.params), utts).h_bar;
        const auto b = model.params.ref("binary/" + skill + "/b");
        auto l = tape.two_way_xent(tape.selu(tape.affine(h, model.params.ref("binary/" + skill + "/W"), &b)),
                                   binary_labels);
        if (backward) tape.backward(l);
        return tape.value(l)[0];
      };
      auto paths = enc.param_paths();
      paths.push_back("binary/" + skill + "/W");
      paths.push_back("binary/" + skill + "/b");
      record("binary loss", testing::gradient_check(model.params, paths, loss, 6));
    }
  }
  const double secs = seconds_since(t0);
  for (const auto& [what, err] : worst) out.check(err < kGradTolerance, what + " max rel err " + num(err, 2));
  out.check(secs < kGradSeconds, std::to_string(kGradSeeds) + " seeds, " + std::to_string(probes) + " probes in " +
                                     num(secs) + " s");
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 2: weak-supervision golden corpus.

const std::filesystem::path kGolden = std::filesystem::path(SKILLROUTER_TEST_DATA_DIR) / "golden";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool contains_tokens(const weak::Samples& s, const std::vector<std::string>& tokens) {
  return std::any_of(s.begin(), s.end(), [&](const corpus::WeakSample& w) { return w.command_tokens == tokens; });
}

Outcome criterion_golden() {
  Outcome out;
  const auto skills = corpus::read_jsonl<corpus::Skill>(kGolden / "skills.jsonl", "skills/v1");
  const auto intents = corpus::read_lines(kGolden / "shared_intents.txt");
  const corpus::SkillRegistry registry(skills, intents);
  const auto patterns = corpus::read_jsonl<corpus::QueryPattern>(kGolden / "patterns.jsonl", "patterns/v1");
  const auto log = corpus::read_jsonl<corpus::Utterance>(kGolden / "log.jsonl", "log/v1");
  weak::FilterConfig cfg;
  cfg.shared_intents = {intents.begin(), intents.end()};

  const auto dir = std::filesystem::temp_directory_path() / "skillrouter_acceptance_golden";
  std::filesystem::create_directories(dir);
  std::vector<std::string> runs;
  weak::Samples kept;
  for (int run = 0; run < 2; ++run) {
    const auto ds = weak::build_weak_dataset(log, patterns, registry, cfg);
    const auto path = dir / ("weak_" + std::to_string(run) + ".jsonl");
    corpus::write_jsonl(path, "weak/v1", ds.samples);
    runs.push_back(slurp(path));
    kept = ds.samples;
  }
  out.check(runs[0] == runs[1], "byte-identical across runs");
  out.check(runs[0] == slurp(kGolden / "expected_weak.jsonl"),
            "retained set equals the hand-enumerated " + std::to_string(kept.size()) + " samples");
  out.check(contains_tokens(kept, {"call", "me", "a", "cab"}), "'call me a cab' retained");

  const auto raw = weak::generate_candidates(log, patterns, registry);
  auto only = [&](const std::vector<std::string>& tokens, const std::string& pattern) {
    weak::Samples s;
    for (const auto& w : raw) {
      if (w.command_tokens == tokens && (pattern.empty() || w.pattern_id == pattern)) s.push_back(w);
    }
    return s;
  };
  const auto boston = only({"boston"}, "");
  out.check(!boston.empty() && weak::filter_min_tokens(boston, cfg).empty() && !contains_tokens(kept, {"boston"}),
            "'boston' discarded by the length filter");
  const auto wether = only({"the", "wether", "today"}, "");
  out.check(wether.size() == 1 && wether[0].count == 1 && weak::filter_min_count(wether, cfg).empty() &&
                !contains_tokens(kept, {"the", "wether", "today"}),
            "single corrupted string discarded by the count filter");
  const auto joke = only({"tell", "me", "a", "joke"}, "p_launch");
  out.check(!joke.empty() && weak::filter_catch_all(joke, registry, cfg).empty() &&
                !contains_tokens(kept, {"tell", "me", "a", "joke"}),
            "flagged catch-all discarded by the catch-all filter");
  const auto stop = only({"stop"}, "");
  out.check(!stop.empty() && weak::filter_shared_intents(stop, cfg).empty() && !contains_tokens(kept, {"stop"}),
            "'stop' discarded by the shared-intent filter");
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 3: personalization ladder.

double full_top1(const Model& model, const SeedRun& r, const std::vector<corpus::Instance>& data) {
  const auto set = evaluation::resolve(model, data, r.profiles);
  return evaluation::top_n_accuracy(model, set, Scope::kFull, {1}).accuracy[0];
}

Outcome criterion_ladder() {
  Outcome out;
  for (auto seed : kSeeds) {
    const auto t0 = Clock::now();
    auto& r = seed_run(seed);
    std::map<PersonalizationMode, double> top1;
    for (auto mode : {PersonalizationMode::kNone, PersonalizationMode::kOneBit, PersonalizationMode::kAttention,
                      PersonalizationMode::kOneBitAndAttention}) {
      top1[mode] = full_top1(trained(r, Variant::kMultiTask, mode), r, r.split.test);
    }
    const double secs = seconds_since(t0) + r.setup_seconds;
    const double mt = top1[PersonalizationMode::kNone], bit = top1[PersonalizationMode::kOneBit];
    const double att = top1[PersonalizationMode::kAttention], both = top1[PersonalizationMode::kOneBitAndAttention];
    const std::string s = "seed " + std::to_string(seed) + ": ";
    out.info(s + std::to_string(r.weak_instances) + " weak instances; top-1 MultiTask " + pct(mt) + ", 1-Bit " +
             pct(bit) + ", Attention " + pct(att) + ", 1-Bit+Attention " + pct(both));
    out.check(mt < bit && bit < att, s + "MultiTask < 1-Bit < Attention");
    out.check(att >= mt + kLadderMargin, s + "Attention - MultiTask = " + pct(att - mt) + " pts");
    out.check(both >= std::max(bit, att) - kCombinedSlack,
              s + "1-Bit+Attention - max(1-Bit, Attention) = " + pct(both - std::max(bit, att)) + " pts");
    out.check(secs < kLadderSecondsPerSeed, s + "runtime " + num(secs) + " s");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 4: Expand vs Refresh.

std::vector<std::string> ids_of(const std::vector<corpus::Skill>& skills) {
  std::vector<std::string> out;
  for (const auto& s : skills) out.push_back(s.skill_id);
  return out;
}

Outcome criterion_bootstrap() {
  Outcome out;
  auto& r = seed_run(kSeeds[0]);
  const auto mode = PersonalizationMode::kAttention;
  const Model& base = trained(r, Variant::kMultiTask, mode);
  const auto t0 = Clock::now();
  const auto new_ids = ids_of(r.world.new_skills);
  out.info("new skills: " + std::to_string(new_ids.size()) + ", " + std::to_string(r.world.new_train.size()) +
           " train / " + std::to_string(r.world.new_test.size()) + " test samples");

  // Existing users keep their old profiles; their predictions must not move.
  const auto old_set = evaluation::resolve(base, r.split.test, r.profiles);
  const auto before = personalization::score(base, old_set.utterances, old_set.enabled);

  Model expanded = base;
  bootstrap::ExpandConfig ecfg;
  ecfg.train = testbed_train_config(r.seed);
  ecfg.train.mode = mode;
  const auto report = bootstrap::expand(expanded, r.split.train, r.world.new_train, new_ids, r.expanded_profiles, {},
                                        ecfg);
  for (const auto& w : report.warnings) out.info("expand warning: " + w);

  const auto after = personalization::score(expanded, old_set.utterances, old_set.enabled);
  bool same = after.attention == before.attention;
  for (std::size_t i = 0; i < old_set.size() && same; ++i) {
    for (std::size_t j = 0; j < base.size(); ++j) {
      if (after.p.data()[i * expanded.size() + j] != before.p.data()[i * base.size() + j]) {
        same = false;
        break;
      }
    }
  }
  out.check(same, "existing-profile scores bitwise unchanged over " + std::to_string(old_set.size()) + " utterances");

  auto all_ids = r.world.registry.ids();
  all_ids.insert(all_ids.end(), new_ids.begin(), new_ids.end());
  auto refreshed = bootstrap::refresh(r.split.train, r.world.new_train, {}, all_ids, r.expanded_profiles, ecfg.train);
  double refresh_total = 0.0;
  for (const auto& m : refreshed.metrics) refresh_total += m.seconds;
  const double refresh_epoch = refresh_total / static_cast<double>(refreshed.metrics.size());
  // Expand's one-off encoding and projection are charged to its epochs.
  double expand_total = report.encode_seconds + report.projection_seconds;
  for (const auto& m : report.epochs) expand_total += m.seconds;
  const double expand_epoch = expand_total / static_cast<double>(report.epochs.size());
  out.check(expand_epoch * kExpandSpeedup <= refresh_epoch,
            "per-epoch Expand " + num(expand_epoch) + " s (incl. encoding) vs Refresh " + num(refresh_epoch) +
                " s, ratio " + num(refresh_epoch / expand_epoch));

  auto new_top1 = [&](const Model& m, Scope scope) {
    const auto set = evaluation::resolve(m, r.world.new_test, r.expanded_profiles);
    return evaluation::top_n_accuracy(m, set, scope, {1}).accuracy[0];
  };
  const double exp_en = new_top1(expanded, Scope::kEnabled), ref_en = new_top1(refreshed.model, Scope::kEnabled);
  out.check(exp_en >= ref_en - kExpandAccuracyGap,
            "new-skill top-1 (enabled scope) Expand " + pct(exp_en) + " vs Refresh " + pct(ref_en));
  out.info("new-skill top-1 (full scope) Expand " + pct(new_top1(expanded, Scope::kFull)) + " vs Refresh " +
           pct(new_top1(refreshed.model, Scope::kFull)));
  const double secs = seconds_since(t0);
  out.check(secs < kBootstrapSeconds, "expand + refresh runtime " + num(secs) + " s");
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 5: attention ranking over enabled skills vs all skills.

Outcome criterion_scope(int min_enabled) {
  Outcome out;
  for (auto seed : kSeeds) {
    auto& r = seed_run(seed);
    const Model& model = trained(r, Variant::kMultiTask, PersonalizationMode::kAttention);
    const auto set = evaluation::resolve(model, r.split.test, r.profiles);
    const auto scores = personalization::score(model, set.utterances, set.enabled);
    const auto a = evaluation::attention_top_n(model, scores, set, {1}, min_enabled);
    const double full = a.full.accuracy[0], enabled = a.enabled.accuracy[0], random = a.random_enabled[0];
    const std::string s = "seed " + std::to_string(seed) + ": ";
    out.check(enabled - full >= kScopeGap, s + "attention top-1 Enabled " + pct(enabled) + " vs Full " + pct(full) +
                                               " over " + std::to_string(a.kept) + " utterances (users with > " +
                                               std::to_string(min_enabled) + " skills)");
    out.check(enabled >= kRandomMultiple * random, s + "Enabled " + pct(enabled) + " vs random 1/k " + pct(random) +
                                                       " (mean k " + num(a.mean_k_enabled) + ")");
    const double c_full = evaluation::top_n_accuracy(model, scores, set, Scope::kFull, {1}).accuracy[0];
    const double c_en = evaluation::top_n_accuracy(model, scores, set, Scope::kEnabled, {1}).accuracy[0];
    out.info(s + "classifier top-1 Full " + pct(c_full) + ", Enabled " + pct(c_en));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 6: binomial binarization and the correlation study.

std::vector<double> confidences(const Model& model, const std::vector<evaluation::BinarizedRecord>& records,
                                const evaluation::ProfileIndex& profiles) {
  std::vector<personalization::Tokens> utts;
  std::vector<std::vector<int>> enabled;
  for (const auto& rec : records) {
    utts.push_back(corpus::normalize(rec.text));
    enabled.push_back(personalization::enabled_indices(model, profiles.at(rec.user_id)));
  }
  const auto t = personalization::score(model, utts, enabled);
  std::vector<double> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.push_back(t.p.data()[i * model.size() + static_cast<std::size_t>(model.skill_index(records[i].skill_id))]);
  }
  return out;
}

Outcome criterion_correlation() {
  Outcome out;
  const double mass = evaluation::binomial_cdf(0, 10, 0.4);
  out.check(std::abs(mass - std::pow(0.6, 10)) < 1e-15 && std::abs(mass - 0.00605) < 5e-6 &&
                evaluation::binarize_group(10, 0) == 0,
            "n=10 s=0: P(X<=0) = " + num(mass, 6) + " -> label 0");
  out.check(evaluation::binarize_group(10, 4) == -1, "n=10 s=4: discarded");
  const double tail = evaluation::binomial_upper_tail(9, 10, 0.4);
  out.check(std::abs(tail - 0.00168) < 5e-6 && evaluation::binarize_group(10, 9) == 1,
            "n=10 s=9: P(X>=9) = " + num(tail, 6) + " -> label 1");

  auto& r = seed_run(kSeeds[0]);
  const Model& attention = trained(r, Variant::kMultiTask, PersonalizationMode::kAttention);
  const Model& multiclass = trained(r, Variant::kMultiClass, PersonalizationMode::kNone);

  // Each test utterance is suggested either its labeled skill or another
  // enabled skill; acceptance follows the attention model's confidence.
  Rng rng(r.seed ^ 0x636f7272ULL);
  std::vector<evaluation::SuggestionGroup> groups;
  for (std::size_t i = 0; i < r.split.test.size() && groups.size() < 2000; ++i) {
    const auto& inst = r.split.test[i];
    const auto& enabled = r.profiles.at(inst.user_id);
    std::string skill = inst.skill_id;
    if (rng.bernoulli(0.5) && enabled.size() > 1) {
      do {
        skill = enabled[rng.below(enabled.size())];
      } while (skill == inst.skill_id);
    }
    groups.push_back({inst.user_id, corpus::join_tokens(inst.tokens), skill, 0.0});
  }
  {
    std::vector<evaluation::BinarizedRecord> probe;
    for (const auto& g : groups) probe.push_back({g.user_id, g.text, g.skill_id, 0, 0, 0});
    const auto conf = confidences(attention, probe, r.profiles);
    for (std::size_t i = 0; i < groups.size(); ++i) groups[i].acceptance = conf[i];
  }
  const auto log = evaluation::simulate_suggestions(groups, 10, 0.1, rng);
  const auto bin = evaluation::binomial_binarize(log);
  std::vector<double> labels;
  for (const auto& rec : bin.records) labels.push_back(rec.label);
  const double r_att = evaluation::pearson_correlation(confidences(attention, bin.records, r.profiles), labels);
  const double r_mc = evaluation::pearson_correlation(confidences(multiclass, bin.records, r.profiles), labels);
  out.info(std::to_string(bin.groups) + " suggestion groups, " + std::to_string(bin.records.size()) + " kept, " +
           std::to_string(bin.discarded) + " discarded");
  out.check(r_att > r_mc, "Pearson r Attention " + num(r_att) + " vs MultiClass " + num(r_mc));
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 7: determinism and serialization.

Outcome criterion_determinism() {
  Outcome out;
  io::RunConfig cfg;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"seed", "7"},
           {"synth.num_skills", "8"},
           {"synth.num_categories", "2"},
           {"synth.num_users", "30"},
           {"synth.enablement_mean", "4"},
           {"synth.utterances_per_skill", "60"},
           {"synth.commands_per_category", "20"},
           {"model.char_emb_dim", "4"},
           {"model.char_hidden", "4"},
           {"model.word_emb_dim", "8"},
           {"model.word_hidden", "8"},
           {"model.embedding_dim", "16"},
           {"train.epochs", "2"}}) {
    cfg.set(k, v);
  }
  const auto world = synth::generate_world(cfg.world());
  auto filter = cfg.filter();
  for (const auto& s : world.registry.shared_intents()) filter.shared_intents.insert(s);
  const auto data = weak::build_weak_dataset(world.log, world.patterns, world.registry, filter);
  const auto split = corpus::split_by_user_time(data.instances, cfg.split(), cfg.seed());
  const auto profiles = evaluation::index_profiles(world.profiles);

  for (const std::string variant : {"multitask", "multiclass", "binary"}) {
    for (const std::string negatives : {"exact", "sampled"}) {
      if (variant != "multitask" && negatives == "sampled") continue;
      auto c = cfg;
      c.set("model.variant", variant);
      c.set("model.mode", variant == "multitask" ? "one_bit_and_attention" : "none");
      c.set("train.negatives", negatives);
      std::vector<std::string> digests;
      std::string bytes;
      for (int run = 0; run < 2; ++run) {
        auto result = training::train(split.train, split.validation, world.registry.ids(), profiles, c.train());
        bytes = io::encode_checkpoint({std::move(result.model), {{"config", c.to_json()}}});
        digests.push_back(io::checkpoint_digest(bytes));
      }
      const std::string tag = variant + "/" + negatives + ": ";
      out.check(digests[0] == digests[1], tag + "identical config gives identical digest " + digests[0].substr(0, 12));
      const auto loaded = io::decode_checkpoint(bytes);
      out.check(io::encode_checkpoint(loaded) == bytes, tag + "save-load-save bitwise stable");
      bool stable = true;
      for (std::size_t i = 0; i < split.test.size() && i < 100; ++i) {
        const auto& inst = split.test[i];
        const auto a = personalization::classify(io::decode_checkpoint(bytes).model, inst.tokens,
                                                 profiles.at(inst.user_id), Scope::kFull, 5);
        const auto b = personalization::classify(loaded.model, inst.tokens, profiles.at(inst.user_id), Scope::kFull, 5);
        for (std::size_t j = 0; j < a.size(); ++j) stable = stable && a[j].skill_id == b[j].skill_id && a[j].score == b[j].score;
      }
      out.check(stable, tag + "inference identical across load cycles");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 8: invariant suites.

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.uniform(-scale, scale);
  return t;
}

Outcome criterion_invariants() {
  Outcome out;
  Rng rng(8);

  int simplex_ok = 0;
  for (int c = 0; c < kPropertyCases; ++c) {
    const std::size_t m = 1 + rng.below(24), k = 1 + rng.below(30);
    const auto h = random_tensor({m}, rng, 40.0);
    std::vector<Tensor> es;
    for (std::size_t j = 0; j < k; ++j) es.push_back(random_tensor({m}, rng, 40.0));
    std::vector<const Tensor*> ptrs;
    for (const auto& e : es) ptrs.push_back(&e);
    const auto a = personalization::attend(h, ptrs);
    double sum = 0.0;
    bool ok = a.weights.size() == k;
    for (double w : a.weights) {
      ok = ok && w >= 0.0 && w <= 1.0;
      sum += w;
    }
    for (std::size_t d = 0; d < m && ok; ++d) {
      double lo = es[0][d], hi = es[0][d];
      for (const auto& e : es) {
        lo = std::min(lo, e[d]);
        hi = std::max(hi, e[d]);
      }
      ok = a.context[d] >= lo - 1e-9 && a.context[d] <= hi + 1e-9;
    }
    simplex_ok += ok && std::abs(sum - 1.0) <= 1e-12;
  }
  out.check(simplex_ok == kPropertyCases, "attention simplex and convex context: " + std::to_string(simplex_ok) + "/" +
                                              std::to_string(kPropertyCases));

  int balance_ok = 0;
  for (int c = 0; c < kPropertyCases; ++c) {
    const double p = rng.uniform(1e-6, 1.0 - 1e-6);
    balance_ok += training::positive_loss(p) == training::negative_loss({p});
  }
  out.check(balance_ok == kPropertyCases, "loss balancing at k=2: " + std::to_string(balance_ok) + "/" +
                                              std::to_string(kPropertyCases));

  int independence_ok = 0;
  {
    const int k = 6;
    const auto data = tiny_data(k, 5);
    const auto profiles = tiny_profiles(k, rng);
    std::vector<std::unique_ptr<Model>> models;
    for (auto mode : {PersonalizationMode::kNone, PersonalizationMode::kOneBit}) {
      models.push_back(std::make_unique<Model>(
          training::init_model(data, tiny_ids(k), tiny_config(Variant::kMultiTask, mode, 5))));
    }
    for (int c = 0; c < kPropertyCases; ++c) {
      Model& model = *models[static_cast<std::size_t>(c) % models.size()];
      const auto& inst = data[rng.below(data.size())];
      const std::vector<personalization::Tokens> utt = {inst.tokens};
      const std::vector<std::vector<int>> en = {personalization::enabled_indices(model, profiles.count(inst.user_id) ? profiles.at(inst.user_id) : std::vector<std::string>{})};
      const auto before = personalization::score(model, utt, en).p;
      const std::string victim = model.skills[rng.below(model.size())];
      auto& w = model.params.at(Model::head_w_path(victim)).value;
      const Tensor saved = w;
      for (auto& x : w.data()) x += rng.uniform(-1.0, 1.0);
      const auto after = personalization::score(model, utt, en).p;
      w = saved;
      bool ok = true;
      for (std::size_t j = 0; j < model.size(); ++j) {
        const bool changed = after[j] != before[j];
        ok = ok && (model.skills[j] == victim || !changed);
      }
      independence_ok += ok;
    }
  }
  out.check(independence_ok == kPropertyCases, "per-skill score independence: " + std::to_string(independence_ok) +
                                                   "/" + std::to_string(kPropertyCases));

  int projection_ok = 0;
  {
    const std::size_t m = 8;
    std::vector<Tensor> h, e;
    for (int j = 0; j < 20; ++j) {
      h.push_back(random_tensor({m}, rng, 1.0));
      e.push_back(random_tensor({m}, rng, 1.0));
    }
    const auto p = bootstrap::learn_projection(h, e, 0.0);
    for (int c = 0; c < kPropertyCases; ++c) {
      Tensor u = p.u;
      const double size = std::pow(10.0, rng.uniform(-4.0, 0.0));
      for (auto& x : u.data()) x += size * rng.uniform(-1.0, 1.0);
      projection_ok += p.residual <= bootstrap::projection_residual(u, h, e);
    }
  }
  out.check(projection_ok == kPropertyCases, "projection optimality vs perturbations: " +
                                                 std::to_string(projection_ok) + "/" + std::to_string(kPropertyCases));

  int monotone_ok = 0;
  {
    personalization::ModelSpec spec;
    spec.encoder = kTiny;
    spec.embedding_dim = static_cast<int>(kTiny.output_dim());
    const auto model = Model::create(spec, tiny_ids(12), encoder::WordVocab({"x"}), 1);
    for (int c = 0; c < kPropertyCases; ++c) {
      const std::size_t n = 1 + rng.below(30);
      personalization::ScoreTable t;
      t.p = Tensor({n, model.size()});
      for (auto& x : t.p.data()) x = rng.bernoulli(0.2) ? 0.5 : rng.uniform();  // ties exercise the tie-break
      evaluation::LabeledSet set;
      for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(rng.below(model.size()));
        std::vector<int> enabled = {label};
        for (int j = 0; j < static_cast<int>(model.size()); ++j) {
          if (j != label && rng.bernoulli(0.3)) enabled.push_back(j);
        }
        set.utterances.push_back({"x"});
        set.labels.push_back(label);
        set.enabled.push_back(enabled);
      }
      std::vector<int> ns;
      for (int v = 1; v <= static_cast<int>(model.size()); ++v) ns.push_back(v);
      bool ok = true;
      for (auto scope : {Scope::kFull, Scope::kEnabled}) {
        const auto acc = evaluation::top_n_accuracy(model, t, set, scope, ns).accuracy;
        for (std::size_t i = 1; i < acc.size(); ++i) ok = ok && acc[i] >= acc[i - 1];
        ok = ok && acc.back() == 1.0;
      }
      monotone_ok += ok;
    }
  }
  out.check(monotone_ok == kPropertyCases, "top-N monotone in N: " + std::to_string(monotone_ok) + "/" +
                                               std::to_string(kPropertyCases));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  int min_enabled = io::EvalConfig().attention_min_enabled;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", criterion_gradients},
      {"weak-supervision golden", criterion_golden},
      {"personalization ladder", criterion_ladder},
      {"expand vs refresh", criterion_bootstrap},
      {"enabled vs full attention ranking", [&] { return criterion_scope(min_enabled); }},
      {"correlation study", criterion_correlation},
      {"determinism and serialization", criterion_determinism},
      {"invariant suites", criterion_invariants},
  };
  bool all = true;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    std::string detail;
    for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + " (" +
                             criteria[i].first + ", " + num(seconds_since(t0)) + " s): " + detail;
    std::cout << line << std::endl;
    lines.push_back(line);
    all = all && o.pass;
  }
  std::cout << "\nSUMMARY\n";
  for (const auto& l : lines) std::cout << l.substr(0, l.find(':')) << '\n';
  return all ? 0 : 1;
}

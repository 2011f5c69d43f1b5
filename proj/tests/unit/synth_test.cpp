#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "skillrouter/corpus/normalize.hpp"
#include "skillrouter/synth/world.hpp"
#include "skillrouter/weak/pipeline.hpp"

using namespace skillrouter;
using namespace skillrouter::synth;

namespace {

WorldConfig small_config() {
  WorldConfig cfg;
  cfg.num_skills = 12;
  cfg.num_categories = 3;
  cfg.num_users = 60;
  cfg.utterances_per_skill = 120;
  cfg.commands_per_category = 40;
  return cfg;
}

WorldConfig noise_free(WorldConfig cfg) {
  cfg.char_corruption_rate = 0.0;
  cfg.short_command_rate = 0.0;
  cfg.shared_intent_rate = 0.0;
  cfg.catch_all_rate = 0.0;
  cfg.no_pattern_rate = 0.0;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// command text -> skills it was issued to, from the noise-free weak matches
std::map<std::string, std::set<std::string>> command_owners(const World& w) {
  std::map<std::string, std::set<std::string>> owners;
  for (const auto& c : weak::match_log(w.log, w.patterns, w.registry)) {
    owners[corpus::join_tokens(c.weak.command_tokens)].insert(c.weak.skill_id);
  }
  return owners;
}

}  // namespace

TEST_CASE("preferred skill is the cyclic tournament winner") {
  // In a category of 3 the preference is a rock-paper-scissors cycle.
  CHECK(preferred_skill({0, 1}, 3) == 0);
  CHECK(preferred_skill({1, 2}, 3) == 1);
  CHECK(preferred_skill({0, 2}, 3) == 2);
  CHECK(preferred_skill({0, 1, 2}, 3) == 0);
  CHECK(preferred_skill({4}, 6) == 4);
}

TEST_CASE("identical seeds give byte-identical worlds") {
  auto cfg = small_config();
  cfg.new_skills = 1;
  cfg.new_train_per_skill = 50;
  cfg.new_test_per_skill = 20;
  auto base = std::filesystem::temp_directory_path() / "skillrouter_synth_test";
  write_world(generate_world(cfg), base / "a");
  write_world(generate_world(cfg), base / "b");
  for (const auto& entry : std::filesystem::directory_iterator(base / "a")) {
    CHECK(slurp(entry.path()) == slurp(base / "b" / entry.path().filename()));
  }
  cfg.seed = 2;
  write_world(generate_world(cfg), base / "c");
  CHECK(slurp(base / "a" / "log.jsonl") != slurp(base / "c" / "log.jsonl"));
}

TEST_CASE("zero overlap gives every command a single owner") {
  auto cfg = noise_free(small_config());
  cfg.overlap_factor = 0.0;
  auto w = generate_world(cfg);
  for (const auto& [cmd, owners] : command_owners(w)) {
    INFO(cmd);
    CHECK(owners.size() == 1);
  }
}

TEST_CASE("high overlap shares most commands between skills") {
  auto cfg = noise_free(small_config());
  cfg.overlap_factor = 0.8;
  auto w = generate_world(cfg);
  auto owners = command_owners(w);
  std::size_t shared = 0;
  for (const auto& [cmd, s] : owners) shared += s.size() >= 2;
  const double frac = static_cast<double>(shared) / static_cast<double>(owners.size());
  CHECK(frac >= 0.5);
}

TEST_CASE("noise-free worlds label every line exactly as the oracle does") {
  auto w = generate_world(noise_free(small_config()));
  auto matched = weak::match_log(w.log, w.patterns, w.registry);
  CHECK(matched.size() == w.log.size());
  for (const auto& c : matched) {
    REQUIRE(w.truth.skill_of.count(c.source_utterance.id) == 1);
    CHECK(c.weak.skill_id == w.truth.skill_of.at(c.source_utterance.id));
  }
}

TEST_CASE("users only invoke skills they enabled") {
  auto w = generate_world(small_config());
  std::map<std::string, std::set<std::string>> enabled;
  for (const auto& p : w.profiles) enabled[p.user_id] = {p.enabled.begin(), p.enabled.end()};
  for (const auto& u : w.log) {
    const auto& skill = w.truth.skill_of.at(u.id);
    CHECK(enabled[u.user_id].count(skill) == 1);
  }
}

TEST_CASE("new skills reuse most of the existing vocabulary") {
  auto cfg = small_config();
  cfg.new_skills = 2;
  cfg.new_train_per_skill = 300;
  cfg.new_test_per_skill = 100;
  auto w = generate_world(cfg);
  std::set<std::string> known;
  for (const auto& u : w.log) known.insert(u.tokens.begin(), u.tokens.end());
  std::set<std::string> vocab;
  std::size_t tokens = 0, covered = 0;
  for (const auto* set : {&w.new_train, &w.new_test}) {
    for (const auto& i : *set) {
      vocab.insert(i.tokens.begin(), i.tokens.end());
      for (const auto& t : i.tokens) {
        ++tokens;
        covered += known.count(t);
      }
    }
  }
  std::size_t known_types = 0;
  for (const auto& t : vocab) known_types += known.count(t);
  CHECK(static_cast<double>(known_types) / static_cast<double>(vocab.size()) ==
        doctest::Approx(0.95).epsilon(0.03));
  CHECK(static_cast<double>(covered) / static_cast<double>(tokens) ==
        doctest::Approx(0.95).epsilon(0.03));
  CHECK(w.new_train.size() == 600);
  CHECK(w.new_test.size() == 200);

  std::set<std::vector<std::string>> train_cmds;
  for (const auto& i : w.new_train) train_cmds.insert(i.tokens);
  for (const auto& i : w.new_test) CHECK(train_cmds.count(i.tokens) == 0);
  CHECK(w.expanded_profiles.size() == w.profiles.size());
}

TEST_CASE("paraphrase split holds out rewritten instances") {
  std::vector<corpus::Instance> items;
  for (int i = 0; i < 1000; ++i) {
    items.push_back({"i" + std::to_string(i), "u", {"get", "me", "a", "car"}, "uber", "p_ask_to", i});
  }
  auto split = paraphrase_split(items, 0.1, 3, {{"get", "fetch"}, {"car", "ride"}});
  CHECK(split.held_out.size() + split.remaining.size() == items.size());
  CHECK(split.held_out.size() == doctest::Approx(100).epsilon(0.4));
  for (const auto& h : split.held_out) {
    CHECK(h.id.rfind("para_", 0) == 0);
    CHECK(h.tokens == std::vector<std::string>{"fetch", "me", "ride"});
    CHECK(h.skill_id == "uber");
  }
  CHECK(paraphrase_split(items, 0.0, 3, {}).held_out.empty());
  CHECK(paraphrase_split(items, 1.0, 3, {}).remaining.empty());
}

TEST_CASE("invalid configurations are rejected") {
  auto cfg = small_config();
  cfg.overlap_factor = 1.5;
  CHECK_THROWS_AS(generate_world(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.num_categories = cfg.num_skills + 1;
  CHECK_THROWS_AS(generate_world(cfg), std::invalid_argument);
}

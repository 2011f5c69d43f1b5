#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "skillrouter/corpus/types.hpp"

namespace skillrouter::synth {

struct WorldConfig {
  int num_skills = 30;
  int num_categories = 5;
  double overlap_factor = 0.8;  // share of a category's traffic on its shared command pool
  int num_users = 200;
  double enablement_mean = 8.0;
  int utterances_per_skill = 700;
  double char_corruption_rate = 0.02;
  double short_command_rate = 0.02;
  double shared_intent_rate = 0.02;
  double catch_all_rate = 0.01;    // lines sent through a registry-flagged catch-all pattern
  double no_pattern_rate = 0.01;   // bare commands without an invocation
  double preference_strength = 0.9;  // probability a shared command goes to the preferred skill
  int commands_per_category = 100;
  std::uint64_t seed = 1;

  // Held-out skills for the bootstrap protocol.
  int new_skills = 0;
  int new_train_per_skill = 3000;
  int new_test_per_skill = 1000;
  double new_novel_word_rate = 0.05;
  double new_skill_adoption = 0.3;  // fraction of users who enable each new skill

  void validate() const;
};

struct GroundTruth {
  std::map<std::string, std::string> skill_of;     // utterance id -> skill_id
  std::map<std::string, std::string> category_of;  // skill_id -> category
};

struct World {
  corpus::SkillRegistry registry;
  std::vector<corpus::QueryPattern> patterns;
  std::vector<corpus::UserProfile> profiles;
  std::vector<corpus::Utterance> log;
  GroundTruth truth;

  std::vector<corpus::Skill> new_skills;
  std::vector<corpus::Instance> new_train;
  std::vector<corpus::Instance> new_test;
  std::vector<corpus::UserProfile> expanded_profiles;  // profiles plus new-skill adoptions
};

World generate_world(const WorldConfig& cfg);

// Within-category preference used to resolve shared commands: skill index i
// beats j when j follows i by less than half the category size (ties at
// exactly half go to the lower index). This is cyclic, so no per-skill score
// reproduces it. Returns the Copeland winner among `enabled` (indices within
// the category), lowest index on ties.
int preferred_skill(const std::vector<int>& enabled, int category_size);

// Writes skills.jsonl, patterns.jsonl, shared_intents.txt, profiles.jsonl,
// log.jsonl, ground_truth.jsonl and, when present, new_skills.jsonl,
// new_train.jsonl, new_test.jsonl, profiles_expanded.jsonl.
void write_world(const World& world, const std::filesystem::path& dir);

std::map<std::string, std::string> default_synonyms();

struct ParaphraseResult {
  std::vector<corpus::Instance> held_out;
  std::vector<corpus::Instance> remaining;
};

// Samples each instance with probability `rate`, rewrites the sampled ones
// without their template (synonym substitution, article dropping) and
// removes them from the remaining set.
ParaphraseResult paraphrase_split(const std::vector<corpus::Instance>& items, double rate,
                                  std::uint64_t seed,
                                  const std::map<std::string, std::string>& synonyms);

}  // namespace skillrouter::synth

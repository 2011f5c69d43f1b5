#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace skillrouter::corpus {

struct Utterance {
  std::string id;  // optional in log files; synthetic logs always set it
  std::string user_id;
  std::string text;
  std::vector<std::string> tokens;
  std::int64_t timestamp = 0;
};

struct Skill {
  std::string skill_id;
  std::vector<std::string> aliases;
  std::set<std::string> catch_all_pattern_ids;
  std::string category;
};

struct QueryPattern {
  std::string pattern_id;
  std::string template_text;  // e.g. "ask {skill} to {command}"
};

struct WeakSample {
  std::vector<std::string> command_tokens;
  std::string skill_id;
  std::string pattern_id;
  std::int64_t count = 1;

  auto key() const { return std::tie(command_tokens, skill_id, pattern_id); }
  bool operator==(const WeakSample&) const = default;
};

struct UserProfile {
  std::string user_id;
  std::vector<std::string> enabled;
  bool operator==(const UserProfile&) const = default;
};

// One user-attributed training example: a weakly labeled command plus the
// log line it came from.
struct Instance {
  std::string id;
  std::string user_id;
  std::vector<std::string> tokens;
  std::string skill_id;
  std::string pattern_id;
  std::int64_t timestamp = 0;
  bool operator==(const Instance&) const = default;
};

struct DatasetSplit {
  std::vector<Instance> train;
  std::vector<Instance> validation;
  std::vector<Instance> test;
  std::string split_policy = "user-time";
  std::size_t clipped = 0;  // lines dropped to keep the time ordering strict
};

class SkillRegistry {
 public:
  SkillRegistry() = default;
  SkillRegistry(std::vector<Skill> skills, std::vector<std::string> shared_intents);

  const std::vector<Skill>& skills() const { return skills_; }
  const std::vector<std::string>& shared_intents() const { return shared_intents_; }
  std::size_t size() const { return skills_.size(); }
  bool contains(const std::string& skill_id) const { return index_.count(skill_id) != 0; }
  const Skill& at(const std::string& skill_id) const;
  std::vector<std::string> ids() const;
  bool is_catch_all(const std::string& skill_id, const std::string& pattern_id) const;

 private:
  std::vector<Skill> skills_;
  std::vector<std::string> shared_intents_;
  std::map<std::string, std::size_t> index_;
};

// Throws std::invalid_argument with a reason when an invariant fails.
void validate(const Skill& s);
void validate(const QueryPattern& p);
void validate(const WeakSample& w);
void validate(const UserProfile& p, const SkillRegistry& registry);

void to_json(nlohmann::json& j, const Utterance& u);
void from_json(const nlohmann::json& j, Utterance& u);
void to_json(nlohmann::json& j, const Skill& s);
void from_json(const nlohmann::json& j, Skill& s);
void to_json(nlohmann::json& j, const QueryPattern& p);
void from_json(const nlohmann::json& j, QueryPattern& p);
void to_json(nlohmann::json& j, const WeakSample& w);
void from_json(const nlohmann::json& j, WeakSample& w);
void to_json(nlohmann::json& j, const UserProfile& p);
void from_json(const nlohmann::json& j, UserProfile& p);
void to_json(nlohmann::json& j, const Instance& i);
void from_json(const nlohmann::json& j, Instance& i);

}  // namespace skillrouter::corpus

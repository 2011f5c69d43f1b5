#include "skillrouter/corpus/types.hpp"

#include <stdexcept>

#include "skillrouter/corpus/normalize.hpp"

namespace skillrouter::corpus {

using nlohmann::json;

SkillRegistry::SkillRegistry(std::vector<Skill> skills, std::vector<std::string> shared_intents)
    : skills_(std::move(skills)), shared_intents_(std::move(shared_intents)) {
  for (std::size_t i = 0; i < skills_.size(); ++i) {
    validate(skills_[i]);
    if (!index_.emplace(skills_[i].skill_id, i).second) {
      throw std::invalid_argument("duplicate skill_id '" + skills_[i].skill_id + "'");
    }
  }
}

const Skill& SkillRegistry::at(const std::string& skill_id) const {
  auto it = index_.find(skill_id);
  if (it == index_.end()) throw std::invalid_argument("unknown skill_id '" + skill_id + "'");
  return skills_[it->second];
}

std::vector<std::string> SkillRegistry::ids() const {
  std::vector<std::string> out;
  out.reserve(skills_.size());
  for (const Skill& s : skills_) out.push_back(s.skill_id);
  return out;
}

bool SkillRegistry::is_catch_all(const std::string& skill_id,
                                 const std::string& pattern_id) const {
  auto it = index_.find(skill_id);
  return it != index_.end() && skills_[it->second].catch_all_pattern_ids.count(pattern_id) != 0;
}

void validate(const Skill& s) {
  if (s.skill_id.empty()) throw std::invalid_argument("skill with empty skill_id");
  if (s.aliases.empty()) throw std::invalid_argument("skill '" + s.skill_id + "' has no aliases");
  for (const auto& a : s.aliases) {
    if (normalize(a).empty()) {
      throw std::invalid_argument("skill '" + s.skill_id + "' has an empty alias");
    }
  }
}

namespace {

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

void validate(const QueryPattern& p) {
  if (p.pattern_id.empty()) throw std::invalid_argument("pattern with empty pattern_id");
  if (count_occurrences(p.template_text, "{skill}") != 1 ||
      count_occurrences(p.template_text, "{command}") != 1) {
    throw std::invalid_argument("pattern '" + p.pattern_id +
                                "' must contain {skill} and {command} exactly once");
  }
}

void validate(const WeakSample& w) {
  if (w.count < 1) throw std::invalid_argument("weak sample count must be >= 1");
  if (w.command_tokens.empty()) throw std::invalid_argument("weak sample has no command tokens");
  if (w.skill_id.empty()) throw std::invalid_argument("weak sample has no skill_id");
}

void validate(const UserProfile& p, const SkillRegistry& registry) {
  std::set<std::string> seen;
  for (const auto& id : p.enabled) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("profile '" + p.user_id + "' enables '" + id + "' twice");
    }
    if (!registry.contains(id)) {
      throw std::invalid_argument("profile '" + p.user_id + "' enables unknown skill '" + id +
                                  "'");
    }
  }
}

void to_json(json& j, const Utterance& u) {
  j = json{{"user_id", u.user_id}, {"text", u.text}, {"timestamp", u.timestamp}};
  if (!u.id.empty()) j["id"] = u.id;
}

void from_json(const json& j, Utterance& u) {
  u.user_id = j.at("user_id").get<std::string>();
  u.text = j.at("text").get<std::string>();
  u.timestamp = j.at("timestamp").get<std::int64_t>();
  u.id = j.contains("id") ? j.at("id").get<std::string>() : std::string{};
  u.tokens = normalize(u.text);
}

void to_json(json& j, const Skill& s) {
  j = json{{"skill_id", s.skill_id},
           {"aliases", s.aliases},
           {"catch_all_pattern_ids", s.catch_all_pattern_ids},
           {"category", s.category}};
}

void from_json(const json& j, Skill& s) {
  s.skill_id = j.at("skill_id").get<std::string>();
  s.aliases = j.at("aliases").get<std::vector<std::string>>();
  s.catch_all_pattern_ids = j.value("catch_all_pattern_ids", std::set<std::string>{});
  s.category = j.value("category", std::string{});
  validate(s);
}

void to_json(json& j, const QueryPattern& p) {
  j = json{{"pattern_id", p.pattern_id}, {"template", p.template_text}};
}

void from_json(const json& j, QueryPattern& p) {
  p.pattern_id = j.at("pattern_id").get<std::string>();
  p.template_text = j.at("template").get<std::string>();
  validate(p);
}

void to_json(json& j, const WeakSample& w) {
  j = json{{"command_tokens", w.command_tokens},
           {"skill_id", w.skill_id},
           {"pattern_id", w.pattern_id},
           {"count", w.count}};
}

void from_json(const json& j, WeakSample& w) {
  w.command_tokens = j.at("command_tokens").get<std::vector<std::string>>();
  w.skill_id = j.at("skill_id").get<std::string>();
  w.pattern_id = j.at("pattern_id").get<std::string>();
  w.count = j.at("count").get<std::int64_t>();
  validate(w);
}

void to_json(json& j, const UserProfile& p) {
  j = json{{"user_id", p.user_id}, {"enabled", p.enabled}};
}

void from_json(const json& j, UserProfile& p) {
  p.user_id = j.at("user_id").get<std::string>();
  p.enabled = j.at("enabled").get<std::vector<std::string>>();
}

void to_json(json& j, const Instance& i) {
  j = json{{"id", i.id},           {"user_id", i.user_id},       {"tokens", i.tokens},
           {"skill_id", i.skill_id}, {"pattern_id", i.pattern_id}, {"timestamp", i.timestamp}};
}

void from_json(const json& j, Instance& i) {
  i.id = j.at("id").get<std::string>();
  i.user_id = j.at("user_id").get<std::string>();
  i.tokens = j.at("tokens").get<std::vector<std::string>>();
  i.skill_id = j.at("skill_id").get<std::string>();
  i.pattern_id = j.value("pattern_id", std::string{});
  i.timestamp = j.at("timestamp").get<std::int64_t>();
  if (i.tokens.empty()) throw std::invalid_argument("instance '" + i.id + "' has no tokens");
}

}  // namespace skillrouter::corpus

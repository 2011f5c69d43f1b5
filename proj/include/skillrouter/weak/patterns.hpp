#pragma once

#include <optional>
#include <string>
#include <vector>

#include "skillrouter/corpus/types.hpp"

namespace skillrouter::weak {

struct Candidate {
  corpus::WeakSample weak;
  corpus::Utterance source_utterance;
};

// Token-level matcher for "literal {skill} literal {command} literal"
// templates. When several (pattern, skill) bindings fit one utterance the
// longest alias wins, then the template with more literal tokens, then the
// earlier pattern, then the smaller skill_id.
class PatternMatcher {
 public:
  PatternMatcher(const std::vector<corpus::QueryPattern>& patterns,
                 const corpus::SkillRegistry& registry);

  std::optional<Candidate> match(const corpus::Utterance& u) const;

 private:
  struct Compiled {
    std::string pattern_id;
    std::vector<std::string> prefix, middle, suffix;
    bool skill_first = true;
    std::size_t literals = 0;
  };
  struct Alias {
    std::vector<std::string> tokens;
    std::string skill_id;
  };
  std::vector<Compiled> patterns_;
  std::vector<Alias> aliases_;  // longest first
};

std::optional<Candidate> match_pattern(const corpus::Utterance& u,
                                       const std::vector<corpus::QueryPattern>& patterns,
                                       const corpus::SkillRegistry& registry);

}  // namespace skillrouter::weak

#include "skillrouter/weak/patterns.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "skillrouter/corpus/normalize.hpp"

namespace skillrouter::weak {

namespace {

bool matches_at(const std::vector<std::string>& tokens, std::size_t pos,
                const std::vector<std::string>& literal) {
  if (pos + literal.size() > tokens.size()) return false;
  return std::equal(literal.begin(), literal.end(), tokens.begin() + static_cast<long>(pos));
}

}  // namespace

PatternMatcher::PatternMatcher(const std::vector<corpus::QueryPattern>& patterns,
                               const corpus::SkillRegistry& registry) {
  for (const auto& p : patterns) {
    corpus::validate(p);
    std::istringstream words(p.template_text);
    std::string w;
    Compiled c;
    c.pattern_id = p.pattern_id;
    int slots_seen = 0;
    while (words >> w) {
      if (w == "{skill}" || w == "{command}") {
        if (slots_seen == 0) c.skill_first = w == "{skill}";
        ++slots_seen;
        continue;
      }
      if (w.find('{') != std::string::npos) {
        throw std::invalid_argument("pattern '" + p.pattern_id +
                                    "': slots must be whitespace-separated tokens");
      }
      auto toks = corpus::normalize(w);
      auto& dst = slots_seen == 0 ? c.prefix : (slots_seen == 1 ? c.middle : c.suffix);
      dst.insert(dst.end(), toks.begin(), toks.end());
    }
    if (slots_seen != 2) {
      throw std::invalid_argument("pattern '" + p.pattern_id +
                                  "': slots must be whitespace-separated tokens");
    }
    c.literals = c.prefix.size() + c.middle.size() + c.suffix.size();
    patterns_.push_back(std::move(c));
  }
  for (const auto& s : registry.skills()) {
    for (const auto& a : s.aliases) aliases_.push_back({corpus::normalize(a), s.skill_id});
  }
  std::stable_sort(aliases_.begin(), aliases_.end(), [](const Alias& a, const Alias& b) {
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() > b.tokens.size();
    return a.skill_id < b.skill_id;
  });
}

std::optional<Candidate> PatternMatcher::match(const corpus::Utterance& u) const {
  const auto& t = u.tokens;
  struct Hit {
    std::size_t alias_len;
    std::size_t literals;
    std::size_t pattern_index;
    const Alias* alias;
    std::size_t cmd_begin, cmd_end;
  };
  std::optional<Hit> best;
  auto better = [](const Hit& a, const Hit& b) {
    if (a.alias_len != b.alias_len) return a.alias_len > b.alias_len;
    if (a.literals != b.literals) return a.literals > b.literals;
    if (a.pattern_index != b.pattern_index) return a.pattern_index < b.pattern_index;
    return a.alias->skill_id < b.alias->skill_id;
  };
  for (std::size_t pi = 0; pi < patterns_.size(); ++pi) {
    const Compiled& c = patterns_[pi];
    if (t.size() < c.literals + 2) continue;
    if (!matches_at(t, 0, c.prefix)) continue;
    if (!matches_at(t, t.size() - c.suffix.size(), c.suffix)) continue;
    const std::size_t lo = c.prefix.size();
    const std::size_t hi = t.size() - c.suffix.size();  // slots + middle live in [lo, hi)
    for (const Alias& a : aliases_) {
      const std::size_t need = a.tokens.size() + c.middle.size() + 1;
      if (hi - lo < need) continue;
      Hit h{a.tokens.size(), c.literals, pi, &a, 0, 0};
      if (c.skill_first) {
        if (!matches_at(t, lo, a.tokens) || !matches_at(t, lo + a.tokens.size(), c.middle)) {
          continue;
        }
        h.cmd_begin = lo + a.tokens.size() + c.middle.size();
        h.cmd_end = hi;
      } else {
        const std::size_t alias_at = hi - a.tokens.size();
        if (!matches_at(t, alias_at, a.tokens) ||
            !matches_at(t, alias_at - c.middle.size(), c.middle)) {
          continue;
        }
        h.cmd_begin = lo;
        h.cmd_end = alias_at - c.middle.size();
      }
      if (!best || better(h, *best)) best = h;
      break;  // aliases are sorted longest first; later ones cannot win here
    }
  }
  if (!best) return std::nullopt;
  Candidate out;
  out.weak.command_tokens.assign(t.begin() + static_cast<long>(best->cmd_begin),
                                 t.begin() + static_cast<long>(best->cmd_end));
  out.weak.skill_id = best->alias->skill_id;
  out.weak.pattern_id = patterns_[best->pattern_index].pattern_id;
  out.weak.count = 1;
  out.source_utterance = u;
  return out;
}

std::optional<Candidate> match_pattern(const corpus::Utterance& u,
                                       const std::vector<corpus::QueryPattern>& patterns,
                                       const corpus::SkillRegistry& registry) {
  return PatternMatcher(patterns, registry).match(u);
}

}  // namespace skillrouter::weak

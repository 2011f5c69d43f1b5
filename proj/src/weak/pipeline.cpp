#include "skillrouter/weak/pipeline.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "skillrouter/corpus/normalize.hpp"

namespace skillrouter::weak {

using corpus::WeakSample;

void FilterConfig::validate() const {
  if (min_tokens < 1) throw std::invalid_argument("min_tokens must be >= 1");
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  if (!(share_threshold > 0.0 && share_threshold <= 1.0)) {
    throw std::invalid_argument("catch-all share threshold must be in (0, 1]");
  }
  if (!(median_multiple > 0.0)) throw std::invalid_argument("median multiple must be > 0");
}

std::vector<Candidate> match_log(const std::vector<corpus::Utterance>& log,
                                 const std::vector<corpus::QueryPattern>& patterns,
                                 const corpus::SkillRegistry& registry) {
  PatternMatcher matcher(patterns, registry);
  std::vector<Candidate> out;
  for (const auto& u : log) {
    if (auto c = matcher.match(u)) out.push_back(std::move(*c));
  }
  return out;
}

Samples aggregate(const std::vector<Candidate>& candidates) {
  std::map<std::tuple<std::vector<std::string>, std::string, std::string>, std::int64_t> counts;
  for (const auto& c : candidates) {
    ++counts[{c.weak.command_tokens, c.weak.skill_id, c.weak.pattern_id}];
  }
  Samples out;
  out.reserve(counts.size());
  for (const auto& [key, n] : counts) {
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), n});
  }
  return out;
}

Samples generate_candidates(const std::vector<corpus::Utterance>& log,
                            const std::vector<corpus::QueryPattern>& patterns,
                            const corpus::SkillRegistry& registry) {
  return aggregate(match_log(log, patterns, registry));
}

namespace {

template <class Pred>
Samples keep_if(const Samples& samples, Pred keep) {
  Samples out;
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(out), keep);
  return out;
}

double median(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? static_cast<double>(v[n / 2])
                    : 0.5 * static_cast<double>(v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Samples filter_min_tokens(const Samples& samples, const FilterConfig& cfg) {
  return keep_if(samples, [&](const WeakSample& w) {
    return w.command_tokens.size() >= static_cast<std::size_t>(cfg.min_tokens);
  });
}

Samples filter_min_count(const Samples& samples, const FilterConfig& cfg) {
  return keep_if(samples, [&](const WeakSample& w) { return w.count >= cfg.min_count; });
}

Samples filter_catch_all(const Samples& samples, const corpus::SkillRegistry& registry,
                         const FilterConfig& cfg) {
  std::set<std::pair<std::string, std::string>> broad;
  if (cfg.catch_all_policy == CatchAllPolicy::kHeuristic) {
    // skill -> pattern -> distinct commands, and skill -> all distinct commands
    std::map<std::string, std::map<std::string, std::set<std::vector<std::string>>>> per_pattern;
    std::map<std::string, std::set<std::vector<std::string>>> per_skill;
    for (const auto& w : samples) {
      per_pattern[w.skill_id][w.pattern_id].insert(w.command_tokens);
      per_skill[w.skill_id].insert(w.command_tokens);
    }
    for (const auto& [skill, patterns] : per_pattern) {
      std::vector<std::size_t> counts;
      for (const auto& [pid, cmds] : patterns) counts.push_back(cmds.size());
      const double med = median(counts);
      const double total = static_cast<double>(per_skill[skill].size());
      for (const auto& [pid, cmds] : patterns) {
        const double n = static_cast<double>(cmds.size());
        if (n / total > cfg.share_threshold && n > cfg.median_multiple * med) {
          broad.insert({skill, pid});
        }
      }
    }
  }
  return keep_if(samples, [&](const WeakSample& w) {
    return !registry.is_catch_all(w.skill_id, w.pattern_id) &&
           broad.count({w.skill_id, w.pattern_id}) == 0;
  });
}

Samples filter_shared_intents(const Samples& samples, const FilterConfig& cfg) {
  return keep_if(samples, [&](const WeakSample& w) {
    return cfg.shared_intents.count(corpus::join_tokens(w.command_tokens)) == 0;
  });
}

nlohmann::ordered_json WeakDataset::report_json() const {
  nlohmann::ordered_json j;
  for (const auto& s : report) j[s.name] = {{"kept", s.kept}, {"discarded", s.discarded}};
  return j;
}

WeakDataset build_weak_dataset(const std::vector<corpus::Utterance>& log,
                               const std::vector<corpus::QueryPattern>& patterns,
                               const corpus::SkillRegistry& registry, const FilterConfig& cfg,
                               const std::vector<Detector>& extra) {
  cfg.validate();
  FilterConfig normalized = cfg;
  normalized.shared_intents.clear();
  for (const auto& phrase : cfg.shared_intents) {
    normalized.shared_intents.insert(corpus::join_tokens(corpus::normalize(phrase)));
  }

  WeakDataset out;
  const auto matched = match_log(log, patterns, registry);
  out.matched_lines = matched.size();
  Samples current = aggregate(matched);
  out.candidate_count = current.size();

  auto run = [&](const std::string& name, Samples next) {
    out.report.push_back({name, next.size(), current.size() - next.size()});
    current = std::move(next);
  };
  run("min_tokens", filter_min_tokens(current, normalized));
  run("min_count", filter_min_count(current, normalized));
  run("catch_all", filter_catch_all(current, registry, normalized));
  run("shared_intents", filter_shared_intents(current, normalized));
  for (const auto& d : extra) run(d.name, d.apply(current));
  out.samples = std::move(current);

  std::set<std::tuple<std::vector<std::string>, std::string, std::string>> survivors;
  for (const auto& w : out.samples) survivors.insert({w.command_tokens, w.skill_id, w.pattern_id});
  std::size_t line = 0;
  for (const auto& c : matched) {
    ++line;
    if (survivors.count({c.weak.command_tokens, c.weak.skill_id, c.weak.pattern_id}) == 0) {
      continue;
    }
    corpus::Instance inst;
    const auto& u = c.source_utterance;
    inst.id = u.id.empty() ? "match-" + std::to_string(line) : u.id;
    inst.user_id = u.user_id;
    inst.tokens = c.weak.command_tokens;
    inst.skill_id = c.weak.skill_id;
    inst.pattern_id = c.weak.pattern_id;
    inst.timestamp = u.timestamp;
    out.instances.push_back(std::move(inst));
  }
  return out;
}

}  // namespace skillrouter::weak

#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "skillrouter/corpus/types.hpp"
#include "skillrouter/weak/patterns.hpp"

namespace skillrouter::weak {

enum class CatchAllPolicy { kRegistryFlag, kHeuristic };

struct FilterConfig {
  int min_tokens = 3;
  int min_count = 2;
  CatchAllPolicy catch_all_policy = CatchAllPolicy::kRegistryFlag;
  double share_threshold = 0.5;   // heuristic: pattern's share of the skill's commands
  double median_multiple = 100.0;  // heuristic: distinct count vs median per-pattern count
  std::set<std::string> shared_intents;  // normalized phrases

  void validate() const;
};

using Samples = std::vector<corpus::WeakSample>;

// Matches every log line; lines without a match are skipped.
std::vector<Candidate> match_log(const std::vector<corpus::Utterance>& log,
                                 const std::vector<corpus::QueryPattern>& patterns,
                                 const corpus::SkillRegistry& registry);

// One sample per distinct (command, skill, pattern), count = matching lines,
// sorted by that key.
Samples aggregate(const std::vector<Candidate>& candidates);
Samples generate_candidates(const std::vector<corpus::Utterance>& log,
                            const std::vector<corpus::QueryPattern>& patterns,
                            const corpus::SkillRegistry& registry);

Samples filter_min_tokens(const Samples& samples, const FilterConfig& cfg);
Samples filter_min_count(const Samples& samples, const FilterConfig& cfg);
Samples filter_catch_all(const Samples& samples, const corpus::SkillRegistry& registry,
                         const FilterConfig& cfg);
Samples filter_shared_intents(const Samples& samples, const FilterConfig& cfg);

// Extra noise detector appended after the built-in chain.
struct Detector {
  std::string name;
  std::function<Samples(const Samples&)> apply;
};

struct FilterStat {
  std::string name;
  std::size_t kept = 0;
  std::size_t discarded = 0;
};

struct WeakDataset {
  Samples samples;
  std::vector<FilterStat> report;  // pipeline order
  std::size_t candidate_count = 0;
  std::size_t matched_lines = 0;
  // Log lines whose aggregated sample survived every filter, as training
  // instances labeled by the pattern-bound skill.
  std::vector<corpus::Instance> instances;

  nlohmann::ordered_json report_json() const;
};

WeakDataset build_weak_dataset(const std::vector<corpus::Utterance>& log,
                               const std::vector<corpus::QueryPattern>& patterns,
                               const corpus::SkillRegistry& registry, const FilterConfig& cfg,
                               const std::vector<Detector>& extra = {});

}  // namespace skillrouter::weak

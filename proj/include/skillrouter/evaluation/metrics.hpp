#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "skillrouter/corpus/types.hpp"
#include "skillrouter/numeric/rng.hpp"
#include "skillrouter/personalization/model.hpp"

namespace skillrouter::evaluation {

using personalization::Model;
using personalization::Scope;
using personalization::ScoreTable;
using personalization::Tokens;

// user_id -> enabled skill ids
using ProfileIndex = std::map<std::string, std::vector<std::string>>;
ProfileIndex index_profiles(const std::vector<corpus::UserProfile>& profiles);

// Test instances resolved against a model: token lists, label indices and
// the enabled skill indices of each instance's user. Enabled ids the model
// does not know are dropped; unknown labels throw.
struct LabeledSet {
  std::vector<Tokens> utterances;
  std::vector<int> labels;
  std::vector<std::vector<int>> enabled;
  std::size_t size() const { return labels.size(); }
};
LabeledSet resolve(const Model& model, const std::vector<corpus::Instance>& instances,
                   const ProfileIndex& profiles);

struct TopN {
  std::vector<int> n;
  std::vector<double> accuracy;
  std::size_t samples = 0;
  nlohmann::ordered_json to_json() const;
};

// Share of samples whose label is within the top-N ranked skills of `scope`.
TopN top_n_accuracy(const Model& model, const ScoreTable& scores, const LabeledSet& set, Scope scope,
                    const std::vector<int>& ns);
TopN top_n_accuracy(const Model& model, const LabeledSet& set, Scope scope, const std::vector<int>& ns);

struct AttentionTopN {
  TopN enabled;                 // ranked by attention weight over enabled skills
  TopN full;                    // ranked by attention weight over every skill
  double random_full_top_n = 0;  // expected top-N of a random ranking over all skills, at max N
  std::vector<double> random_enabled;  // mean N / k_enabled per N over the kept samples
  double mean_k_enabled = 0.0;
  std::size_t kept = 0;  // samples whose user enables more than min_enabled skills
  nlohmann::ordered_json to_json() const;
};

// Ranks each sample's enabled skills by attention weight (ties by skill id),
// and separately every skill as if the user enabled all of them. Requires an
// attention mode.
AttentionTopN attention_top_n(const Model& model, const ScoreTable& scores, const LabeledSet& set,
                              const std::vector<int>& ns, int min_enabled);

// Suggestion log record: one trial of suggesting `skill_id` for a user's
// utterance.
struct Suggestion {
  std::string user_id;
  std::string text;
  std::string skill_id;
  bool accepted = false;
};

void to_json(nlohmann::json& j, const Suggestion& s);
void from_json(const nlohmann::json& j, Suggestion& s);

// Simulated suggestion trials: each group is suggested `trials` times and
// accepted with probability clamp(acceptance + N(0, noise), 0, 1), the
// perturbation drawn once per group.
struct SuggestionGroup {
  std::string user_id;
  std::string text;
  std::string skill_id;
  double acceptance = 0.0;
};
std::vector<Suggestion> simulate_suggestions(const std::vector<SuggestionGroup>& groups, int trials, double noise,
                                             numeric::Rng& rng);

struct BinarizedRecord {
  std::string user_id;
  std::string text;
  std::string skill_id;
  int label = 0;
  int n_trials = 0;
  int n_accepts = 0;
};

struct BinarizedSet {
  std::vector<BinarizedRecord> records;
  std::size_t discarded = 0;
  std::size_t groups = 0;
};

// Exact binomial tails.
double binomial_cdf(int s, int n, double p);       // P(X <= s)
double binomial_upper_tail(int s, int n, double p);  // P(X >= s)

// Groups by (user, text, skill); label 0 when P(X <= s) < 1 - confidence,
// label 1 when P(X >= s) < 1 - confidence, otherwise discarded.
BinarizedSet binomial_binarize(const std::vector<Suggestion>& log, double p0 = 0.4,
                               double confidence = 0.95);
// Decision for a single group: 0, 1 or -1 (discard).
int binarize_group(int n, int s, double p0 = 0.4, double confidence = 0.95);

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);

// Uniform bins on [0, 1]; 1.0 falls in the last bin.
std::vector<std::size_t> histogram(const std::vector<double>& values, int bins);
void write_histogram_tsv(const std::filesystem::path& path, const std::vector<std::size_t>& counts);

}  // namespace skillrouter::evaluation

#include "skillrouter/evaluation/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "skillrouter/encoder/encoder.hpp"
#include "skillrouter/numeric/kernels.hpp"

namespace skillrouter::evaluation {

ProfileIndex index_profiles(const std::vector<corpus::UserProfile>& profiles) {
  ProfileIndex out;
  for (const auto& p : profiles) out[p.user_id] = p.enabled;
  return out;
}

LabeledSet resolve(const Model& model, const std::vector<corpus::Instance>& instances,
                   const ProfileIndex& profiles) {
  LabeledSet out;
  out.utterances.reserve(instances.size());
  for (const auto& inst : instances) {
    const int label = model.skill_index(inst.skill_id);
    if (label < 0) {
      throw std::invalid_argument("instance " + inst.id + " is labeled with unknown skill '" +
                                  inst.skill_id + "'");
    }
    std::vector<int> enabled;
    if (auto it = profiles.find(inst.user_id); it != profiles.end()) {
      for (const auto& s : it->second) {
        const int j = model.skill_index(s);
        if (j >= 0) enabled.push_back(j);
      }
    }
    out.utterances.push_back(inst.tokens);
    out.labels.push_back(label);
    out.enabled.push_back(std::move(enabled));
  }
  return out;
}

nlohmann::ordered_json TopN::to_json() const {
  nlohmann::ordered_json j;
  j["samples"] = samples;
  for (std::size_t i = 0; i < n.size(); ++i) j["top" + std::to_string(n[i])] = accuracy[i];
  return j;
}

namespace {

void check_ns(const std::vector<int>& ns) {
  if (ns.empty()) throw std::invalid_argument("top-N: empty N list");
  for (int n : ns) {
    if (n < 1) throw std::invalid_argument("top-N: N must be >= 1");
  }
}

// Rank of `label` (0-based) in the list, or size when absent.
template <class Range, class Id>
std::size_t position_of(const Range& ranked, int label, Id id_of) {
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (id_of(ranked[r]) == label) return r;
  }
  return ranked.size();
}

TopN tally(const std::vector<std::size_t>& positions, const std::vector<int>& ns) {
  TopN out;
  out.n = ns;
  out.samples = positions.size();
  for (int n : ns) {
    std::size_t hits = 0;
    for (std::size_t p : positions) hits += p < static_cast<std::size_t>(n);
    out.accuracy.push_back(positions.empty() ? 0.0
                                             : static_cast<double>(hits) / static_cast<double>(positions.size()));
  }
  return out;
}

}  // namespace

TopN top_n_accuracy(const Model& model, const ScoreTable& scores, const LabeledSet& set, Scope scope,
                    const std::vector<int>& ns) {
  check_ns(ns);
  if (scores.p.rows() != set.size() || scores.p.cols() != model.size()) {
    throw std::invalid_argument("top-N: score table does not match the labeled set");
  }
  const auto max_n = static_cast<std::size_t>(*std::max_element(ns.begin(), ns.end()));
  std::vector<std::size_t> positions;
  positions.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto ranked = personalization::rank(model, scores.p.row(i), set.enabled[i], scope, max_n);
    positions.push_back(position_of(ranked, set.labels[i], [&](const personalization::Ranked& r) {
      return model.skill_index(r.skill_id);
    }));
    if (positions.back() == ranked.size()) positions.back() = max_n;
  }
  return tally(positions, ns);
}

TopN top_n_accuracy(const Model& model, const LabeledSet& set, Scope scope, const std::vector<int>& ns) {
  return top_n_accuracy(model, personalization::score(model, set.utterances, set.enabled), set, scope, ns);
}

nlohmann::ordered_json AttentionTopN::to_json() const {
  nlohmann::ordered_json j;
  j["kept_samples"] = kept;
  j["mean_k_enabled"] = mean_k_enabled;
  j["attention_enabled"] = enabled.to_json();
  j["attention_full"] = full.to_json();
  nlohmann::ordered_json rnd;
  for (std::size_t i = 0; i < enabled.n.size(); ++i) {
    rnd["top" + std::to_string(enabled.n[i])] = random_enabled[i];
  }
  j["random_enabled"] = rnd;
  j["random_full_at_max_n"] = random_full_top_n;
  return j;
}

AttentionTopN attention_top_n(const Model& model, const ScoreTable& scores, const LabeledSet& set,
                              const std::vector<int>& ns, int min_enabled) {
  check_ns(ns);
  if (!personalization::uses_attention(model.spec.mode)) {
    throw std::invalid_argument("attention_top_n: model mode " + personalization::to_string(model.spec.mode) +
                                " has no attention");
  }
  if (scores.attention.size() != set.size()) {
    throw std::invalid_argument("attention_top_n: score table lacks attention weights");
  }
  AttentionTopN out;
  std::vector<std::size_t> positions, full_positions;
  std::vector<double> random_sum(ns.size(), 0.0);
  double k_sum = 0.0;
  std::vector<Tokens> kept_utts;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (static_cast<int>(set.enabled[i].size()) > min_enabled) kept_utts.push_back(set.utterances[i]);
  }
  const auto h = encoder::encode_h_bar(model.shared_encoder(), model.params, kept_utts);
  std::vector<const numeric::Tensor*> embs;
  for (const auto& s : model.skills) embs.push_back(&model.params.at(Model::embedding_path(s)).value);
  std::size_t row = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& enabled = set.enabled[i];
    if (static_cast<int>(enabled.size()) <= min_enabled) continue;
    // Softmax is monotone, so the dot products rank like the weights.
    std::vector<double> logits(model.size());
    for (std::size_t j = 0; j < model.size(); ++j) logits[j] = numeric::kernels::dot(h.row(row), embs[j]->ptr(), h.cols());
    ++row;
    std::vector<int> all(model.size());
    std::iota(all.begin(), all.end(), 0);
    std::sort(all.begin(), all.end(), [&](int a, int b) {
      const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
      if (logits[ua] != logits[ub]) return logits[ua] > logits[ub];
      return model.skills[ua] < model.skills[ub];
    });
    full_positions.push_back(position_of(all, set.labels[i], [](int j) { return j; }));
    const auto& w = scores.attention[i];
    std::vector<std::size_t> order(enabled.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (w[a] != w[b]) return w[a] > w[b];
      return model.skills[static_cast<std::size_t>(enabled[a])] <
             model.skills[static_cast<std::size_t>(enabled[b])];
    });
    positions.push_back(position_of(order, set.labels[i],
                                    [&](std::size_t j) { return enabled[j]; }));
    const double k = static_cast<double>(enabled.size());
    k_sum += k;
    for (std::size_t t = 0; t < ns.size(); ++t) random_sum[t] += std::min(k, static_cast<double>(ns[t])) / k;
  }
  out.enabled = tally(positions, ns);
  out.full = tally(full_positions, ns);
  out.kept = positions.size();
  if (out.kept > 0) {
    out.mean_k_enabled = k_sum / static_cast<double>(out.kept);
    for (double s : random_sum) out.random_enabled.push_back(s / static_cast<double>(out.kept));
  } else {
    out.random_enabled.assign(ns.size(), 0.0);
  }
  const int max_n = *std::max_element(ns.begin(), ns.end());
  out.random_full_top_n = std::min(1.0, static_cast<double>(max_n) / static_cast<double>(model.size()));
  return out;
}

namespace {

double log_pmf(int k, int n, double p) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
         (n - k) * std::log1p(-p);
}

void check_binomial(int s, int n, double p) {
  if (n < 1) throw std::invalid_argument("binomial: n must be >= 1");
  if (s < 0 || s > n) throw std::invalid_argument("binomial: successes out of range");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("binomial: p must be in (0, 1)");
}

}  // namespace

double binomial_cdf(int s, int n, double p) {
  check_binomial(s, n, p);
  double sum = 0.0;
  for (int k = 0; k <= s; ++k) sum += std::exp(log_pmf(k, n, p));
  return std::min(1.0, sum);
}

double binomial_upper_tail(int s, int n, double p) {
  check_binomial(s, n, p);
  double sum = 0.0;
  for (int k = s; k <= n; ++k) sum += std::exp(log_pmf(k, n, p));
  return std::min(1.0, sum);
}

int binarize_group(int n, int s, double p0, double confidence) {
  if (n == 0) throw std::invalid_argument("binarize: group without trials");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("binarize: confidence must be in (0, 1)");
  const double alpha = 1.0 - confidence;
  if (binomial_cdf(s, n, p0) < alpha) return 0;
  if (binomial_upper_tail(s, n, p0) < alpha) return 1;
  return -1;
}

BinarizedSet binomial_binarize(const std::vector<Suggestion>& log, double p0, double confidence) {
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<int, int>> groups;
  for (const auto& r : log) {
    auto& g = groups[{r.user_id, r.text, r.skill_id}];
    ++g.first;
    g.second += r.accepted ? 1 : 0;
  }
  BinarizedSet out;
  out.groups = groups.size();
  for (const auto& [key, counts] : groups) {
    const int label = binarize_group(counts.first, counts.second, p0, confidence);
    if (label < 0) {
      ++out.discarded;
      continue;
    }
    out.records.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), label, counts.first,
                           counts.second});
  }
  return out;
}

void to_json(nlohmann::json& j, const Suggestion& s) {
  j = {{"user_id", s.user_id}, {"text", s.text}, {"skill_id", s.skill_id}, {"accepted", s.accepted}};
}

void from_json(const nlohmann::json& j, Suggestion& s) {
  j.at("user_id").get_to(s.user_id);
  j.at("text").get_to(s.text);
  j.at("skill_id").get_to(s.skill_id);
  j.at("accepted").get_to(s.accepted);
}

std::vector<Suggestion> simulate_suggestions(const std::vector<SuggestionGroup>& groups, int trials, double noise,
                                             numeric::Rng& rng) {
  if (trials < 1) throw std::invalid_argument("simulate_suggestions: trials must be >= 1");
  if (!(noise >= 0.0)) throw std::invalid_argument("simulate_suggestions: noise must be >= 0");
  std::vector<Suggestion> out;
  out.reserve(groups.size() * static_cast<std::size_t>(trials));
  for (const auto& g : groups) {
    const double q = std::clamp(g.acceptance + noise * rng.normal(), 0.0, 1.0);
    for (int t = 0; t < trials; ++t) out.push_back({g.user_id, g.text, g.skill_id, rng.bernoulli(q)});
  }
  return out;
}

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<std::size_t> histogram(const std::vector<double>& values, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram: bins must be >= 1");
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("histogram: value outside [0, 1]");
    const int b = std::min(bins - 1, static_cast<int>(v * bins));
    ++counts[static_cast<std::size_t>(b)];
  }
  return counts;
}

void write_histogram_tsv(const std::filesystem::path& path, const std::vector<std::size_t>& counts) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "bin_low\tbin_high\tcount\n";
  const double width = 1.0 / static_cast<double>(counts.size());
  for (std::size_t b = 0; b < counts.size(); ++b) {
    out << static_cast<double>(b) * width << '\t' << static_cast<double>(b + 1) * width << '\t' << counts[b]
        << '\n';
  }
}

}  // namespace skillrouter::evaluation

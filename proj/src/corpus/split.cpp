#include "skillrouter/corpus/split.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <tuple>

#include "skillrouter/numeric/rng.hpp"

namespace skillrouter::corpus {

DatasetSplit split_by_user_time(const std::vector<Instance>& instances, SplitRatios ratios,
                                std::uint64_t seed) {
  if (instances.empty()) throw std::invalid_argument("split_by_user_time: empty log");
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      ratios.train + ratios.validation + ratios.test <= 0) {
    throw std::invalid_argument("split_by_user_time: ratios must be nonnegative");
  }
  std::map<std::string, std::int64_t> first_seen;
  for (const Instance& i : instances) {
    auto [it, inserted] = first_seen.emplace(i.user_id, i.timestamp);
    if (!inserted) it->second = std::min(it->second, i.timestamp);
  }
  const std::size_t n = first_seen.size();
  if (n < 3) throw std::invalid_argument("split_by_user_time: need at least 3 users");

  std::vector<std::string> users;
  for (const auto& [u, t] : first_seen) users.push_back(u);
  numeric::Rng rng(seed);
  rng.shuffle(std::span<std::string>(users));
  std::stable_sort(users.begin(), users.end(), [&](const std::string& a, const std::string& b) {
    return first_seen[a] < first_seen[b];
  });

  const double total = ratios.train + ratios.validation + ratios.test;
  auto n_train = static_cast<std::size_t>(std::llround(ratios.train / total * n));
  auto n_val = static_cast<std::size_t>(std::llround(ratios.validation / total * n));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
  n_val = std::clamp<std::size_t>(n_val, 1, n - n_train - 1);

  std::map<std::string, int> block;
  for (std::size_t i = 0; i < n; ++i) block[users[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  const std::int64_t val_start = first_seen[users[n_train]];
  const std::int64_t test_start = first_seen[users[n_train + n_val]];

  DatasetSplit out;
  for (const Instance& i : instances) {
    switch (block[i.user_id]) {
      case 0:
        if (i.timestamp < val_start) out.train.push_back(i); else ++out.clipped;
        break;
      case 1:
        if (i.timestamp < test_start) out.validation.push_back(i); else ++out.clipped;
        break;
      default:
        out.test.push_back(i);
    }
  }
  auto order = [](std::vector<Instance>& v) {
    std::stable_sort(v.begin(), v.end(), [](const Instance& a, const Instance& b) {
      return std::tie(a.timestamp, a.id) < std::tie(b.timestamp, b.id);
    });
  };
  order(out.train);
  order(out.validation);
  order(out.test);
  return out;
}

}  // namespace skillrouter::corpus

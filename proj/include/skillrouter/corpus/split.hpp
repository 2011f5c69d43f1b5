#pragma once

#include <cstdint>
#include <vector>

#include "skillrouter/corpus/types.hpp"

namespace skillrouter::corpus {

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

// User-disjoint split. Users are ordered by their first timestamp (ties
// broken by a seeded shuffle) and cut into contiguous blocks sized by the
// ratios, so validation users start after training users and test users
// after both. Lines of an earlier block that overlap the next block's start
// time are dropped, which makes train < validation < test strict.
DatasetSplit split_by_user_time(const std::vector<Instance>& instances, SplitRatios ratios,
                                std::uint64_t seed);

}  // namespace skillrouter::corpus

#pragma once

#include <cstdint>
#include <string>
#include <tuple>

#include "bnmf/matrix.hpp"
#include "bnmf/model.hpp"

namespace bnmf {

// Rating file layouts:
//   kUData      tab-separated  "user item rating timestamp", ratings in [1,5]
//   kRatingsDat "::"-separated "user::item::rating::timestamp", ratings in [1,5]
//   kSynthetic  tab-separated  "row col value [ignored]", any finite value
enum class RatingsFormat { kUData, kRatingsDat, kSynthetic };

const char* to_string(RatingsFormat fmt);
RatingsFormat ratings_format_from_string(const std::string& name);

// Parses a ratings file into a dense matrix with mask. User and item ids are
// remapped to dense 0-based indices in ascending id order; duplicate
// (user, item) pairs keep the last occurrence.
ObservedMatrix load_ratings(const std::string& path, RatingsFormat fmt);

// Writes observed cells as 1-based "row<TAB>col<TAB>value" triples, the
// format kSynthetic reads back.
void save_ratings(const ObservedMatrix& data, const std::string& path);

// Drops every row and column with fewer than min_count observed entries,
// iterating to a fixed point, and remaps indices densely. An empty fixed
// point is an error.
ObservedMatrix clean_min_observed(const ObservedMatrix& data,
                                  std::size_t min_count = 3);

struct SplitSpec {
  double fraction_unobserved = 0.5;  // of the full grid, in (0,1)
  std::uint64_t seed = 0;
};

// Splits the observed cells into train/test so that the train mask leaves
// `fraction_unobserved` of the full M x N grid unobserved. The fraction is
// grid-relative, so it starts at the dataset's own sparsity: at or below the
// intrinsic unobserved fraction the test set is empty and train keeps all
// observed cells. Train and test partition the observed set.
std::pair<ObservedMatrix, ObservedMatrix> split_train_test(
    const ObservedMatrix& data, const SplitSpec& spec);

// Adds i.i.d. Gaussian noise to observed cells only, with variance equal to
// noise_to_signal times the empirical (population) variance of the observed
// values. A ratio of zero is an exact identity. Values are not re-clipped.
ObservedMatrix add_noise(const ObservedMatrix& data, double noise_to_signal,
                         std::uint64_t seed);

struct SyntheticData {
  ObservedMatrix data;  // full mask
  Matrix w_true;        // M x K
  Matrix z_true;        // K x N
};

// W and Z entries i.i.d. exponential(rate 1); A = W Z + noise_sd * N(0,1).
SyntheticData synthetic_generate(std::size_t rows, std::size_t cols,
                                 std::size_t k_true, double noise_sd,
                                 std::uint64_t seed);

}  // namespace bnmf

#pragma once

#include <concepts>
#include <cstddef>

#include "drhmm/core.hpp"

namespace drhmm {

/// Source of pairwise likelihood ratios w_ij(y) = p(y | i) / p(y | j).
///
/// `ratio_matrix(y)` returns the S x S matrix W with W(i, j) = w_ij(y); implementations
/// keep W(i, i) = 1 and W(i, j) * W(j, i) = 1.
template <typename P>
concept LikelihoodRatioProvider = requires(const P& provider, const PointRef& y) {
  { provider.num_states() } -> std::convertible_to<std::size_t>;
  { provider.ratio_matrix(y) } -> std::convertible_to<Matrix>;
};

}  // namespace drhmm

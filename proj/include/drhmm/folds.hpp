#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "drhmm/core.hpp"

namespace drhmm {

/// Result of a (sigma, ridge) grid search.
struct CvSelection {
  double sigma = 0.0;
  double ridge = 0.0;
  double score = 0.0;
};

inline const std::vector<double>& default_ridge_grid() {
  static const std::vector<double> grid{1e-3, 1e-2, 1e-1, 1.0, 10.0};
  return grid;
}

namespace detail {

/// Fold id per point. Every point draws a seeded random key (in data order); within
/// each class, members sorted by key are dealt round-robin, so every class with at
/// least `folds` points reaches every fold and the assignment does not depend on
/// how classes are numbered.
inline std::vector<int> stratified_folds(const std::vector<int>& labels, std::size_t folds,
                                         std::uint64_t seed) {
  std::vector<int> fold_of(labels.size(), 0);
  if (labels.empty()) return fold_of;
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> key(labels.size());
  for (auto& k : key) k = rng();
  const int num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    members[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (auto& group : members) {
    std::sort(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
      return key[a] != key[b] ? key[a] < key[b] : a < b;
    });
    for (std::size_t k = 0; k < group.size(); ++k) fold_of[group[k]] = static_cast<int>(k % folds);
  }
  return fold_of;
}

inline Points select_rows(const Points& data, const std::vector<std::size_t>& rows) {
  Points out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = data.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

/// Splits row indices into (training, held-out) for one fold.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_fold(
    const std::vector<int>& fold_of, int fold) {
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    (fold_of[i] == fold ? split.second : split.first).push_back(i);
  }
  return split;
}

template <typename T>
std::vector<T> select(const std::vector<T>& values, const std::vector<std::size_t>& rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(values[r]);
  return out;
}

}  // namespace detail

}  // namespace drhmm

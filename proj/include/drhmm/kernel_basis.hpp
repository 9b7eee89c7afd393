#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "drhmm/core.hpp"

namespace drhmm {

/// Squared-exponential kernel exp(-|y - c|^2 / (2 sigma^2)).
inline double kernel_eval(const PointRef& y, const PointRef& c, double sigma) {
  detail::require_shape(y.size() == c.size(), "kernel_eval: dimension mismatch");
  detail::require(sigma > 0.0 && std::isfinite(sigma), "kernel_eval: sigma must be positive and finite");
  return std::exp(-(y - c).squaredNorm() / (2.0 * sigma * sigma));
}

/// B kernel centers drawn from the training observations, with a shared bandwidth.
/// Immutable once built.
class KernelBasis {
 public:
  KernelBasis(Points centers, std::vector<std::size_t> center_indices, double sigma,
              std::uint64_t seed)
      : centers_(std::move(centers)),
        center_indices_(std::move(center_indices)),
        sigma_(sigma),
        seed_(seed) {
    detail::require(centers_.rows() >= 1, "KernelBasis: need at least one center");
    detail::require(sigma_ > 0.0 && std::isfinite(sigma_),
                    "KernelBasis: sigma must be positive and finite");
    detail::require(center_indices_.size() == static_cast<std::size_t>(centers_.rows()),
                    "KernelBasis: one index per center");
  }

  std::size_t size() const { return static_cast<std::size_t>(centers_.rows()); }
  Eigen::Index dimension() const { return centers_.cols(); }
  double sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }
  const Points& centers() const { return centers_; }
  const std::vector<std::size_t>& center_indices() const { return center_indices_; }

  /// phi(y): kernel value against every center.
  Vector features(const PointRef& y) const {
    detail::require_shape(y.size() == dimension(), "KernelBasis: observation dimension mismatch");
    const double scale = 1.0 / (2.0 * sigma_ * sigma_);
    Vector phi(centers_.rows());
    for (Eigen::Index b = 0; b < centers_.rows(); ++b) {
      phi(b) = std::exp(-(y - centers_.row(b)).squaredNorm() * scale);
    }
    return phi;
  }

  /// Same basis with a different bandwidth.
  KernelBasis with_sigma(double sigma) const {
    return KernelBasis(centers_, center_indices_, sigma, seed_);
  }

 private:
  Points centers_;
  std::vector<std::size_t> center_indices_;
  double sigma_;
  std::uint64_t seed_;
};

inline constexpr std::size_t kDefaultMaxCenters = 100;

namespace detail {

inline bool all_rows_identical(const Points& data) {
  for (Eigen::Index i = 1; i < data.rows(); ++i) {
    if (data.row(i) != data.row(0)) return false;
  }
  return true;
}

/// Sorted, without-replacement sample of `count` indices from [0, n).
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count,
                                               std::uint64_t seed) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count >= n) return all;
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace detail

/// Picks min(N, max_centers) centers; all points in order when B = N, otherwise a
/// seeded uniform subset kept in index order.
inline KernelBasis build_basis(const Points& data, std::size_t max_centers, double sigma,
                               std::uint64_t seed) {
  detail::require(data.rows() > 0, "build_basis: empty data");
  detail::require(max_centers >= 1, "build_basis: max_centers must be >= 1");
  detail::require(!detail::all_rows_identical(data) || data.rows() == 1,
                  "build_basis: all observations identical (degenerate bandwidth)");
  const auto n = static_cast<std::size_t>(data.rows());
  auto indices = detail::sample_indices(n, std::min(n, max_centers), seed);
  Points centers(static_cast<Eigen::Index>(indices.size()), data.cols());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    centers.row(static_cast<Eigen::Index>(b)) = data.row(static_cast<Eigen::Index>(indices[b]));
  }
  return KernelBasis(std::move(centers), std::move(indices), sigma, seed);
}

/// Phi: row i holds phi(points_i).
inline Matrix design_matrix(const KernelBasis& basis, const Points& points) {
  detail::require_shape(points.rows() == 0 || points.cols() == basis.dimension(),
                        "design_matrix: observation dimension mismatch");
  const auto& centers = basis.centers();
  const double scale = 1.0 / (2.0 * basis.sigma() * basis.sigma());
  Matrix phi(points.rows(), centers.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index b = 0; b < centers.rows(); ++b) {
      phi(i, b) = std::exp(-(points.row(i) - centers.row(b)).squaredNorm() * scale);
    }
  }
  return phi;
}

/// Median pairwise Euclidean distance over a seeded subsample of at most `subsample`
/// points. Falls back to the median of the nonzero distances when duplicates push
/// the median to zero.
inline double median_heuristic(const Points& data, std::size_t subsample, std::uint64_t seed) {
  detail::require(data.rows() >= 2, "median_heuristic: need at least two points");
  detail::require(subsample >= 2, "median_heuristic: subsample must be >= 2");
  const auto idx = detail::sample_indices(static_cast<std::size_t>(data.rows()), subsample, seed);
  std::vector<double> distances;
  distances.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      distances.push_back((data.row(static_cast<Eigen::Index>(idx[a])) -
                           data.row(static_cast<Eigen::Index>(idx[b])))
                              .norm());
    }
  }
  auto median_of = [](std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
      m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
  };
  double median = median_of(distances);
  if (median > 0.0) return median;
  std::erase(distances, 0.0);
  if (distances.empty()) {
    throw InvalidArgument("median_heuristic: all points identical (zero bandwidth)");
  }
  return median_of(std::move(distances));
}

/// Default bandwidth candidates: the median heuristic times {1/4, 1/2, 1, 2, 4}.
inline std::vector<double> bandwidth_grid(double median, const std::vector<double>& multipliers = {
                                                             0.25, 0.5, 1.0, 2.0, 4.0}) {
  std::vector<double> grid;
  grid.reserve(multipliers.size());
  for (double m : multipliers) grid.push_back(median * m);
  return grid;
}

}  // namespace drhmm

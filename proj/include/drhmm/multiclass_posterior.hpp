#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "drhmm/core.hpp"
#include "drhmm/folds.hpp"
#include "drhmm/kernel_basis.hpp"
#include "drhmm/two_class_dre.hpp"

namespace drhmm {

/// Floor applied to clipped posteriors before they enter a likelihood ratio.
inline constexpr double kPosteriorFloor = 1e-12;

/// Least-squares class posteriors q_i(y) = max(0, theta_i^T phi(y)), one coefficient
/// row per class, plus the class counts used to turn posteriors into likelihood
/// ratios.
struct PosteriorModel {
  Matrix coefficients;  // S x B
  Vector class_counts;  // S
  KernelBasis basis;
  double ridge;

  std::size_t num_states() const { return static_cast<std::size_t>(coefficients.rows()); }
};

/// Soft state probabilities, one row per frame.
using ResponsibilityMatrix = Matrix;

namespace detail {

inline void check_class_labels(const Points& data, const std::vector<int>& labels,
                               std::size_t num_states) {
  require_shape(labels.size() == static_cast<std::size_t>(data.rows()),
                "posterior fit: one label per observation");
  require(num_states >= 2, "posterior fit: need at least two classes");
  for (int l : labels) {
    require(l >= 0 && static_cast<std::size_t>(l) < num_states,
            "posterior fit: label out of range");
  }
}

inline Matrix one_hot(const std::vector<int>& labels, std::size_t num_states) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()),
                          static_cast<Eigen::Index>(num_states));
  for (std::size_t t = 0; t < labels.size(); ++t) m(static_cast<Eigen::Index>(t), labels[t]) = 1.0;
  return m;
}

inline void check_responsibilities(const ResponsibilityMatrix& gamma) {
  require(gamma.rows() >= 1, "responsibilities: need at least one frame");
  require(gamma.cols() >= 2, "responsibilities: need at least two classes");
  for (Eigen::Index t = 0; t < gamma.rows(); ++t) {
    require(std::abs(gamma.row(t).sum() - 1.0) <= 1e-9,
            "responsibilities: row " + std::to_string(t) + " does not sum to one");
    require((gamma.row(t).array() >= 0.0).all() && (gamma.row(t).array() <= 1.0).all(),
            "responsibilities: entries must lie in [0, 1]");
  }
}

inline std::size_t check_class_index(const PosteriorModel& model, std::size_t i) {
  require(i < model.num_states(), "posterior model: class index out of range");
  return i;
}

}  // namespace detail

/// Row i solves (Phi^T Phi + ridge I) theta_i = Phi^T m_i; labels are 0..S-1 and
/// every class must be present.
inline PosteriorModel fit_posteriors(const Points& data, const std::vector<int>& labels,
                                     std::size_t num_states, const KernelBasis& basis,
                                     double ridge) {
  detail::check_class_labels(data, labels, num_states);
  detail::require(ridge > 0.0, "fit_posteriors: ridge must be positive");
  const Matrix indicators = detail::one_hot(labels, num_states);
  const Vector counts = indicators.colwise().sum().transpose();
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (counts(i) == 0.0) {
      throw DataError("fit_posteriors: class " + std::to_string(i + 1) + " has no samples");
    }
  }
  const Matrix phi = design_matrix(basis, data);
  const Matrix gram = phi.transpose() * phi;
  Matrix theta = detail::solve_ridge(gram, phi.transpose() * indicators, ridge);
  return PosteriorModel{theta.transpose(), counts, basis, ridge};
}

/// Soft-label fit: row i solves (Phi^T Phi + ridge I) theta_i = Phi^T gamma_i, which
/// coincides with fit_posteriors when every row of gamma is one-hot. Class counts
/// become the total responsibility of each class.
inline PosteriorModel fit_posteriors_weighted(const Points& data,
                                              const ResponsibilityMatrix& responsibilities,
                                              const KernelBasis& basis, double ridge) {
  detail::check_responsibilities(responsibilities);
  detail::require_shape(responsibilities.rows() == data.rows(),
                        "fit_posteriors_weighted: one responsibility row per observation");
  detail::require(ridge > 0.0, "fit_posteriors_weighted: ridge must be positive");
  const Vector counts = responsibilities.colwise().sum().transpose();
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (!(counts(i) > 0.0)) {
      throw DataError("fit_posteriors_weighted: class " + std::to_string(i + 1) +
                      " has zero total responsibility");
    }
  }
  const Matrix phi = design_matrix(basis, data);
  const Matrix gram = phi.transpose() * phi;
  Matrix theta = detail::solve_ridge(gram, phi.transpose() * responsibilities, ridge);
  return PosteriorModel{theta.transpose(), counts, basis, ridge};
}

/// All S clipped posteriors at y.
inline Vector posteriors(const PosteriorModel& model, const PointRef& y) {
  return (model.coefficients * model.basis.features(y)).cwiseMax(0.0);
}

inline double posterior(const PosteriorModel& model, std::size_t class_index, const PointRef& y) {
  detail::check_class_index(model, class_index);
  return std::max(0.0, model.coefficients.row(static_cast<Eigen::Index>(class_index))
                           .dot(model.basis.features(y)));
}

/// S x S matrix of w_ij(y) = (n_j / n_i) * q_i(y) / q_j(y), posteriors floored at
/// kPosteriorFloor. Diagonal is exactly one and (j, i) is the reciprocal of (i, j).
inline Matrix likelihood_ratio_matrix(const PosteriorModel& model, const PointRef& y) {
  const Vector q = posteriors(model, y).cwiseMax(kPosteriorFloor);
  // p(y | i) up to a common factor.
  const Vector scaled = q.cwiseQuotient(model.class_counts);
  const auto s = static_cast<Eigen::Index>(model.num_states());
  Matrix w = Matrix::Ones(s, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = i + 1; j < s; ++j) {
      w(i, j) = scaled(i) / scaled(j);
      w(j, i) = 1.0 / w(i, j);
    }
  }
  return w;
}

inline double likelihood_ratio(const PosteriorModel& model, std::size_t i, std::size_t j,
                               const PointRef& y) {
  detail::check_class_index(model, i);
  detail::check_class_index(model, j);
  if (i == j) return 1.0;
  return likelihood_ratio_matrix(model, y)(static_cast<Eigen::Index>(i),
                                           static_cast<Eigen::Index>(j));
}

/// Adapter exposing a posterior model as a likelihood-ratio source.
struct PosteriorRatioProvider {
  const PosteriorModel* model;

  std::size_t num_states() const { return model->num_states(); }
  Matrix ratio_matrix(const PointRef& y) const { return likelihood_ratio_matrix(*model, y); }
};

/// theta_* = sum_i theta_i, the minimizer of 1/2 sum_t (1 - theta^T phi(y_t))^2 +
/// ridge/2 |theta|^2 on the same training set.
inline Vector outlier_coefficients(const PosteriorModel& model) {
  return model.coefficients.colwise().sum().transpose();
}

/// Estimated probability that y belongs to none of the trained classes,
/// clamp(1 - theta_*^T phi(y), 0, 1).
inline double outlier_score(const PosteriorModel& model, const PointRef& y) {
  const double inlier = outlier_coefficients(model).dot(model.basis.features(y));
  return std::clamp(1.0 - inlier, 0.0, 1.0);
}

/// Shared (sigma, ridge) grid search for the multi-class posterior fit. Held-out
/// score is the sum over classes of 1/2 mean(q_i^2) - mean(m_i q_i) with clipped q;
/// lower is better.
inline CvSelection cross_validate_multiclass(const Points& data, const std::vector<int>& labels,
                                             std::size_t num_states,
                                             const std::vector<double>& sigma_grid,
                                             const std::vector<double>& ridge_grid,
                                             std::size_t folds, std::uint64_t seed,
                                             std::size_t max_centers = kDefaultMaxCenters) {
  detail::check_class_labels(data, labels, num_states);
  detail::require(folds >= 2, "cross_validate_multiclass: folds must be >= 2");
  detail::require(!sigma_grid.empty() && !ridge_grid.empty(),
                  "cross_validate_multiclass: empty grid");
  for (std::size_t c = 0; c < num_states; ++c) {
    if (static_cast<std::size_t>(std::count(labels.begin(), labels.end(), static_cast<int>(c))) <
        folds) {
      throw DataError("cross_validate_multiclass: class " + std::to_string(c + 1) +
                      " has fewer samples than folds");
    }
  }

  const auto fold_of = detail::stratified_folds(labels, folds, seed);
  std::vector<double> scores(sigma_grid.size() * ridge_grid.size(), 0.0);

  for (std::size_t f = 0; f < folds; ++f) {
    const auto [train_rows, test_rows] = detail::split_fold(fold_of, static_cast<int>(f));
    const Points train = detail::select_rows(data, train_rows);
    const Points test = detail::select_rows(data, test_rows);
    const Matrix train_ind = detail::one_hot(detail::select(labels, train_rows), num_states);
    const Matrix test_ind = detail::one_hot(detail::select(labels, test_rows), num_states);
    const auto n_test = static_cast<double>(test_rows.size());

    for (std::size_t s = 0; s < sigma_grid.size(); ++s) {
      const KernelBasis basis = build_basis(train, max_centers, sigma_grid[s], seed);
      const Matrix phi = design_matrix(basis, train);
      const Matrix gram = phi.transpose() * phi;
      const Matrix rhs = phi.transpose() * train_ind;
      const Matrix phi_test = design_matrix(basis, test);
      for (std::size_t r = 0; r < ridge_grid.size(); ++r) {
        detail::require(ridge_grid[r] > 0.0, "cross_validate_multiclass: ridge must be positive");
        const Matrix theta = detail::solve_ridge(gram, rhs, ridge_grid[r]);
        const Matrix q = (phi_test * theta).cwiseMax(0.0);
        const double score =
            (0.5 * q.array().square().sum() - (q.array() * test_ind.array()).sum()) / n_test;
        scores[s * ridge_grid.size() + r] += score / static_cast<double>(folds);
      }
    }
  }

  CvSelection best{sigma_grid[0], ridge_grid[0], std::numeric_limits<double>::infinity()};
  for (std::size_t s = 0; s < sigma_grid.size(); ++s) {
    for (std::size_t r = 0; r < ridge_grid.size(); ++r) {
      const double score = scores[s * ridge_grid.size() + r];
      if (score < best.score) best = CvSelection{sigma_grid[s], ridge_grid[r], score};
    }
  }
  if (!std::isfinite(best.score)) throw NumericalError("cross_validate_multiclass: no finite score");
  return best;
}

}  // namespace drhmm

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>

#include "drhmm/core.hpp"
#include "drhmm/folds.hpp"
#include "drhmm/kernel_basis.hpp"

namespace drhmm {

/// Least-squares estimate of a single likelihood ratio w(y) = p(y | numerator) /
/// p(y | denominator), represented as theta^T phi(y).
///
/// `theta` is the raw minimizer of the regularized objective; negative outputs are
/// clipped only when the ratio is evaluated.
struct RatioModel {
  Vector theta;
  KernelBasis basis;
  double ridge;
  double numerator_count;
  double denominator_count;
};

namespace detail {

inline void check_two_class_labels(const Points& data, const std::vector<int>& labels) {
  require_shape(labels.size() == static_cast<std::size_t>(data.rows()),
                "two-class fit: one label per observation");
  for (int l : labels) require(l == 0 || l == 1, "two-class fit: labels must be 0 or 1");
}

/// Solves (H + ridge I) x = rhs for symmetric positive semi-definite H.
inline Matrix solve_ridge(const Matrix& gram, const Matrix& rhs, double ridge) {
  Matrix system = gram;
  system.diagonal().array() += ridge;
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("ridge solve failed (non-finite or indefinite system)");
  }
  Matrix x = llt.solve(rhs);
  if (!x.allFinite()) throw NumericalError("ridge solve produced non-finite coefficients");
  return x;
}

/// Phi^T diag(weights) Phi.
inline Matrix weighted_gram(const Matrix& phi, const Vector& weights) {
  return phi.transpose() * weights.asDiagonal() * phi;
}

}  // namespace detail

/// theta = (Phi^T M_den Phi + ridge I)^-1 Phi^T m_num with label 1 as numerator and
/// label 0 as denominator.
inline RatioModel fit_two_class(const Points& data, const std::vector<int>& labels,
                                const KernelBasis& basis, double ridge) {
  detail::check_two_class_labels(data, labels);
  detail::require(ridge > 0.0, "fit_two_class: ridge must be positive");
  const auto num = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto den = static_cast<double>(labels.size()) - num;
  if (num == 0.0) throw DataError("fit_two_class: numerator class (label 1) has no samples");
  if (den == 0.0) throw DataError("fit_two_class: denominator class (label 0) has no samples");

  const Matrix phi = design_matrix(basis, data);
  Vector m_num(phi.rows());
  Vector m_den(phi.rows());
  for (Eigen::Index i = 0; i < phi.rows(); ++i) {
    m_num(i) = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;
    m_den(i) = 1.0 - m_num(i);
  }
  const Matrix gram = detail::weighted_gram(phi, m_den);
  Vector theta = detail::solve_ridge(gram, phi.transpose() * m_num, ridge);
  return RatioModel{std::move(theta), basis, ridge, num, den};
}

/// max(0, theta^T phi(y)).
inline double evaluate_ratio(const RatioModel& model, const PointRef& y) {
  return std::max(0.0, model.theta.dot(model.basis.features(y)));
}

/// Floor applied to clipped ratio estimates before they are used as w_12.
inline constexpr double kRatioFloor = 1e-12;

/// Two-state likelihood-ratio source backed by a RatioModel: state 0 is the
/// numerator class and state 1 the denominator class. theta^T phi estimates
/// (n_num / n_den) w because the objective sums rather than averages over each
/// class, so the class-count factor is divided back out.
struct RatioModelProvider {
  const RatioModel* model;

  std::size_t num_states() const { return 2; }
  Matrix ratio_matrix(const PointRef& y) const {
    const double w = std::max(evaluate_ratio(*model, y), kRatioFloor) *
                     (model->denominator_count / model->numerator_count);
    Matrix out(2, 2);
    out << 1.0, w, 1.0 / w, 1.0;
    return out;
  }
};

/// Grid search over (sigma, ridge) with seeded, class-stratified folds. The held-out
/// score is 1/2 mean(w^2) over denominator points minus mean(w) over numerator
/// points, with w the clipped ratio; lower is better. Ties keep the earliest pair in
/// sigma-major grid order.
inline CvSelection cross_validate_two_class(const Points& data, const std::vector<int>& labels,
                                            const std::vector<double>& sigma_grid,
                                            const std::vector<double>& ridge_grid,
                                            std::size_t folds, std::uint64_t seed,
                                            std::size_t max_centers = kDefaultMaxCenters) {
  detail::check_two_class_labels(data, labels);
  detail::require(folds >= 2, "cross_validate_two_class: folds must be >= 2");
  detail::require(!sigma_grid.empty() && !ridge_grid.empty(),
                  "cross_validate_two_class: empty grid");
  for (int c = 0; c < 2; ++c) {
    if (static_cast<std::size_t>(std::count(labels.begin(), labels.end(), c)) < folds) {
      throw DataError("cross_validate_two_class: class " + std::to_string(c) +
                      " has fewer samples than folds");
    }
  }

  const auto fold_of = detail::stratified_folds(labels, folds, seed);
  std::vector<double> scores(sigma_grid.size() * ridge_grid.size(), 0.0);

  for (std::size_t f = 0; f < folds; ++f) {
    const auto [train_rows, test_rows] = detail::split_fold(fold_of, static_cast<int>(f));
    const Points train = detail::select_rows(data, train_rows);
    const Points test = detail::select_rows(data, test_rows);
    const auto train_labels = detail::select(labels, train_rows);
    const auto test_labels = detail::select(labels, test_rows);
    Vector m_num(static_cast<Eigen::Index>(train_rows.size()));
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      m_num(static_cast<Eigen::Index>(i)) = train_labels[i] == 1 ? 1.0 : 0.0;
    }
    const Vector m_den = Vector::Ones(m_num.size()) - m_num;
    const double test_num = static_cast<double>(std::count(test_labels.begin(), test_labels.end(), 1));
    const double test_den = static_cast<double>(test_labels.size()) - test_num;

    for (std::size_t s = 0; s < sigma_grid.size(); ++s) {
      const KernelBasis basis = build_basis(train, max_centers, sigma_grid[s], seed);
      const Matrix phi = design_matrix(basis, train);
      const Matrix gram = detail::weighted_gram(phi, m_den);
      const Vector rhs = phi.transpose() * m_num;
      const Matrix phi_test = design_matrix(basis, test);
      for (std::size_t r = 0; r < ridge_grid.size(); ++r) {
        detail::require(ridge_grid[r] > 0.0, "cross_validate_two_class: ridge must be positive");
        const Vector theta = detail::solve_ridge(gram, rhs, ridge_grid[r]);
        const Vector w = (phi_test * theta).cwiseMax(0.0);
        double den_term = 0.0;
        double num_term = 0.0;
        for (std::size_t i = 0; i < test_labels.size(); ++i) {
          const double wi = w(static_cast<Eigen::Index>(i));
          if (test_labels[i] == 1) {
            num_term += wi;
          } else {
            den_term += 0.5 * wi * wi;
          }
        }
        scores[s * ridge_grid.size() + r] +=
            (den_term / test_den - num_term / test_num) / static_cast<double>(folds);
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
  if (!std::isfinite(best.score)) throw NumericalError("cross_validate_two_class: no finite score");
  return best;
}

}  // namespace drhmm

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "drhmm/core.hpp"
#include "drhmm/folds.hpp"
#include "drhmm/kernel_basis.hpp"

namespace drhmm {

/// Densities entering the standard recursion are floored here.
inline constexpr double kDensityFloor = 1e-300;

namespace detail {

inline double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Kernel density estimate per class.

struct KdeEmission {
  std::vector<Points> class_points;
  std::vector<double> bandwidths;

  std::size_t num_states() const { return class_points.size(); }
};

/// log of (1/n) sum_k N(y; point_k, sigma^2 I).
inline double kde_log_density(const Points& points, double sigma, const PointRef& y) {
  detail::require(points.rows() >= 1, "kde: no training points");
  detail::require(sigma > 0.0, "kde: bandwidth must be positive");
  detail::require_shape(points.cols() == y.size(), "kde: observation dimension mismatch");
  const double d = static_cast<double>(points.cols());
  const double log_norm = -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma);
  const Vector exponents =
      -(points.rowwise() - y).rowwise().squaredNorm() / (2.0 * sigma * sigma);
  return detail::log_sum_exp(exponents) - std::log(static_cast<double>(points.rows())) + log_norm;
}

inline double kde_density(const KdeEmission& emission, std::size_t state, const PointRef& y) {
  detail::require(state < emission.num_states(), "kde: state out of range");
  return std::exp(kde_log_density(emission.class_points[state], emission.bandwidths[state], y));
}

/// Per class, picks the bandwidth with the highest mean held-out log density over
/// seeded folds (at most one fold per point). Classes with a single point take the
/// middle grid value.
inline KdeEmission fit_kde(const std::vector<Points>& per_class,
                           const std::vector<double>& bandwidth_grid, std::size_t folds,
                           std::uint64_t seed) {
  detail::require(!per_class.empty(), "fit_kde: no classes");
  detail::require(!bandwidth_grid.empty(), "fit_kde: empty bandwidth grid");
  detail::require(folds >= 2, "fit_kde: folds must be >= 2");
  for (double h : bandwidth_grid) detail::require(h > 0.0, "fit_kde: bandwidths must be positive");
  KdeEmission emission;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const Points& points = per_class[c];
    if (points.rows() == 0) throw DataError("fit_kde: class " + std::to_string(c + 1) + " is empty");
    emission.class_points.push_back(points);
    if (points.rows() < 2) {
      emission.bandwidths.push_back(bandwidth_grid[bandwidth_grid.size() / 2]);
      continue;
    }
    const std::size_t k = std::min<std::size_t>(folds, static_cast<std::size_t>(points.rows()));
    const auto fold_of = detail::stratified_folds(
        std::vector<int>(static_cast<std::size_t>(points.rows()), 0), k, seed + c);
    std::vector<double> score(bandwidth_grid.size(), 0.0);
    for (std::size_t f = 0; f < k; ++f) {
      const auto [train_rows, test_rows] = detail::split_fold(fold_of, static_cast<int>(f));
      const Points train = detail::select_rows(points, train_rows);
      for (std::size_t h = 0; h < bandwidth_grid.size(); ++h) {
        for (auto r : test_rows) {
          score[h] += kde_log_density(train, bandwidth_grid[h], points.row(static_cast<Eigen::Index>(r)));
        }
      }
    }
    const auto best = std::max_element(score.begin(), score.end()) - score.begin();
    emission.bandwidths.push_back(bandwidth_grid[static_cast<std::size_t>(best)]);
  }
  return emission;
}

// ---------------------------------------------------------------------------
// Gaussian mixture per class, component count chosen by BIC.

struct GaussianMixture {
  Vector weights;                    // K
  Points means;                      // K x d
  std::vector<Matrix> covariances;   // K of d x d
  double log_likelihood = -std::numeric_limits<double>::infinity();

  std::size_t components() const { return static_cast<std::size_t>(weights.size()); }
  Eigen::Index dimension() const { return means.cols(); }
};

inline constexpr double kCovarianceFloor = 1e-6;

namespace detail {

/// Cholesky factors and log normalizers of every component.
struct MixtureFactors {
  std::vector<Eigen::LLT<Matrix>> chol;
  Vector log_norm;  // log w_k - 1/2 (d log 2 pi + log det Sigma_k)

  explicit MixtureFactors(const GaussianMixture& mixture) {
    const auto k = static_cast<Eigen::Index>(mixture.components());
    const double d = static_cast<double>(mixture.dimension());
    log_norm.resize(k);
    for (Eigen::Index c = 0; c < k; ++c) {
      chol.emplace_back(mixture.covariances[static_cast<std::size_t>(c)]);
      if (chol.back().info() != Eigen::Success) {
        throw NumericalError("gmm: covariance is not positive definite");
      }
      const double log_det = 2.0 * chol.back().matrixL().toDenseMatrix().diagonal().array().log().sum();
      log_norm(c) = std::log(mixture.weights(c)) -
                    0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det);
    }
  }

  /// log w_k + log N(y; mu_k, Sigma_k) for every k.
  Vector component_log_densities(const GaussianMixture& mixture, const PointRef& y) const {
    Vector out(log_norm.size());
    for (Eigen::Index c = 0; c < out.size(); ++c) {
      const Vector diff = (y - mixture.means.row(c)).transpose();
      const Vector z = chol[static_cast<std::size_t>(c)].matrixL().solve(diff);
      out(c) = log_norm(c) - 0.5 * z.squaredNorm();
    }
    return out;
  }
};

inline Matrix floor_eigenvalues(const Matrix& cov, double floor) {
  const Matrix sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.eigenvalues().minCoeff() >= floor) return sym;
  const Vector clamped = eig.eigenvalues().cwiseMax(floor);
  return eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
}

inline Matrix sample_covariance(const Points& data) {
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(data.rows());
}

}  // namespace detail

inline double gmm_log_density(const GaussianMixture& mixture, const PointRef& y) {
  detail::require_shape(y.size() == mixture.dimension(), "gmm: observation dimension mismatch");
  const detail::MixtureFactors factors(mixture);
  return detail::log_sum_exp(factors.component_log_densities(mixture, y));
}

inline double gmm_density(const GaussianMixture& mixture, const PointRef& y) {
  return std::exp(gmm_log_density(mixture, y));
}

/// One EM run from a seeded initialization: means by D^2 sampling over the data,
/// shared sample covariance, equal weights. Covariance eigenvalues are floored at
/// kCovarianceFloor after every M-step. `history` receives the log-likelihood of
/// every E-step. Returns a mixture with log_likelihood = -inf when a component loses
/// all its mass.
inline GaussianMixture fit_gmm_em(const Points& data, std::size_t components, std::uint64_t seed,
                                  std::size_t max_iterations = 500,
                                  std::vector<double>* history = nullptr) {
  detail::require(components >= 1, "fit_gmm_em: need at least one component");
  detail::require(static_cast<std::size_t>(data.rows()) >= components,
                  "fit_gmm_em: fewer samples than components");
  const auto n = data.rows();
  const auto k = static_cast<Eigen::Index>(components);
  const auto d = data.cols();
  std::mt19937_64 rng(seed);

  GaussianMixture mix;
  mix.weights = Vector::Constant(k, 1.0 / static_cast<double>(k));
  mix.means.resize(k, d);
  mix.means.row(0) = data.row(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  Vector nearest = (data.rowwise() - mix.means.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        u -= nearest(pick);
        if (u < 0.0) break;
      }
    } else {
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    }
    mix.means.row(c) = data.row(pick);
    nearest = nearest.cwiseMin((data.rowwise() - mix.means.row(c)).rowwise().squaredNorm());
  }
  const Matrix base_cov = detail::floor_eigenvalues(detail::sample_covariance(data), kCovarianceFloor);
  mix.covariances.assign(components, base_cov);

  Matrix resp(n, k);
  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < max_iterations; ++it) {
    // E-step
    const detail::MixtureFactors factors(mix);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector logs = factors.component_log_densities(mix, data.row(i));
      const double lse = detail::log_sum_exp(logs);
      ll += lse;
      resp.row(i) = (logs.array() - lse).exp().transpose();
    }
    if (!std::isfinite(ll)) {
      mix.log_likelihood = -std::numeric_limits<double>::infinity();
      return mix;
    }
    mix.log_likelihood = ll;
    if (history) history->push_back(ll);
    if (it > 0 && std::abs(ll - previous) <= 1e-10 * std::max(1.0, std::abs(ll))) break;
    previous = ll;

    // M-step
    const Vector mass = resp.colwise().sum().transpose();
    for (Eigen::Index c = 0; c < k; ++c) {
      if (!(mass(c) > 1e-10)) {
        mix.log_likelihood = -std::numeric_limits<double>::infinity();
        return mix;
      }
      mix.weights(c) = mass(c) / static_cast<double>(n);
      const Eigen::RowVectorXd mean = (resp.col(c).transpose() * data) / mass(c);
      mix.means.row(c) = mean;
      const Matrix centered = data.rowwise() - mean;
      const Matrix cov = centered.transpose() * resp.col(c).asDiagonal() * centered / mass(c);
      mix.covariances[static_cast<std::size_t>(c)] = detail::floor_eigenvalues(cov, kCovarianceFloor);
    }
  }
  return mix;
}

inline double gmm_parameter_count(std::size_t components, Eigen::Index dimension) {
  const double k = static_cast<double>(components);
  const double d = static_cast<double>(dimension);
  return (k - 1.0) + k * d + k * d * (d + 1.0) / 2.0;
}

/// -2 loglik + parameters * ln N.
inline double gmm_bic(const GaussianMixture& mixture, std::size_t samples) {
  return -2.0 * mixture.log_likelihood +
         gmm_parameter_count(mixture.components(), mixture.dimension()) *
             std::log(static_cast<double>(samples));
}

struct GmmSelection {
  GaussianMixture mixture;
  std::vector<std::size_t> candidates;
  std::vector<double> bic;  // per candidate, +inf when every restart failed
};

/// For every candidate K, keeps the best of `restarts` EM runs, then returns the K
/// with the smallest BIC.
inline GmmSelection fit_gmm_bic(const Points& samples, const std::vector<std::size_t>& candidates,
                                std::size_t restarts, std::uint64_t seed) {
  detail::require(!candidates.empty(), "fit_gmm_bic: no component candidates");
  detail::require(restarts >= 1, "fit_gmm_bic: need at least one restart");
  const std::size_t max_k = *std::max_element(candidates.begin(), candidates.end());
  if (static_cast<std::size_t>(samples.rows()) < max_k) {
    throw DataError("fit_gmm_bic: fewer samples than the largest component count");
  }
  GmmSelection out;
  out.candidates = candidates;
  double best_bic = std::numeric_limits<double>::infinity();
  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    GaussianMixture best;
    for (std::size_t r = 0; r < restarts; ++r) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(candidates[ci]), static_cast<std::uint32_t>(r)};
      std::mt19937_64 derive(seq);
      GaussianMixture fit = fit_gmm_em(samples, candidates[ci], derive());
      if (fit.log_likelihood > best.log_likelihood) best = std::move(fit);
    }
    const double bic = std::isfinite(best.log_likelihood)
                           ? gmm_bic(best, static_cast<std::size_t>(samples.rows()))
                           : std::numeric_limits<double>::infinity();
    out.bic.push_back(bic);
    if (bic < best_bic) {
      best_bic = bic;
      out.mixture = std::move(best);
    }
  }
  if (!std::isfinite(best_bic)) {
    throw NumericalError("fit_gmm_bic: EM produced a non-finite log-likelihood for every candidate");
  }
  return out;
}

struct GmmEmission {
  std::vector<GaussianMixture> mixtures;

  std::size_t num_states() const { return mixtures.size(); }
};

inline GmmEmission fit_gmm_emission(const std::vector<Points>& per_class,
                                    const std::vector<std::size_t>& candidates,
                                    std::size_t restarts, std::uint64_t seed) {
  GmmEmission emission;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c].rows() == 0) throw DataError("fit_gmm: class " + std::to_string(c + 1) + " is empty");
    emission.mixtures.push_back(fit_gmm_bic(per_class[c], candidates, restarts, seed + c).mixture);
  }
  return emission;
}

// ---------------------------------------------------------------------------

/// Entry (t, i) = class-i density at y_t, floored at kDensityFloor.
inline Matrix emission_likelihood_matrix(const KdeEmission& emission, const Points& observations) {
  Matrix out(observations.rows(), static_cast<Eigen::Index>(emission.num_states()));
  for (std::size_t i = 0; i < emission.num_states(); ++i) {
    for (Eigen::Index t = 0; t < observations.rows(); ++t) {
      out(t, static_cast<Eigen::Index>(i)) =
          std::max(kDensityFloor, kde_density(emission, i, observations.row(t)));
    }
  }
  return out;
}

inline Matrix emission_likelihood_matrix(const GmmEmission& emission, const Points& observations) {
  Matrix out(observations.rows(), static_cast<Eigen::Index>(emission.num_states()));
  for (std::size_t i = 0; i < emission.num_states(); ++i) {
    const auto& mixture = emission.mixtures[i];
    detail::require_shape(observations.cols() == mixture.dimension(),
                          "gmm: observation dimension mismatch");
    const detail::MixtureFactors factors(mixture);
    for (Eigen::Index t = 0; t < observations.rows(); ++t) {
      const double log_p = detail::log_sum_exp(factors.component_log_densities(mixture, observations.row(t)));
      out(t, static_cast<Eigen::Index>(i)) = std::max(kDensityFloor, std::exp(log_p));
    }
  }
  return out;
}

}  // namespace drhmm

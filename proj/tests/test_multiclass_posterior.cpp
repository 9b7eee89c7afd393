#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "drhmm/multiclass_posterior.hpp"
#include "test_support.hpp"

using namespace drhmm;

namespace {

struct Labeled {
  Points data;
  std::vector<int> labels;
};

Labeled clusters(const std::vector<double>& means, std::size_t per_class, double sd,
                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Labeled out;
  out.data.resize(static_cast<Eigen::Index>(means.size() * per_class), 1);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < means.size(); ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      out.data(row++, 0) = means[c] + g(rng);
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

Eigen::RowVectorXd at(double y) {
  Eigen::RowVectorXd r(1);
  r << y;
  return r;
}

Matrix random_responsibilities(Eigen::Index rows, Eigen::Index classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Matrix gamma(rows, classes);
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (Eigen::Index i = 0; i < classes; ++i) gamma(t, i) = u(rng);
    gamma.row(t) /= gamma.row(t).sum();
  }
  return gamma;
}

}  // namespace

TEST(FitPosteriors, SeparatedClustersGiveConfidentPosteriors) {
  const auto d = clusters({-5.0, 5.0}, 200, 1.0, 1);
  const PosteriorModel model = fit_posteriors(d.data, d.labels, 2, build_basis(d.data, 100, 1.0, 1), 0.01);
  EXPECT_GT(posterior(model, 0, at(-5.0)), 0.9);
  EXPECT_LT(posterior(model, 1, at(-5.0)), 0.1);
  EXPECT_GT(posterior(model, 1, at(5.0)), 0.9);
  EXPECT_LT(posterior(model, 0, at(5.0)), 0.1);
  for (Eigen::Index t = 0; t < 20; ++t) {
    const double q = posterior(model, static_cast<std::size_t>(d.labels[static_cast<std::size_t>(t)]), d.data.row(t));
    EXPECT_GE(q, 0.9);
    EXPECT_LE(q, 1.1);
  }
  EXPECT_EQ(model.class_counts, Vector::Constant(2, 200.0));
  EXPECT_EQ(model.coefficients.rows(), 2);
  EXPECT_EQ(model.coefficients.cols(), 100);
}

TEST(FitPosteriors, SwappedLabelsSwapRows) {
  const auto d = clusters({-1.0, 1.0}, 30, 1.0, 2);
  const KernelBasis basis = build_basis(d.data, 20, 1.0, 0);
  std::vector<int> swapped = d.labels;
  for (int& l : swapped) l = 1 - l;
  const PosteriorModel a = fit_posteriors(d.data, d.labels, 2, basis, 0.1);
  const PosteriorModel b = fit_posteriors(d.data, swapped, 2, basis, 0.1);
  EXPECT_EQ(Vector(a.coefficients.row(0).transpose()), Vector(b.coefficients.row(1).transpose()));
  EXPECT_EQ(Vector(a.coefficients.row(1).transpose()), Vector(b.coefficients.row(0).transpose()));
}

TEST(FitPosteriors, MatchesDenseInverseAndSumIdentity) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = clusters({-1.0, 0.0, 1.5}, 7, 1.0, static_cast<std::uint64_t>(trial));
    const KernelBasis basis = build_basis(d.data, 5, 0.9, static_cast<std::uint64_t>(trial));
    const double ridge = 0.01 + 0.1 * trial;
    const PosteriorModel model = fit_posteriors(d.data, d.labels, 3, basis, ridge);
    const Matrix phi = design_matrix(basis, d.data);
    const Matrix gram = phi.transpose() * phi;
    for (int c = 0; c < 3; ++c) {
      Vector m(phi.rows());
      for (Eigen::Index t = 0; t < phi.rows(); ++t) m(t) = d.labels[static_cast<std::size_t>(t)] == c ? 1.0 : 0.0;
      const Vector oracle = oracle::dense_ridge_inverse(gram, phi.transpose() * m, ridge);
      EXPECT_LT((Vector(model.coefficients.row(c).transpose()) - oracle).cwiseAbs().maxCoeff(), 1e-10);
    }
    // theta_* minimizes 1/2 sum (1 - theta^T phi)^2 + ridge/2 |theta|^2.
    const Vector star = oracle::dense_ridge_inverse(gram, phi.transpose() * Vector::Ones(phi.rows()), ridge);
    EXPECT_LT((outlier_coefficients(model) - star).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(FitPosteriors, MissingClassIsError) {
  const auto d = clusters({-1.0, 1.0}, 10, 1.0, 4);
  const KernelBasis basis = build_basis(d.data, 10, 1.0, 0);
  EXPECT_THROW(fit_posteriors(d.data, d.labels, 3, basis, 0.1), DataError);
  EXPECT_THROW(fit_posteriors(d.data, d.labels, 2, basis, 0.0), InvalidArgument);
}

TEST(FitPosteriorsWeighted, HardResponsibilitiesReduceToUnweighted) {
  const auto d = clusters({-2.0, 0.0, 2.0}, 25, 1.0, 5);
  const KernelBasis basis = build_basis(d.data, 30, 1.2, 0);
  const PosteriorModel hard = fit_posteriors(d.data, d.labels, 3, basis, 0.05);
  const PosteriorModel soft = fit_posteriors_weighted(d.data, detail::one_hot(d.labels, 3), basis, 0.05);
  EXPECT_LE((hard.coefficients - soft.coefficients).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(hard.class_counts, soft.class_counts);
}

TEST(FitPosteriorsWeighted, UniformResponsibilitiesGiveEqualRows) {
  const auto d = clusters({-2.0, 2.0}, 20, 1.0, 6);
  const KernelBasis basis = build_basis(d.data, 15, 1.0, 0);
  const Matrix gamma = Matrix::Constant(d.data.rows(), 3, 1.0 / 3.0);
  const PosteriorModel model = fit_posteriors_weighted(d.data, gamma, basis, 0.1);
  EXPECT_EQ(Vector(model.coefficients.row(0).transpose()), Vector(model.coefficients.row(1).transpose()));
  EXPECT_EQ(Vector(model.coefficients.row(0).transpose()), Vector(model.coefficients.row(2).transpose()));
}

TEST(FitPosteriorsWeighted, MatchesDenseInverse) {
  std::mt19937_64 rng(7);
  const auto d = clusters({-1.0, 1.0}, 10, 1.0, 7);
  const KernelBasis basis = build_basis(d.data, 5, 0.8, 7);
  const Matrix gamma = random_responsibilities(20, 2, rng);
  const PosteriorModel model = fit_posteriors_weighted(d.data, gamma, basis, 0.3);
  const Matrix phi = design_matrix(basis, d.data);
  const Matrix oracle = oracle::dense_ridge_inverse(phi.transpose() * phi, phi.transpose() * gamma, 0.3);
  EXPECT_LT((model.coefficients - oracle.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((model.class_counts - gamma.colwise().sum().transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitPosteriorsWeighted, Errors) {
  const auto d = clusters({-1.0, 1.0}, 5, 1.0, 8);
  const KernelBasis basis = build_basis(d.data, 5, 1.0, 0);
  Matrix gamma = Matrix::Zero(10, 2);
  gamma.col(0).setOnes();
  EXPECT_THROW(fit_posteriors_weighted(d.data, gamma, basis, 0.1), DataError);
  gamma(0, 1) = 0.5;
  EXPECT_THROW(fit_posteriors_weighted(d.data, gamma, basis, 0.1), InvalidArgument);
  EXPECT_THROW(fit_posteriors_weighted(d.data, Matrix::Constant(9, 2, 0.5), basis, 0.1), ShapeError);
}

TEST(Posterior, ClippingAndKernelDecay) {
  const auto d = clusters({-1.0, 1.0}, 20, 1.0, 9);
  PosteriorModel model = fit_posteriors(d.data, d.labels, 2, build_basis(d.data, 10, 0.5, 0), 0.1);
  EXPECT_LT(posterior(model, 0, at(100.0)), 1e-12);
  for (double y = -6.0; y <= 6.0; y += 0.25) {
    EXPECT_GE(posterior(model, 0, at(y)), 0.0);
    EXPECT_GE(posterior(model, 1, at(y)), 0.0);
  }
  EXPECT_THROW(posterior(model, 2, at(0.0)), InvalidArgument);
  model.coefficients.row(0).setZero();
  EXPECT_EQ(posterior(model, 0, at(0.3)), 0.0);
}

TEST(LikelihoodRatio, ReciprocityAndDiagonal) {
  std::mt19937_64 rng(10);
  const auto d = clusters({-2.0, 0.0, 2.0}, 30, 1.0, 10);
  const PosteriorModel model = fit_posteriors(d.data, d.labels, 3, build_basis(d.data, 40, 0.7, 0), 0.01);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto y = at(u(rng));
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(likelihood_ratio(model, i, i, y), 1.0);
      for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_NEAR(likelihood_ratio(model, i, j, y) * likelihood_ratio(model, j, i, y), 1.0, 1e-9);
      }
    }
  }
}

TEST(LikelihoodRatio, TracksAnalyticGaussianRatio) {
  const auto d = clusters({0.0, 1.0}, 2000, 1.0, 11);
  const double median = median_heuristic(d.data, 1000, 11);
  const CvSelection sel = cross_validate_multiclass(d.data, d.labels, 2, bandwidth_grid(median),
                                                    default_ridge_grid(), 5, 11);
  const PosteriorModel model =
      fit_posteriors(d.data, d.labels, 2, build_basis(d.data, 100, sel.sigma, 11), sel.ridge);
  for (double y = -1.0; y <= 2.0; y += 0.1) {
    const double w = likelihood_ratio(model, 0, 1, at(y));
    const double truth = std::exp(0.5 - y);
    EXPECT_LT(std::max(w / truth, truth / w), 1.5) << "y = " << y;
  }
}

TEST(LikelihoodRatio, CountPrefactorOrientation) {
  // Unequal class sizes with identical distributions: posteriors follow the class
  // priors but the likelihood ratio stays near one.
  std::mt19937_64 rng(12);
  Points data = oracle::normal_points(900, 0.0, 1.0, rng);
  std::vector<int> labels(900, 0);
  for (std::size_t t = 0; t < 300; ++t) labels[t] = 1;
  const PosteriorModel model = fit_posteriors(data, labels, 2, build_basis(data, 100, 1.0, 0), 1.0);
  EXPECT_NEAR(posterior(model, 0, at(0.0)), 2.0 / 3.0, 0.1);
  EXPECT_NEAR(likelihood_ratio(model, 0, 1, at(0.0)), 1.0, 0.2);
}

TEST(OutlierScore, RangeAndBehavior) {
  std::mt19937_64 rng(13);
  Points data = oracle::normal_points(500, 0.0, 1.0, rng);
  std::vector<int> labels(500);
  for (std::size_t t = 0; t < 500; ++t) labels[t] = data(static_cast<Eigen::Index>(t), 0) < 0.0 ? 0 : 1;
  const double median = median_heuristic(data, 1000, 0);
  const CvSelection sel = cross_validate_multiclass(data, labels, 2, bandwidth_grid(median),
                                                    default_ridge_grid(), 5, 0);
  PosteriorModel model = fit_posteriors(data, labels, 2, build_basis(data, 100, sel.sigma, 0), sel.ridge);
  EXPECT_LT(outlier_score(model, at(0.0)), 0.3);
  EXPECT_GT(outlier_score(model, at(50.0)), 0.999);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double s = outlier_score(model, at(u(rng)));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  model.coefficients.setZero();
  EXPECT_EQ(outlier_score(model, at(0.0)), 1.0);
}

TEST(OutlierCoefficients, OppositeRowsCancel) {
  const auto d = clusters({-1.0, 1.0}, 5, 1.0, 14);
  PosteriorModel model = fit_posteriors(d.data, d.labels, 2, build_basis(d.data, 10, 1.0, 0), 1.0);
  model.coefficients.row(1) = -model.coefficients.row(0);
  EXPECT_EQ(outlier_coefficients(model), Vector::Zero(10));
}

TEST(CrossValidateMulticlass, SeparatedClustersClassifyHeldOut) {
  const auto train = clusters({-6.0, 0.0, 6.0}, 60, 1.0, 15);
  const auto test = clusters({-6.0, 0.0, 6.0}, 100, 1.0, 16);
  const double median = median_heuristic(train.data, 1000, 0);
  const CvSelection sel = cross_validate_multiclass(train.data, train.labels, 3, bandwidth_grid(median),
                                                    default_ridge_grid(), 5, 0);
  const PosteriorModel model =
      fit_posteriors(train.data, train.labels, 3, build_basis(train.data, 100, sel.sigma, 0), sel.ridge);
  std::size_t hits = 0;
  std::size_t near_one = 0;
  for (Eigen::Index t = 0; t < test.data.rows(); ++t) {
    const Vector q = posteriors(model, test.data.row(t));
    Eigen::Index best = 0;
    q.maxCoeff(&best);
    hits += best == test.labels[static_cast<std::size_t>(t)] ? 1 : 0;
  }
  for (Eigen::Index t = 0; t < train.data.rows(); ++t) {
    const double total = posteriors(model, train.data.row(t)).sum();
    near_one += (total >= 0.9 && total <= 1.1) ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(hits) / static_cast<double>(test.data.rows()), 0.95);
  EXPECT_GE(static_cast<double>(near_one) / static_cast<double>(train.data.rows()), 0.95);
}

TEST(CrossValidateMulticlass, SinglePointGridDeterminismAndErrors) {
  const auto d = clusters({-1.0, 1.0, 3.0}, 12, 1.0, 17);
  const CvSelection one = cross_validate_multiclass(d.data, d.labels, 3, {0.5}, {0.01}, 3, 0);
  EXPECT_EQ(one.sigma, 0.5);
  EXPECT_EQ(one.ridge, 0.01);
  const auto grid = bandwidth_grid(1.0);
  const CvSelection a = cross_validate_multiclass(d.data, d.labels, 3, grid, default_ridge_grid(), 3, 9);
  const CvSelection b = cross_validate_multiclass(d.data, d.labels, 3, grid, default_ridge_grid(), 3, 9);
  EXPECT_EQ(a.score, b.score);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_THROW(cross_validate_multiclass(d.data, d.labels, 3, {}, {1.0}, 3, 0), InvalidArgument);
  EXPECT_THROW(cross_validate_multiclass(d.data, d.labels, 3, {1.0}, {1.0}, 13, 0), DataError);
}

TEST(StratifiedFolds, EveryClassReachesEveryFold) {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c) labels.insert(labels.end(), 7 + static_cast<std::size_t>(c), c);
  const auto folds = detail::stratified_folds(labels, 5, 3);
  for (int c = 0; c < 3; ++c) {
    std::set<int> seen;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) seen.insert(folds[i]);
    }
    EXPECT_EQ(seen.size(), 5u);
  }
  // Renaming classes leaves the assignment unchanged.
  std::vector<int> renamed = labels;
  for (int& l : renamed) l = 2 - l;
  EXPECT_EQ(detail::stratified_folds(renamed, 5, 3), folds);
}

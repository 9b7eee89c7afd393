#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "drhmm/kernel_basis.hpp"
#include "test_support.hpp"

using namespace drhmm;

namespace {

Eigen::RowVectorXd row(std::initializer_list<double> values) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) r(i++) = v;
  return r;
}

Points column(std::initializer_list<double> values) {
  Points p(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) p(i++, 0) = v;
  return p;
}

}  // namespace

TEST(KernelEval, ZeroDistanceIsOne) {
  EXPECT_EQ(kernel_eval(row({0.3, -2.0}), row({0.3, -2.0}), 0.7), 1.0);
}

TEST(KernelEval, HandComputedValues) {
  EXPECT_NEAR(kernel_eval(row({0.0}), row({1.0}), 1.0), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(kernel_eval(row({0.0}), row({1.0}), 1.0), 0.6065, 1e-4);
  EXPECT_NEAR(kernel_eval(row({0.0, 0.0}), row({3.0, 4.0}), 5.0), std::exp(-0.5), 1e-15);
}

TEST(KernelEval, Errors) {
  EXPECT_THROW(kernel_eval(row({0.0}), row({0.0, 1.0}), 1.0), ShapeError);
  EXPECT_THROW(kernel_eval(row({0.0}), row({1.0}), 0.0), InvalidArgument);
  EXPECT_THROW(kernel_eval(row({0.0}), row({1.0}), -1.0), InvalidArgument);
}

TEST(KernelEval, SymmetricAndMonotone) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::RowVectorXd a = row({g(rng), g(rng), g(rng)});
    const Eigen::RowVectorXd b = row({g(rng), g(rng), g(rng)});
    const double sigma = 0.1 + std::abs(g(rng));
    EXPECT_EQ(kernel_eval(a, b, sigma), kernel_eval(b, a, sigma));
    const Eigen::RowVectorXd farther = a + 1.5 * (b - a);
    if ((b - a).norm() > 1e-6 && kernel_eval(a, b, sigma) > 0.0) {
      EXPECT_LT(kernel_eval(a, farther, sigma), kernel_eval(a, b, sigma));
    }
  }
}

TEST(BuildBasis, AllPointsInOrderWhenFewerThanMax) {
  std::mt19937_64 rng(1);
  const Points data = oracle::normal_points(10, 0.0, 1.0, rng);
  const KernelBasis basis = build_basis(data, 100, 1.0, 5);
  ASSERT_EQ(basis.size(), 10u);
  for (std::size_t b = 0; b < 10; ++b) {
    EXPECT_EQ(basis.center_indices()[b], b);
    EXPECT_EQ(basis.centers()(static_cast<Eigen::Index>(b), 0), data(static_cast<Eigen::Index>(b), 0));
  }
}

TEST(BuildBasis, SubsampleIsDeterministicAndSeedDependent) {
  std::mt19937_64 rng(2);
  const Points data = oracle::normal_points(500, 0.0, 1.0, rng);
  const KernelBasis a = build_basis(data, 100, 1.0, 7);
  const KernelBasis b = build_basis(data, 100, 1.0, 7);
  const KernelBasis c = build_basis(data, 100, 1.0, 8);
  EXPECT_EQ(a.size(), 100u);
  EXPECT_EQ(a.center_indices(), b.center_indices());
  EXPECT_EQ(a.centers(), b.centers());
  EXPECT_NE(a.center_indices(), c.center_indices());
  // Sorted, distinct, and the centers are the indexed training rows.
  EXPECT_TRUE(std::is_sorted(a.center_indices().begin(), a.center_indices().end()));
  EXPECT_EQ(std::set<std::size_t>(a.center_indices().begin(), a.center_indices().end()).size(), 100u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a.centers().row(static_cast<Eigen::Index>(k)),
              data.row(static_cast<Eigen::Index>(a.center_indices()[k])));
  }
}

TEST(BuildBasis, Errors) {
  EXPECT_THROW(build_basis(Points(0, 1), 10, 1.0, 0), InvalidArgument);
  EXPECT_THROW(build_basis(column({1.0, 2.0}), 0, 1.0, 0), InvalidArgument);
  EXPECT_THROW(build_basis(column({1.0, 2.0}), 10, 0.0, 0), InvalidArgument);
  EXPECT_THROW(build_basis(column({3.0, 3.0, 3.0}), 10, 1.0, 0), InvalidArgument);
  EXPECT_NO_THROW(build_basis(column({3.0}), 10, 1.0, 0));
}

TEST(DesignMatrix, CentersGiveUnitDiagonalAndSymmetry) {
  std::mt19937_64 rng(4);
  Points data(30, 2);
  std::normal_distribution<double> g;
  for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = g(rng);
  const KernelBasis basis = build_basis(data, 100, 0.8, 0);
  const Matrix phi = design_matrix(basis, basis.centers());
  for (Eigen::Index b = 0; b < phi.rows(); ++b) EXPECT_EQ(phi(b, b), 1.0);
  EXPECT_EQ(phi, phi.transpose());
  EXPECT_TRUE((phi.array() > 0.0).all() && (phi.array() <= 1.0).all());
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_EQ(Vector(phi.row(i).transpose()), basis.features(basis.centers().row(i)));
  }
}

TEST(DesignMatrix, FarPointAndEmptyInput) {
  const KernelBasis basis = build_basis(column({0.0, 1.0, 2.0}), 100, 0.5, 0);
  const Matrix far = design_matrix(basis, column({100.0}));
  EXPECT_TRUE((far.array() < 1e-10).all());
  const Matrix empty = design_matrix(basis, Points(0, 1));
  EXPECT_EQ(empty.rows(), 0);
  EXPECT_EQ(empty.cols(), 3);
  Points wrong(1, 2);
  wrong << 0.0, 0.0;
  EXPECT_THROW(design_matrix(basis, wrong), ShapeError);
}

TEST(MedianHeuristic, SmallExamples) {
  EXPECT_EQ(median_heuristic(column({0.0, 1.0}), 1000, 0), 1.0);
  EXPECT_EQ(median_heuristic(column({0.0, 1.0, 2.0}), 1000, 0), 1.0);
  // Distances {1, 2, 3, 1, 2, 1}: even count, middle pair (1, 2).
  EXPECT_EQ(median_heuristic(column({0.0, 1.0, 2.0, 3.0}), 1000, 0), 1.5);
}

TEST(MedianHeuristic, StandardNormalSample) {
  // Analytic median of |X - Y| for X, Y ~ N(0, 1) is sqrt(2) * 0.6745 = 0.954; the
  // sampled value spread is [0.897, 0.976] over 20 seeds.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Points data = oracle::normal_points(1000, 0.0, 1.0, rng);
    const double m = median_heuristic(data, 1000, seed);
    EXPECT_GT(m, 0.85);
    EXPECT_LT(m, 1.05);
  }
}

TEST(MedianHeuristic, DuplicatesAndErrors) {
  EXPECT_EQ(median_heuristic(column({1.0, 1.0, 1.0, 1.0, 3.0}), 1000, 0), 2.0);
  EXPECT_THROW(median_heuristic(column({1.0}), 1000, 0), InvalidArgument);
  EXPECT_THROW(median_heuristic(column({2.0, 2.0, 2.0}), 1000, 0), InvalidArgument);
}

TEST(MedianHeuristic, SubsampleIsSeeded) {
  std::mt19937_64 rng(9);
  const Points data = oracle::normal_points(3000, 0.0, 1.0, rng);
  EXPECT_EQ(median_heuristic(data, 200, 4), median_heuristic(data, 200, 4));
}

TEST(BandwidthGrid, DefaultMultipliers) {
  const auto grid = bandwidth_grid(2.0);
  ASSERT_EQ(grid.size(), 5u);
  EXPECT_EQ(grid, (std::vector<double>{0.5, 1.0, 2.0, 4.0, 8.0}));
}

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "drhmm/synth_data.hpp"

using namespace drhmm;

TEST(SampleStates, IdentityTransitionsKeepTheFirstState) {
  ToyConfig config;
  config.transitions = Matrix::Identity(3, 3);
  config.length = 500;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    config.seed = seed;
    const auto states = sample_states(config);
    for (int s : states) EXPECT_EQ(s, states.front());
  }
}

TEST(SampleStates, SelfTransitionFrequencyMatchesTheChain) {
  ToyConfig config;
  config.length = 100000;
  config.seed = 3;
  const auto states = sample_states(config);
  std::size_t stays = 0;
  for (std::size_t t = 1; t < states.size(); ++t) stays += states[t] == states[t - 1];
  EXPECT_NEAR(static_cast<double>(stays) / static_cast<double>(states.size() - 1), 0.98, 0.005);
  std::vector<std::size_t> visits(3, 0);
  for (int s : states) ++visits[static_cast<std::size_t>(s)];
  for (auto v : visits) EXPECT_GT(v, 10000u);
}

TEST(SampleObservations, NoiselessSine) {
  ToyConfig config;
  config.noise_std = 0.0;
  const StateSequence states(50, 0);
  const auto y = sample_observations(states, config);
  for (std::size_t k = 0; k < y.size(); ++k) {
    EXPECT_NEAR(y[k], std::sin(0.2 * static_cast<double>(k + 1)), 1e-15);
  }
  const auto shifted = sample_observations(StateSequence(5, 2), config, 11);
  EXPECT_NEAR(shifted[0], std::sin(0.6 * 11.0), 1e-15);
}

TEST(SampleObservations, NoiseVarianceIsNoiseStdSquared) {
  ToyConfig config;
  config.seed = 4;
  const StateSequence states(100000, 1);
  const auto y = sample_observations(states, config);
  double mean = 0.0;
  std::vector<double> residual(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    residual[k] = y[k] - std::sin(0.4 * static_cast<double>(k + 1));
    mean += residual[k];
  }
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double r : residual) var += (r - mean) * (r - mean);
  var /= static_cast<double>(y.size());
  EXPECT_NEAR(var, 0.25, 0.01);
  EXPECT_NEAR(mean, 0.0, 0.01);
}

TEST(SampleObservations, StateBeyondFrequencies) {
  ToyConfig config;
  EXPECT_THROW(sample_observations(StateSequence{0, 3}, config), InvalidArgument);
  EXPECT_THROW(sample_observations(StateSequence{-1}, config), InvalidArgument);
}

TEST(SlidingWindow, SmallExample) {
  const auto w = sliding_window({1, 2, 3, 4, 5}, 4, StateSequence{0, 0, 1, 1, 2});
  ASSERT_EQ(w.observations.rows(), 2);
  ASSERT_EQ(w.observations.cols(), 4);
  EXPECT_EQ(w.observations.row(0), (Eigen::RowVector4d(1, 2, 3, 4)));
  EXPECT_EQ(w.observations.row(1), (Eigen::RowVector4d(2, 3, 4, 5)));
  EXPECT_EQ(w.labels, (StateSequence{1, 2}));
  EXPECT_EQ(w.frames, (std::vector<std::size_t>{4, 5}));
}

TEST(SlidingWindow, WidthOneIsIdentity) {
  const std::vector<double> series{0.5, -1.0, 2.0};
  const auto w = sliding_window(series, 1);
  ASSERT_EQ(w.observations.rows(), 3);
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_EQ(w.observations(k, 0), series[static_cast<std::size_t>(k)]);
  EXPECT_TRUE(w.labels.empty());
}

TEST(SlidingWindow, CountsAndOverlap) {
  std::vector<double> series(30);
  std::iota(series.begin(), series.end(), 0.0);
  for (std::size_t d : {1u, 2u, 5u, 30u}) {
    const auto w = sliding_window(series, d);
    EXPECT_EQ(static_cast<std::size_t>(w.observations.rows()), series.size() - d + 1);
    for (Eigen::Index k = 1; k < w.observations.rows(); ++k) {
      const auto n = static_cast<Eigen::Index>(d) - 1;
      EXPECT_EQ(w.observations.row(k).head(n), w.observations.row(k - 1).tail(n));
    }
  }
}

TEST(SlidingWindow, Errors) {
  EXPECT_THROW(sliding_window({1, 2, 3}, 0), InvalidArgument);
  EXPECT_THROW(sliding_window({1, 2, 3}, 4), InvalidArgument);
  EXPECT_THROW(sliding_window({1, 2, 3}, 2, StateSequence{0, 1}), ShapeError);
}

TEST(GenerateToy, DeterministicAndSeedDependent) {
  ToyConfig config;
  config.length = 300;
  config.seed = 9;
  const auto a = generate_toy(config);
  const auto b = generate_toy(config);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.series, b.series);
  EXPECT_EQ(a.windows.observations, b.windows.observations);
  EXPECT_EQ(a.windows.observations.rows(), 297);
  EXPECT_EQ(a.windows.labels.size(), 297u);
  config.seed = 10;
  EXPECT_NE(generate_toy(config).series, a.series);
}

TEST(GenerateToy, Validation) {
  ToyConfig config;
  config.noise_std = -1.0;
  EXPECT_THROW(generate_toy(config), InvalidArgument);
  config = ToyConfig{};
  config.window = 0;
  EXPECT_THROW(generate_toy(config), InvalidArgument);
  config = ToyConfig{};
  config.length = 2;
  EXPECT_THROW(generate_toy(config), InvalidArgument);
  config = ToyConfig{};
  config.frequencies = {0.2, 0.4};
  EXPECT_THROW(generate_toy(config), InvalidArgument);
}

TEST(GenerateRegimeSegment, SingleStateWindows) {
  ToyConfig config;
  config.seed = 2;
  const auto seg = generate_regime_segment(config, 1, 50, 7);
  EXPECT_EQ(seg.observations.rows(), 50);
  for (int l : seg.labels) EXPECT_EQ(l, 1);
  config.noise_std = 0.0;
  const auto clean = generate_regime_segment(config, 2, 3, 7);
  EXPECT_NEAR(clean.observations(0, 0), std::sin(0.6 * 7.0), 1e-15);
}

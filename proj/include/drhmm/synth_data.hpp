#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "drhmm/core.hpp"
#include "drhmm/hmm_inference.hpp"

namespace drhmm {

/// Switching noisy-sine generator: y_t = sin(f_{x_t} t) + eta_t, eta_t ~ N(0, noise_std^2),
/// with x_t a Markov chain.
struct ToyConfig {
  Matrix transitions = default_transitions();
  Vector initial = Vector::Constant(3, 1.0 / 3.0);
  std::vector<double> frequencies{0.2, 0.4, 0.6};
  /// Standard deviation; 0.5 reads N(0; 0.25) as variance 0.25.
  double noise_std = 0.5;
  std::size_t length = 1000;
  std::size_t window = 4;
  std::uint64_t seed = 0;

  static Matrix default_transitions() {
    Matrix a(3, 3);
    a << 0.98, 0.01, 0.01,  //
        0.01, 0.98, 0.01,   //
        0.01, 0.01, 0.98;
    return a;
  }
};

/// Windowed observations aligned with the frame each window ends on.
struct WindowedSequence {
  Points observations;  // (T - d + 1) x d, oldest sample first
  StateSequence labels;  // label of each window's last frame; empty when unlabeled
  std::vector<std::size_t> frames;  // 1-based original frame index
};

struct ToySequence {
  StateSequence states;
  std::vector<double> series;
  WindowedSequence windows;
};

inline void validate(const ToyConfig& config) {
  validate(TransitionModel{config.transitions, config.initial});
  detail::require(config.frequencies.size() == static_cast<std::size_t>(config.initial.size()),
                  "ToyConfig: one frequency per state");
  for (double f : config.frequencies) detail::require(f > 0.0, "ToyConfig: frequencies must be positive");
  detail::require(config.noise_std >= 0.0, "ToyConfig: noise_std must be nonnegative");
  detail::require(config.window >= 1, "ToyConfig: window must be >= 1");
  detail::require(config.length >= config.window, "ToyConfig: length must be >= window");
}

namespace detail {

inline int sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs,
                              std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    cumulative += probs(i);
    if (u < cumulative) return static_cast<int>(i);
  }
  // Rounding left u above the last cumulative sum: take the last positive entry.
  for (Eigen::Index i = probs.size() - 1; i >= 0; --i) {
    if (probs(i) > 0.0) return static_cast<int>(i);
  }
  return 0;
}

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id)};
  return std::mt19937_64(seq);
}

}  // namespace detail

inline StateSequence sample_states(const ToyConfig& config) {
  validate(config);
  auto rng = detail::stream(config.seed, 1);
  StateSequence states(config.length);
  states[0] = detail::sample_categorical(config.initial.transpose(), rng);
  for (std::size_t t = 1; t < config.length; ++t) {
    states[t] = detail::sample_categorical(config.transitions.row(states[t - 1]), rng);
  }
  return states;
}

/// y_t = sin(f_{x_t} t) + noise with t = first_frame, first_frame + 1, ... (absolute
/// frame index, no per-regime phase reset).
inline std::vector<double> sample_observations(const StateSequence& states, const ToyConfig& config,
                                               std::size_t first_frame = 1) {
  detail::require(config.noise_std >= 0.0, "sample_observations: noise_std must be nonnegative");
  auto rng = detail::stream(config.seed, 2);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> y(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    const int s = states[k];
    detail::require(s >= 0 && static_cast<std::size_t>(s) < config.frequencies.size(),
                    "sample_observations: state exceeds configured frequencies");
    const auto t = static_cast<double>(first_frame + k);
    const double eta = noise(rng);
    y[k] = std::sin(config.frequencies[static_cast<std::size_t>(s)] * t) + config.noise_std * eta;
  }
  return y;
}

/// Window t holds y_{t-d+1..t}; frames before d are dropped and labels follow the
/// window's last frame.
inline WindowedSequence sliding_window(const std::vector<double>& series, std::size_t window,
                                       const StateSequence& labels = {}) {
  detail::require(window >= 1, "sliding_window: window must be >= 1");
  detail::require(series.size() >= window, "sliding_window: series shorter than window");
  detail::require_shape(labels.empty() || labels.size() == series.size(),
                        "sliding_window: one label per frame");
  const std::size_t count = series.size() - window + 1;
  WindowedSequence out;
  out.observations.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(window));
  out.frames.resize(count);
  if (!labels.empty()) out.labels.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t j = 0; j < window; ++j) {
      out.observations(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = series[k + j];
    }
    out.frames[k] = k + window;
    if (!labels.empty()) out.labels[k] = labels[k + window - 1];
  }
  return out;
}

inline ToySequence generate_toy(const ToyConfig& config) {
  ToySequence seq;
  seq.states = sample_states(config);
  seq.series = sample_observations(seq.states, config);
  seq.windows = sliding_window(seq.series, config.window, seq.states);
  return seq;
}

/// One regime held fixed for `windows` windowed frames, starting at absolute frame
/// `first_frame`.
inline WindowedSequence generate_regime_segment(const ToyConfig& config, int state,
                                                std::size_t windows, std::size_t first_frame) {
  detail::require(windows >= 1, "generate_regime_segment: need at least one window");
  const StateSequence states(windows + config.window - 1, state);
  const auto series = sample_observations(states, config, first_frame);
  return sliding_window(series, config.window, states);
}

}  // namespace drhmm

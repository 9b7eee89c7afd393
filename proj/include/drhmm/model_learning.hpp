#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "drhmm/core.hpp"
#include "drhmm/hmm_inference.hpp"
#include "drhmm/kernel_basis.hpp"
#include "drhmm/multiclass_posterior.hpp"

namespace drhmm {

/// Time-ordered observations, one row per frame, with optional 0-based state labels.
struct LabeledSequence {
  Points observations;
  std::optional<StateSequence> labels;
};

using TrainingCorpus = std::vector<LabeledSequence>;

struct LearningConfig {
  std::size_t max_centers = kDefaultMaxCenters;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  /// Additive pseudo-count for transition and initial-state estimates.
  double smoothing = 1.0;
  std::vector<double> sigma_multipliers{0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> ridge_grid = default_ridge_grid();
  std::size_t median_subsample = 1000;
  // Unsupervised only.
  std::size_t max_iterations = 50;
  double tolerance = 1e-4;
};

struct FitMetadata {
  std::uint64_t seed = 0;
  double median_distance = 0.0;
  CvSelection selection;
  bool unsupervised = false;
  std::size_t em_iterations = 0;
  double final_change = 0.0;
  std::vector<double> change_history;
};

/// Transition model plus posterior (ratio) model: everything needed for inference.
struct FittedDrHmm {
  TransitionModel transitions;
  PosteriorModel posteriors;
  FitMetadata metadata;

  std::size_t num_states() const { return transitions.num_states(); }
  Eigen::Index dimension() const { return posteriors.basis.dimension(); }
};

/// Frequency estimate of A and pi from labeled sequences. Transitions never span
/// sequence boundaries; `smoothing` is added to every count.
inline TransitionModel estimate_transitions(const TrainingCorpus& corpus, std::size_t num_states,
                                            double smoothing) {
  detail::require(num_states >= 1, "estimate_transitions: need at least one state");
  detail::require(smoothing >= 0.0, "estimate_transitions: smoothing must be nonnegative");
  detail::require(!corpus.empty(), "estimate_transitions: empty corpus");
  const auto s = static_cast<Eigen::Index>(num_states);
  Matrix counts = Matrix::Zero(s, s);
  Vector first = Vector::Zero(s);
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    if (!corpus[n].labels) {
      throw DataError("estimate_transitions: sequence " + std::to_string(n + 1) + " is unlabeled");
    }
    const auto& labels = *corpus[n].labels;
    if (labels.empty()) continue;
    for (int l : labels) {
      if (l < 0 || l >= s) throw DataError("estimate_transitions: label out of range");
    }
    first(labels.front()) += 1.0;
    for (std::size_t t = 1; t < labels.size(); ++t) counts(labels[t - 1], labels[t]) += 1.0;
  }
  counts.array() += smoothing;
  first.array() += smoothing;
  for (Eigen::Index i = 0; i < s; ++i) {
    const double total = counts.row(i).sum();
    if (!(total > 0.0)) {
      throw DataError("estimate_transitions: state " + std::to_string(i + 1) +
                      " never starts a transition and smoothing is zero");
    }
    counts.row(i) /= total;
  }
  if (!(first.sum() > 0.0)) throw DataError("estimate_transitions: no labeled frames");
  first /= first.sum();
  return TransitionModel{std::move(counts), std::move(first)};
}

namespace detail {

inline void pool_labeled(const TrainingCorpus& corpus, Points& data, std::vector<int>& labels) {
  Eigen::Index rows = 0;
  Eigen::Index dim = -1;
  for (const auto& seq : corpus) {
    if (!seq.labels) throw DataError("fit_supervised: unlabeled sequence in corpus");
    require_shape(seq.labels->size() == static_cast<std::size_t>(seq.observations.rows()),
                  "fit_supervised: one label per frame");
    if (seq.observations.rows() == 0) continue;
    if (dim < 0) dim = seq.observations.cols();
    require_shape(seq.observations.cols() == dim, "fit_supervised: inconsistent observation dimension");
    rows += seq.observations.rows();
  }
  require(rows > 0, "fit_supervised: corpus has no observations");
  data.resize(rows, dim);
  labels.clear();
  Eigen::Index at = 0;
  for (const auto& seq : corpus) {
    if (seq.observations.rows() == 0) continue;
    data.middleRows(at, seq.observations.rows()) = seq.observations;
    at += seq.observations.rows();
    labels.insert(labels.end(), seq.labels->begin(), seq.labels->end());
  }
}

/// CV over the median-heuristic bandwidth grid, then the final basis and fit.
inline std::pair<PosteriorModel, FitMetadata> select_and_fit(const Points& data,
                                                             const std::vector<int>& labels,
                                                             std::size_t num_states,
                                                             const LearningConfig& config) {
  FitMetadata meta;
  meta.seed = config.seed;
  meta.median_distance = median_heuristic(data, config.median_subsample, config.seed);
  meta.selection = cross_validate_multiclass(
      data, labels, num_states, bandwidth_grid(meta.median_distance, config.sigma_multipliers),
      config.ridge_grid, config.folds, config.seed, config.max_centers);
  const KernelBasis basis =
      build_basis(data, config.max_centers, meta.selection.sigma, config.seed);
  return {fit_posteriors(data, labels, num_states, basis, meta.selection.ridge), meta};
}

}  // namespace detail

inline FittedDrHmm fit_supervised(const TrainingCorpus& corpus, std::size_t num_states,
                                  const LearningConfig& config = {}) {
  Points data;
  std::vector<int> labels;
  detail::pool_labeled(corpus, data, labels);
  detail::check_class_labels(data, labels, num_states);
  for (std::size_t c = 0; c < num_states; ++c) {
    if (std::find(labels.begin(), labels.end(), static_cast<int>(c)) == labels.end()) {
      throw DataError("fit_supervised: class " + std::to_string(c + 1) + " has no samples");
    }
  }
  TransitionModel transitions = estimate_transitions(corpus, num_states, config.smoothing);
  auto [posteriors, meta] = detail::select_and_fit(data, labels, num_states, config);
  return FittedDrHmm{std::move(transitions), std::move(posteriors), std::move(meta)};
}

// ---------------------------------------------------------------------------
// Inference with a fitted model.

enum class InferenceMode { filter, smooth, independent };

/// Per-frame state probabilities. `independent` applies each frame's likelihood
/// ratios under a uniform prior.
inline Matrix infer_probabilities(const FittedDrHmm& model, const Points& observations,
                                  InferenceMode mode) {
  detail::require_shape(observations.cols() == model.dimension(),
                        "inference: observation dimension does not match the model");
  detail::require(observations.rows() >= 1, "inference: no observations");
  const RatioSequence ratios =
      evaluate_ratios(PosteriorRatioProvider{&model.posteriors}, observations);
  const TransitionModel transitions = with_transition_floor(model.transitions);
  switch (mode) {
    case InferenceMode::filter:
      return messages_to_probs(forward_ratio(transitions, ratios));
    case InferenceMode::smooth:
      return messages_to_probs(ratio_forward_backward(transitions, ratios).combined);
    case InferenceMode::independent:
      return messages_to_probs(ratios);
  }
  throw InvalidArgument("inference: unknown mode");
}

inline StateSequence infer_states(const FittedDrHmm& model, const Points& observations,
                                  InferenceMode mode) {
  if (mode == InferenceMode::independent) {
    detail::require_shape(observations.cols() == model.dimension(),
                          "inference: observation dimension does not match the model");
    return classify_independent(PosteriorRatioProvider{&model.posteriors}, observations);
  }
  return map_decode(infer_probabilities(model, observations, mode));
}

// ---------------------------------------------------------------------------
// Unsupervised learning.

/// k-means with k = S: farthest-point initialization from a seeded first center, at
/// most 100 Lloyd iterations, empty clusters reseeded to the worst-fitted point.
inline StateSequence init_unsupervised(const Points& observations, std::size_t num_states,
                                       std::uint64_t seed) {
  detail::require(num_states >= 1, "init_unsupervised: need at least one state");
  const auto n = observations.rows();
  if (static_cast<std::size_t>(n) < num_states) {
    throw InvalidArgument("init_unsupervised: fewer observations than states");
  }
  StateSequence labels(static_cast<std::size_t>(n), 0);
  if (num_states == 1) return labels;

  const auto k = static_cast<Eigen::Index>(num_states);
  std::mt19937_64 rng(seed);
  Points centers(k, observations.cols());
  centers.row(0) = observations.row(
      std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  Vector nearest = (observations.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < k; ++c) {
    Eigen::Index far = 0;
    nearest.maxCoeff(&far);
    centers.row(c) = observations.row(far);
    nearest = nearest.cwiseMin((observations.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  Vector dist(n);
  for (int iteration = 0; iteration < 100; ++iteration) {
    bool changed = iteration == 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = (observations.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      dist(i) = best_d;
      if (labels[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    Points sums = Points::Zero(k, observations.cols());
    Vector sizes = Vector::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += observations.row(i);
      sizes(labels[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (sizes(c) > 0.0) {
        centers.row(c) = sums.row(c) / sizes(c);
      } else {
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        centers.row(c) = observations.row(far);
        dist(far) = 0.0;
      }
    }
  }
  return labels;
}

namespace detail {

struct ExpectedCounts {
  Matrix gamma;        // T x S smoothed state probabilities
  Matrix transitions;  // S x S expected transition counts
};

/// Smoothed posteriors and pairwise transition statistics from ratio messages
/// converted to probabilities:
///   xi_t(i, j) ∝ alpha_i(t) A_ij l_j(t+1) beta_j(t+1)
/// with l(t+1) the likelihood vector implied by W(t+1).
inline ExpectedCounts expected_counts(const TransitionModel& transitions,
                                      const RatioSequence& ratios) {
  const RatioMessages messages = ratio_forward_backward(transitions, ratios);
  ExpectedCounts out;
  out.gamma = messages_to_probs(messages.combined);
  const auto s = static_cast<Eigen::Index>(transitions.num_states());
  out.transitions = Matrix::Zero(s, s);
  for (std::size_t t = 0; t + 1 < ratios.size(); ++t) {
    const Vector alpha = ratios_to_probs(messages.forward[t]);
    const Vector beta = ratios_to_probs(messages.backward[t + 1]);
    const Vector like = ratios_to_probs(ratios[t + 1]);
    Matrix xi = alpha.asDiagonal() * transitions.transitions *
                like.cwiseProduct(beta).asDiagonal();
    const double total = xi.sum();
    if (total > 0.0 && std::isfinite(total)) out.transitions += xi / total;
  }
  return out;
}

inline TransitionModel transitions_from_counts(const ExpectedCounts& counts, double smoothing) {
  Matrix a = counts.transitions.array() + smoothing;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double total = a.row(i).sum();
    if (!(total > 0.0)) {
      throw DataError("unsupervised fit: state " + std::to_string(i + 1) +
                      " has no expected outgoing transitions");
    }
    a.row(i) /= total;
  }
  Vector pi = counts.gamma.row(0).transpose().array() + smoothing;
  pi /= pi.sum();
  return TransitionModel{std::move(a), std::move(pi)};
}

inline void check_not_collapsed(const Matrix& gamma) {
  const Vector totals = gamma.colwise().sum().transpose();
  for (Eigen::Index i = 0; i < totals.size(); ++i) {
    if (totals(i) < 1e-8) {
      throw DataError("unsupervised fit: class " + std::to_string(i + 1) +
                      " collapsed (total responsibility below 1e-8)");
    }
  }
}

}  // namespace detail

/// EM for an unlabeled sequence started from the given hard labels: bandwidth/ridge
/// selected once on those labels, then alternating weighted posterior refits plus A,
/// pi updates with ratio-form smoothing until the largest responsibility change drops
/// below `tolerance` or `max_iterations` is reached.
inline FittedDrHmm fit_unsupervised(const Points& observations, std::size_t num_states,
                                    const StateSequence& init, const LearningConfig& config) {
  detail::require(num_states >= 2, "fit_unsupervised: need at least two states");
  detail::check_class_labels(observations, init, num_states);
  const TrainingCorpus corpus{LabeledSequence{observations, init}};

  FitMetadata meta;
  meta.unsupervised = true;
  meta.seed = config.seed;
  meta.median_distance = median_heuristic(observations, config.median_subsample, config.seed);
  meta.selection = cross_validate_multiclass(
      observations, init, num_states,
      bandwidth_grid(meta.median_distance, config.sigma_multipliers), config.ridge_grid,
      config.folds, config.seed, config.max_centers);
  const KernelBasis basis =
      build_basis(observations, config.max_centers, meta.selection.sigma, config.seed);
  const double ridge = meta.selection.ridge;

  Matrix gamma = detail::one_hot(init, num_states);
  TransitionModel transitions = estimate_transitions(corpus, num_states, config.smoothing);
  PosteriorModel posteriors = fit_posteriors_weighted(observations, gamma, basis, ridge);

  for (std::size_t it = 0; it < config.max_iterations; ++it) {
    const RatioSequence ratios =
        evaluate_ratios(PosteriorRatioProvider{&posteriors}, observations);
    const auto counts = detail::expected_counts(with_transition_floor(transitions), ratios);
    const double change = (counts.gamma - gamma).cwiseAbs().maxCoeff();
    gamma = counts.gamma;
    meta.change_history.push_back(change);
    meta.final_change = change;
    meta.em_iterations = it + 1;
    detail::check_not_collapsed(gamma);

    posteriors = fit_posteriors_weighted(observations, gamma, basis, ridge);
    transitions = detail::transitions_from_counts(counts, config.smoothing);
    if (change < config.tolerance) break;
  }
  return FittedDrHmm{std::move(transitions), std::move(posteriors), std::move(meta)};
}

/// EM started from k-means labels.
inline FittedDrHmm fit_unsupervised(const Points& observations, std::size_t num_states,
                                    const LearningConfig& config = {}) {
  detail::require(num_states >= 2, "fit_unsupervised: need at least two states");
  return fit_unsupervised(observations, num_states,
                          init_unsupervised(observations, num_states, config.seed), config);
}

}  // namespace drhmm

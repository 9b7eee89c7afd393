#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "drhmm/core.hpp"
#include "drhmm/ratio_provider.hpp"

namespace drhmm {

/// Row-stochastic transition matrix, entry (i, j) = p(x_t = j | x_{t-1} = i), and the
/// initial state distribution.
struct TransitionModel {
  Matrix transitions;
  Vector initial;

  std::size_t num_states() const { return static_cast<std::size_t>(initial.size()); }
};

/// Smallest admissible transition probability for the ratio recursions, which divide
/// by transition entries.
inline constexpr double kTransitionFloor = 1e-12;

inline void validate(const TransitionModel& model) {
  const auto s = model.initial.size();
  detail::require_shape(s >= 1 && model.transitions.rows() == s && model.transitions.cols() == s,
                        "TransitionModel: transitions must be S x S with S = size of initial");
  detail::require(model.transitions.allFinite() && model.initial.allFinite(),
                  "TransitionModel: non-finite entry");
  detail::require((model.transitions.array() >= 0.0).all() && (model.initial.array() >= 0.0).all(),
                  "TransitionModel: negative probability");
  for (Eigen::Index i = 0; i < s; ++i) {
    detail::require(std::abs(model.transitions.row(i).sum() - 1.0) <= 1e-9,
                    "TransitionModel: row " + std::to_string(i + 1) + " does not sum to one");
  }
  detail::require(std::abs(model.initial.sum() - 1.0) <= 1e-9,
                  "TransitionModel: initial distribution does not sum to one");
}

inline TransitionModel make_transition_model(Matrix transitions, Vector initial) {
  TransitionModel model{std::move(transitions), std::move(initial)};
  validate(model);
  return model;
}

/// Raises transition entries below `floor` to `floor` and renormalizes the affected
/// rows; rows already at or above the floor are left untouched.
inline TransitionModel with_transition_floor(const TransitionModel& model,
                                             double floor = kTransitionFloor) {
  validate(model);
  TransitionModel out = model;
  for (Eigen::Index i = 0; i < out.transitions.rows(); ++i) {
    if (out.transitions.row(i).minCoeff() >= floor) continue;
    out.transitions.row(i) = out.transitions.row(i).cwiseMax(floor);
    out.transitions.row(i) /= out.transitions.row(i).sum();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Standard forward-backward with per-frame normalization.

namespace detail {

inline void check_likelihoods(const TransitionModel& model, const Matrix& likelihoods) {
  validate(model);
  require_shape(likelihoods.cols() == static_cast<Eigen::Index>(model.num_states()),
                "likelihood matrix must have one column per state");
  require(likelihoods.rows() >= 1, "likelihood matrix must have at least one frame");
  require((likelihoods.array() >= 0.0).all() && likelihoods.allFinite(),
          "likelihoods must be finite and nonnegative");
}

inline void normalize_row(Matrix& m, Eigen::Index t, const char* what) {
  const double total = m.row(t).sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericalError(std::string(what) + ": frame " + std::to_string(t + 1) +
                         " cannot be normalized");
  }
  m.row(t) /= total;
}

}  // namespace detail

/// Filtering messages p(x_t | y_1:t), one row per frame.
inline Matrix forward_standard(const TransitionModel& model, const Matrix& likelihoods) {
  detail::check_likelihoods(model, likelihoods);
  Matrix alpha(likelihoods.rows(), likelihoods.cols());
  alpha.row(0) = model.initial.transpose().cwiseProduct(likelihoods.row(0));
  detail::normalize_row(alpha, 0, "forward_standard");
  for (Eigen::Index t = 1; t < likelihoods.rows(); ++t) {
    alpha.row(t) = (alpha.row(t - 1) * model.transitions).cwiseProduct(likelihoods.row(t));
    detail::normalize_row(alpha, t, "forward_standard");
  }
  return alpha;
}

/// Forward recursion with the normalization step skipped; underflows on long inputs.
inline Matrix forward_unnormalized(const TransitionModel& model, const Matrix& likelihoods) {
  detail::check_likelihoods(model, likelihoods);
  Matrix alpha(likelihoods.rows(), likelihoods.cols());
  alpha.row(0) = model.initial.transpose().cwiseProduct(likelihoods.row(0));
  for (Eigen::Index t = 1; t < likelihoods.rows(); ++t) {
    alpha.row(t) = (alpha.row(t - 1) * model.transitions).cwiseProduct(likelihoods.row(t));
  }
  return alpha;
}

/// Backward messages, normalized per frame; the final frame is uniform.
inline Matrix backward_standard(const TransitionModel& model, const Matrix& likelihoods) {
  detail::check_likelihoods(model, likelihoods);
  const Eigen::Index frames = likelihoods.rows();
  Matrix beta(frames, likelihoods.cols());
  beta.row(frames - 1).setOnes();
  detail::normalize_row(beta, frames - 1, "backward_standard");
  for (Eigen::Index t = frames - 2; t >= 0; --t) {
    const Eigen::RowVectorXd next = likelihoods.row(t + 1).cwiseProduct(beta.row(t + 1));
    beta.row(t) = (model.transitions * next.transpose()).transpose();
    detail::normalize_row(beta, t, "backward_standard");
  }
  return beta;
}

/// gamma_i(t) = alpha_i beta_i / sum_j alpha_j beta_j.
inline Matrix smooth_standard(const Matrix& alpha, const Matrix& beta) {
  detail::require_shape(alpha.rows() == beta.rows() && alpha.cols() == beta.cols(),
                        "smooth_standard: alpha and beta shapes differ");
  Matrix gamma = alpha.cwiseProduct(beta);
  for (Eigen::Index t = 0; t < gamma.rows(); ++t) detail::normalize_row(gamma, t, "smooth_standard");
  return gamma;
}

// ---------------------------------------------------------------------------
// Ratio-form forward-backward.

/// Per-frame S x S likelihood-ratio matrices W(t)(i, j) = w_ij(y_t).
using RatioSequence = std::vector<Matrix>;

/// Per-frame S x S pairwise ratio messages.
using RatioFrames = std::vector<Matrix>;

struct RatioMessages {
  RatioFrames forward;
  RatioFrames backward;
  RatioFrames combined;
};

template <LikelihoodRatioProvider Provider>
RatioSequence evaluate_ratios(const Provider& provider, const Points& observations) {
  RatioSequence out;
  out.reserve(static_cast<std::size_t>(observations.rows()));
  for (Eigen::Index t = 0; t < observations.rows(); ++t) {
    out.push_back(provider.ratio_matrix(observations.row(t)));
  }
  return out;
}

/// Ratio sequence implied by a T x S matrix of (possibly unnormalized) likelihoods.
inline RatioSequence ratios_from_likelihoods(const Matrix& likelihoods) {
  detail::require((likelihoods.array() > 0.0).all() && likelihoods.allFinite(),
                  "ratios_from_likelihoods: likelihoods must be positive and finite");
  RatioSequence out;
  out.reserve(static_cast<std::size_t>(likelihoods.rows()));
  const auto s = likelihoods.cols();
  for (Eigen::Index t = 0; t < likelihoods.rows(); ++t) {
    Matrix w = Matrix::Ones(s, s);
    for (Eigen::Index i = 0; i < s; ++i) {
      for (Eigen::Index j = i + 1; j < s; ++j) {
        w(i, j) = likelihoods(t, i) / likelihoods(t, j);
        w(j, i) = 1.0 / w(i, j);
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

/// Likelihood-ratio source computed from per-state densities density(i, y).
template <typename Density>
struct DensityRatioProvider {
  std::size_t states;
  Density density;

  std::size_t num_states() const { return states; }
  Matrix ratio_matrix(const PointRef& y) const {
    Vector p(static_cast<Eigen::Index>(states));
    for (std::size_t i = 0; i < states; ++i) p(static_cast<Eigen::Index>(i)) = density(i, y);
    const auto s = p.size();
    Matrix w = Matrix::Ones(s, s);
    for (Eigen::Index i = 0; i < s; ++i) {
      for (Eigen::Index j = i + 1; j < s; ++j) {
        w(i, j) = p(i) / p(j);
        w(j, i) = 1.0 / w(i, j);
      }
    }
    return w;
  }
};

namespace detail {

inline void check_ratio_inputs(const TransitionModel& model, const RatioSequence& ratios) {
  validate(model);
  require(!ratios.empty(), "ratio inference: observation sequence is empty");
  require((model.initial.array() > 0.0).all(),
          "ratio inference: initial probabilities must be strictly positive");
  // Tolerance admits floored rows that were renormalized afterwards.
  require(model.transitions.minCoeff() >= kTransitionFloor * (1.0 - 1e-6),
          "ratio inference: transition entry below floor; apply with_transition_floor first");
  const auto s = static_cast<Eigen::Index>(model.num_states());
  for (const auto& w : ratios) {
    require_shape(w.rows() == s && w.cols() == s, "ratio inference: ratio matrix must be S x S");
  }
}

/// True when every row of A is the same, so the previous state carries no information.
inline bool memoryless(const Matrix& a) {
  for (Eigen::Index k = 1; k < a.rows(); ++k) {
    if (a.row(k) != a.row(0)) return false;
  }
  return true;
}

/// Fills the lower triangle with reciprocals and the diagonal with ones.
inline void complete_reciprocal(Matrix& r) {
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    r(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < r.cols(); ++j) r(j, i) = 1.0 / r(i, j);
  }
}

}  // namespace detail

/// Forward ratio messages r_ij(t) = alpha_i(t) / alpha_j(t), computed without
/// normalization:
///   r_ij(1) = (pi_i / pi_j) w_ij(y_1)
///   r_ij(t) = w_ij(y_t) sum_k [ sum_k' (A_k'j / A_ki) r_k'k(t-1) ]^-1
inline RatioFrames forward_ratio(const TransitionModel& model, const RatioSequence& ratios) {
  detail::check_ratio_inputs(model, ratios);
  const auto s = static_cast<Eigen::Index>(model.num_states());
  const Matrix& a = model.transitions;
  RatioFrames out;
  out.reserve(ratios.size());

  Matrix r(s, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = i + 1; j < s; ++j) {
      r(i, j) = model.initial(i) / model.initial(j) * ratios[0](i, j);
    }
  }
  detail::complete_reciprocal(r);
  out.push_back(r);

  // Identical rows: the predictive prior is a row of A at every frame, so skip the
  // sums, which would only reproduce that up to rounding.
  if (detail::memoryless(a)) {
    for (std::size_t t = 1; t < ratios.size(); ++t) {
      Matrix next(s, s);
      for (Eigen::Index i = 0; i < s; ++i) {
        for (Eigen::Index j = i + 1; j < s; ++j) {
          next(i, j) = a(0, i) == a(0, j) ? ratios[t](i, j) : a(0, i) / a(0, j) * ratios[t](i, j);
        }
      }
      detail::complete_reciprocal(next);
      out.push_back(std::move(next));
    }
    return out;
  }

  for (std::size_t t = 1; t < ratios.size(); ++t) {
    const Matrix& prev = out.back();
    // mixed(j, k) = sum_k' A_k'j r_k'k(t-1)
    const Matrix mixed = a.transpose() * prev;
    Matrix next(s, s);
    for (Eigen::Index i = 0; i < s; ++i) {
      for (Eigen::Index j = i + 1; j < s; ++j) {
        double total = 0.0;
        for (Eigen::Index k = 0; k < s; ++k) total += a(k, i) / mixed(j, k);
        next(i, j) = total * ratios[t](i, j);
      }
    }
    detail::complete_reciprocal(next);
    out.push_back(std::move(next));
  }
  return out;
}

/// Backward ratio messages r_ij(t) = beta_i(t) / beta_j(t):
///   r_ij(T) = 1
///   r_ij(t) = sum_k [ sum_k' (A_jk' / A_ik) r_k'k(t+1) w_k'k(y_t+1) ]^-1
inline RatioFrames backward_ratio(const TransitionModel& model, const RatioSequence& ratios) {
  detail::check_ratio_inputs(model, ratios);
  const auto s = static_cast<Eigen::Index>(model.num_states());
  const Matrix& a = model.transitions;
  RatioFrames out(ratios.size());
  out.back() = Matrix::Ones(s, s);
  if (detail::memoryless(a)) {
    std::fill(out.begin(), out.end(), Matrix::Ones(s, s));
    return out;
  }

  for (std::size_t t = ratios.size() - 1; t-- > 0;) {
    // mixed(j, k) = sum_k' A_jk' r_k'k(t+1) w_k'k(y_t+1)
    const Matrix mixed = a * out[t + 1].cwiseProduct(ratios[t + 1]);
    Matrix next(s, s);
    for (Eigen::Index i = 0; i < s; ++i) {
      for (Eigen::Index j = i + 1; j < s; ++j) {
        double total = 0.0;
        for (Eigen::Index k = 0; k < s; ++k) total += a(i, k) / mixed(j, k);
        next(i, j) = total;
      }
    }
    detail::complete_reciprocal(next);
    out[t] = std::move(next);
  }
  return out;
}

template <LikelihoodRatioProvider Provider>
RatioFrames forward_ratio(const TransitionModel& model, const Provider& provider,
                          const Points& observations) {
  detail::require_shape(provider.num_states() == model.num_states(),
                        "forward_ratio: provider and model disagree on S");
  return forward_ratio(model, evaluate_ratios(provider, observations));
}

template <LikelihoodRatioProvider Provider>
RatioFrames backward_ratio(const TransitionModel& model, const Provider& provider,
                           const Points& observations) {
  detail::require_shape(provider.num_states() == model.num_states(),
                        "backward_ratio: provider and model disagree on S");
  return backward_ratio(model, evaluate_ratios(provider, observations));
}

/// r_ij(t) = forward_ij(t) * backward_ij(t).
inline RatioFrames combine_ratios(const RatioFrames& forward, const RatioFrames& backward) {
  detail::require_shape(forward.size() == backward.size(), "combine_ratios: frame counts differ");
  RatioFrames out;
  out.reserve(forward.size());
  for (std::size_t t = 0; t < forward.size(); ++t) {
    detail::require_shape(forward[t].rows() == backward[t].rows() &&
                              forward[t].cols() == backward[t].cols(),
                          "combine_ratios: slice shapes differ");
    out.push_back(forward[t].cwiseProduct(backward[t]));
  }
  return out;
}

inline RatioMessages ratio_forward_backward(const TransitionModel& model,
                                            const RatioSequence& ratios) {
  RatioMessages messages;
  messages.forward = forward_ratio(model, ratios);
  messages.backward = backward_ratio(model, ratios);
  messages.combined = combine_ratios(messages.forward, messages.backward);
  return messages;
}

// Two-state closed forms, w = w_12(y).
//   forward:  r(t) = (A11 r(t-1) + A21) / (A12 r(t-1) + A22) * w(y_t)
//   backward: r(t) = (A11 r(t+1) w(y_t+1) + A12) / (A21 r(t+1) w(y_t+1) + A22)

inline std::vector<double> forward_ratio_two_state(const TransitionModel& model,
                                                   const std::vector<double>& w12) {
  validate(model);
  detail::require_shape(model.num_states() == 2, "forward_ratio_two_state: model must have S = 2");
  detail::require(!w12.empty(), "forward_ratio_two_state: empty sequence");
  detail::require((model.initial.array() > 0.0).all(),
                  "forward_ratio_two_state: initial probabilities must be positive");
  const Matrix& a = model.transitions;
  std::vector<double> r(w12.size());
  r[0] = model.initial(0) / model.initial(1) * w12[0];
  for (std::size_t t = 1; t < w12.size(); ++t) {
    r[t] = (a(0, 0) * r[t - 1] + a(1, 0)) / (a(0, 1) * r[t - 1] + a(1, 1)) * w12[t];
  }
  return r;
}

inline std::vector<double> backward_ratio_two_state(const TransitionModel& model,
                                                    const std::vector<double>& w12) {
  validate(model);
  detail::require_shape(model.num_states() == 2, "backward_ratio_two_state: model must have S = 2");
  detail::require(!w12.empty(), "backward_ratio_two_state: empty sequence");
  const Matrix& a = model.transitions;
  std::vector<double> r(w12.size(), 1.0);
  for (std::size_t t = w12.size() - 1; t-- > 0;) {
    const double carried = r[t + 1] * w12[t + 1];
    r[t] = (a(0, 0) * carried + a(0, 1)) / (a(1, 0) * carried + a(1, 1));
  }
  return r;
}

/// Probability vector p_i = r_i,ref / sum_j r_j,ref. The reference column is the
/// finite column with the smallest maximum entry (the most probable state), ties
/// going to the highest index.
inline Vector ratios_to_probs(const Matrix& slice) {
  detail::require_shape(slice.rows() == slice.cols() && slice.rows() >= 1,
                        "ratios_to_probs: slice must be square");
  Eigen::Index ref = -1;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = slice.cols() - 1; j >= 0; --j) {
    const auto col = slice.col(j);
    if (!col.allFinite() || (col.array() < 0.0).any()) continue;
    const double sum = col.sum();
    if (!(sum > 0.0) || !std::isfinite(sum)) continue;
    const double peak = col.maxCoeff();
    if (ref < 0 || peak < best) {
      ref = j;
      best = peak;
    }
  }
  if (ref < 0) throw NumericalError("ratios_to_probs: no admissible reference column");
  return slice.col(ref) / slice.col(ref).sum();
}

/// One probability row per frame.
inline Matrix messages_to_probs(const RatioFrames& frames) {
  detail::require(!frames.empty(), "messages_to_probs: no frames");
  Matrix out(static_cast<Eigen::Index>(frames.size()), frames.front().rows());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) = ratios_to_probs(frames[t]).transpose();
  }
  return out;
}

/// Per-frame argmax, ties to the lowest state index.
inline StateSequence map_decode(const Matrix& probs) {
  StateSequence states(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < probs.cols(); ++i) {
      if (probs(t, i) > probs(t, best)) best = i;
    }
    states[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return states;
}

/// Frame-by-frame decision argmax_i sum_j w_ij(y_t), ties to the lowest index.
inline StateSequence classify_independent(const RatioSequence& ratios) {
  StateSequence states;
  states.reserve(ratios.size());
  for (const auto& w : ratios) {
    const Vector score = w.rowwise().sum();
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < score.size(); ++i) {
      if (score(i) > score(best)) best = i;
    }
    states.push_back(static_cast<int>(best));
  }
  return states;
}

template <LikelihoodRatioProvider Provider>
StateSequence classify_independent(const Provider& provider, const Points& observations) {
  detail::require(observations.rows() >= 1, "classify_independent: no observations");
  return classify_independent(evaluate_ratios(provider, observations));
}

}  // namespace drhmm

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "drhmm/baselines.hpp"
#include "drhmm/core.hpp"
#include "drhmm/hmm_inference.hpp"
#include "drhmm/model_learning.hpp"
#include "drhmm/synth_data.hpp"

namespace drhmm {

/// Fraction of frames where the estimate equals the truth.
inline double accuracy(const StateSequence& truth, const StateSequence& estimate) {
  detail::require_shape(truth.size() == estimate.size(), "accuracy: sequences differ in length");
  detail::require(!truth.empty(), "accuracy: empty sequences");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) hits += truth[t] == estimate[t] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace detail {

inline std::pair<std::size_t, std::size_t> count_classes(const std::vector<double>& scores,
                                                         const std::vector<int>& labels) {
  require_shape(scores.size() == labels.size(), "scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    require(l == 0 || l == 1, "labels must be 0 or 1");
    pos += l == 1 ? 1 : 0;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("both label values must be present");
  return {pos, neg};
}

}  // namespace detail

/// Probability that a random positive outscores a random negative, ties counting 1/2
/// (Mann-Whitney statistic with mid-ranks).
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto [pos, neg] = detail::count_classes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum += mid_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

/// Error rate where the false-positive and false-negative rates cross, linearly
/// interpolated between adjacent thresholds. Scores are negated first when that makes
/// the AUC at least 1/2, so higher always means "more positive".
inline double equal_error_rate(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto [pos, neg] = detail::count_classes(scores, labels);
  std::vector<double> oriented = scores;
  if (roc_auc(scores, labels) < 0.5) {
    for (auto& s : oriented) s = -s;
  }
  std::vector<double> thresholds = oriented;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  // Operating points from "everything positive" to "nothing positive".
  std::vector<double> fpr{1.0};
  std::vector<double> fnr{0.0};
  for (double tau : thresholds) {
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t i = 0; i < oriented.size(); ++i) {
      const bool predicted = oriented[i] > tau;
      if (predicted && labels[i] == 0) ++fp;
      if (!predicted && labels[i] == 1) ++fn;
    }
    fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
    fnr.push_back(static_cast<double>(fn) / static_cast<double>(pos));
  }
  for (std::size_t k = 0; k < fpr.size(); ++k) {
    const double diff = fpr[k] - fnr[k];
    if (diff == 0.0) return fpr[k];
    if (diff < 0.0) {
      const double prev = fpr[k - 1] - fnr[k - 1];
      const double lambda = prev / (prev - diff);
      return fpr[k - 1] + lambda * (fpr[k] - fpr[k - 1]);
    }
  }
  return 0.5;  // unreachable: the last point has fpr = 0, fnr = 1
}

// ---------------------------------------------------------------------------
// Switching-sine benchmark.

enum class Method { drhmm, kdehmm, gmmhmm };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::drhmm: return "drhmm";
    case Method::kdehmm: return "kdehmm";
    case Method::gmmhmm: return "gmmhmm";
  }
  return "unknown";
}

inline Method parse_method(const std::string& name) {
  if (name == "drhmm") return Method::drhmm;
  if (name == "kdehmm") return Method::kdehmm;
  if (name == "gmmhmm") return Method::gmmhmm;
  throw InvalidArgument("unknown method '" + name + "' (expected drhmm, kdehmm or gmmhmm)");
}

struct BenchmarkConfig {
  std::vector<std::size_t> sizes{50, 125, 250, 500};
  std::size_t runs = 50;
  std::vector<Method> methods{Method::drhmm, Method::kdehmm, Method::gmmhmm};
  /// Raw test series length before windowing.
  std::size_t test_length = 1000;
  std::uint64_t seed = 0;
  ToyConfig toy;
  LearningConfig learning;
  std::vector<double> kde_multipliers{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0, 2.0};
  std::size_t kde_folds = 5;
  std::vector<std::size_t> gmm_candidates{1, 2, 3, 4, 5};
  std::size_t gmm_restarts = 5;
  std::size_t threads = 1;
};

struct BenchmarkRow {
  Method method;
  std::size_t size;
  std::size_t run;
  std::uint64_t run_seed;
  std::uint64_t training_hash;
  double smoothing = 0.0;
  double filtering = 0.0;
  double independent = 0.0;
  bool failed = false;
  std::string error;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct BenchmarkCell {
  Method method;
  std::size_t size;
  std::size_t completed = 0;
  std::size_t failed = 0;
  MeanStd smoothing;
  MeanStd filtering;
  MeanStd independent;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;  // ordered by size, run, method
  std::vector<BenchmarkCell> cells;
  std::size_t failed_runs = 0;
};

namespace detail {

inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::mt19937_64 rng(seq);
  return rng();
}

/// FNV-1a over observation values and labels.
inline std::uint64_t hash_corpus(const TrainingCorpus& corpus) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& seq : corpus) {
    mix(seq.observations.data(), static_cast<std::size_t>(seq.observations.size()) * sizeof(double));
    if (seq.labels) mix(seq.labels->data(), seq.labels->size() * sizeof(int));
  }
  return h;
}

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

struct RunData {
  TrainingCorpus corpus;
  std::vector<Points> per_class;
  WindowedSequence test;
  std::uint64_t hash = 0;
};

inline RunData make_run_data(const BenchmarkConfig& config, std::size_t size,
                             std::uint64_t run_seed) {
  RunData data;
  const auto states = config.toy.frequencies.size();
  std::mt19937_64 offsets(derive_seed({run_seed, 0}));
  for (std::size_t s = 0; s < states; ++s) {
    ToyConfig regime = config.toy;
    regime.seed = derive_seed({run_seed, 1, s});
    // Random absolute start so training windows do not all share the same phase.
    const std::size_t first_frame = std::uniform_int_distribution<std::size_t>(1, 1000)(offsets);
    auto segment = generate_regime_segment(regime, static_cast<int>(s), size, first_frame);
    data.per_class.push_back(segment.observations);
    data.corpus.push_back(LabeledSequence{std::move(segment.observations), std::move(segment.labels)});
  }
  ToyConfig test = config.toy;
  test.length = config.test_length;
  test.seed = derive_seed({run_seed, 2});
  data.test = generate_toy(test).windows;
  data.hash = hash_corpus(data.corpus);
  return data;
}

struct Decodes {
  StateSequence smoothing;
  StateSequence filtering;
  StateSequence independent;
};

inline Decodes decode_standard(const TransitionModel& transitions, const Matrix& likelihoods) {
  const Matrix alpha = forward_standard(transitions, likelihoods);
  const Matrix beta = backward_standard(transitions, likelihoods);
  return Decodes{map_decode(smooth_standard(alpha, beta)), map_decode(alpha),
                 map_decode(likelihoods)};
}

inline Decodes run_method(const BenchmarkConfig& config, Method method, const RunData& data,
                          const TransitionModel& transitions, std::uint64_t run_seed) {
  const Points& test = data.test.observations;
  switch (method) {
    case Method::drhmm: {
      LearningConfig learning = config.learning;
      learning.seed = derive_seed({run_seed, 10});
      FittedDrHmm model = fit_supervised(data.corpus, transitions.num_states(), learning);
      model.transitions = transitions;
      return Decodes{infer_states(model, test, InferenceMode::smooth),
                     infer_states(model, test, InferenceMode::filter),
                     infer_states(model, test, InferenceMode::independent)};
    }
    case Method::kdehmm: {
      Points pooled(0, test.cols());
      for (const auto& p : data.per_class) {
        pooled.conservativeResize(pooled.rows() + p.rows(), Eigen::NoChange);
        pooled.bottomRows(p.rows()) = p;
      }
      const double median = median_heuristic(pooled, 1000, derive_seed({run_seed, 20}));
      const KdeEmission kde = fit_kde(data.per_class, bandwidth_grid(median, config.kde_multipliers),
                                      config.kde_folds, derive_seed({run_seed, 21}));
      return decode_standard(transitions, emission_likelihood_matrix(kde, test));
    }
    case Method::gmmhmm: {
      const GmmEmission gmm = fit_gmm_emission(data.per_class, config.gmm_candidates,
                                               config.gmm_restarts, derive_seed({run_seed, 30}));
      return decode_standard(transitions, emission_likelihood_matrix(gmm, test));
    }
  }
  throw InvalidArgument("unknown method");
}

}  // namespace detail

/// Per (size, run): per-regime training segments of `size` windows each, a fresh test
/// sequence, every method fitted on the same data and scored by smoothing, filtering
/// and independent-frame accuracy. All methods decode with the generating transition
/// model. Failed method runs are recorded and left out of the aggregates.
inline BenchmarkResult run_benchmark(const BenchmarkConfig& config) {
  detail::require(!config.sizes.empty(), "run_benchmark: no training sizes");
  detail::require(!config.methods.empty(), "run_benchmark: no methods");
  detail::require(config.runs >= 1, "run_benchmark: runs must be >= 1");
  validate(config.toy);

  const std::size_t jobs = config.sizes.size() * config.runs;
  const std::size_t per_job = config.methods.size();
  BenchmarkResult result;
  result.rows.resize(jobs * per_job);

  auto work = [&](std::size_t job) {
    const std::size_t size_index = job / config.runs;
    const std::size_t run = job % config.runs;
    const std::size_t size = config.sizes[size_index];
    const std::uint64_t run_seed = detail::derive_seed({config.seed, size, run});
    const detail::RunData data = detail::make_run_data(config, size, run_seed);
    const TransitionModel transitions = with_transition_floor({config.toy.transitions, config.toy.initial});
    for (std::size_t m = 0; m < per_job; ++m) {
      BenchmarkRow& row = result.rows[job * per_job + m];
      row.method = config.methods[m];
      row.size = size;
      row.run = run;
      row.run_seed = run_seed;
      row.training_hash = data.hash;
      try {
        const auto decoded = detail::run_method(config, row.method, data, transitions, run_seed);
        row.smoothing = accuracy(data.test.labels, decoded.smoothing);
        row.filtering = accuracy(data.test.labels, decoded.filtering);
        row.independent = accuracy(data.test.labels, decoded.independent);
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(config.threads, jobs));
  if (threads == 1) {
    for (std::size_t job = 0; job < jobs; ++job) work(job);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t job = next++; job < jobs; job = next++) work(job);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (std::size_t size : config.sizes) {
    for (Method method : config.methods) {
      BenchmarkCell cell;
      cell.method = method;
      cell.size = size;
      std::vector<double> smooth, filter, indep;
      for (const auto& row : result.rows) {
        if (row.size != size || row.method != method) continue;
        if (row.failed) {
          ++cell.failed;
          continue;
        }
        smooth.push_back(row.smoothing);
        filter.push_back(row.filtering);
        indep.push_back(row.independent);
      }
      cell.completed = smooth.size();
      cell.smoothing = detail::mean_std(smooth);
      cell.filtering = detail::mean_std(filter);
      cell.independent = detail::mean_std(indep);
      result.failed_runs += cell.failed;
      result.cells.push_back(cell);
    }
  }
  return result;
}

}  // namespace drhmm

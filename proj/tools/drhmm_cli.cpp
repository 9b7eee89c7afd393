// drhmm command-line tool: generate, train, infer, anomaly, benchmark.
//
// Exit codes: 0 ok, 1 numerical/internal failure, 2 usage, 3 data or label error,
// 4 parse error, 5 shape mismatch.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "drhmm/drhmm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace drhmm;

namespace {

constexpr const char* kVersion = "1.0.0";

// Values from --config apply only to options not given on the command line.
class ConfigFile {
 public:
  void load(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config '" + path + "'");
    try {
      values_ = json::parse(in);
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    if (!values_.is_object()) throw ParseError(path + ": config must be a JSON object");
  }

  template <typename T>
  void fill(const CLI::App* app, const std::string& key, T& target) const {
    if (!values_.contains(key) || app->count("--" + key) > 0) return;
    try {
      target = values_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ParseError("config key '" + key + "': " + e.what());
    }
  }

 private:
  json values_ = json::object();
};

json run_metadata(const std::string& command) {
  return {{"tool", "drhmm"}, {"version", kVersion}, {"command", command}};
}

void write_json(const std::string& path, const json& j) {
  auto out = io::open_output(path);
  out << j.dump(2) << "\n";
  if (!out) throw InvalidArgument("failed writing '" + path + "'");
}

// Model input dimension must match the data columns.
io::SequenceData read_observations(const std::string& path, const std::string& label_column) {
  return io::sequence_from_table(io::read_csv(path), label_column);
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  std::string config;
  std::size_t length = 1000;
  std::size_t window = 4;
  std::uint64_t seed = 0;
  double noise_std = 0.5;
};

void cmd_generate(const CLI::App* app, GenerateArgs a) {
  ConfigFile cfg;
  cfg.load(a.config);
  cfg.fill(app, "out", a.out);
  cfg.fill(app, "length", a.length);
  cfg.fill(app, "window", a.window);
  cfg.fill(app, "seed", a.seed);
  cfg.fill(app, "noise-std", a.noise_std);
  if (a.out.empty()) throw InvalidArgument("--out is required");

  ToyConfig toy;
  toy.length = a.length;
  toy.window = a.window;
  toy.seed = a.seed;
  toy.noise_std = a.noise_std;
  validate(toy);
  const ToySequence seq = generate_toy(toy);

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  {
    auto out = io::open_output((dir / "sequence.csv").string());
    out << "frame,y,state\n";
    for (std::size_t t = 0; t < seq.series.size(); ++t) {
      out << t + 1 << ',' << io::format_number(seq.series[t]) << ',' << seq.states[t] + 1 << '\n';
    }
  }
  {
    auto out = io::open_output((dir / "windowed.csv").string());
    out << "frame";
    for (std::size_t j = 1; j <= toy.window; ++j) out << ",y" << j;
    out << ",state\n";
    const auto& w = seq.windows;
    for (Eigen::Index k = 0; k < w.observations.rows(); ++k) {
      out << w.frames[static_cast<std::size_t>(k)];
      for (Eigen::Index j = 0; j < w.observations.cols(); ++j) out << ',' << io::format_number(w.observations(k, j));
      out << ',' << w.labels[static_cast<std::size_t>(k)] + 1 << '\n';
    }
  }
  json meta = run_metadata("generate");
  meta["seed"] = toy.seed;
  meta["length"] = toy.length;
  meta["window"] = toy.window;
  meta["noise_std"] = toy.noise_std;
  meta["frequencies"] = toy.frequencies;
  meta["transitions"] = io::detail::matrix_json(toy.transitions);
  write_json((dir / "metadata.json").string(), meta);
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string labels_column = "state";
  std::string out_model;
  std::string config;
  std::size_t states = 0;
  bool unsupervised = false;
  std::uint64_t seed = 0;
  std::size_t folds = 5;
  std::size_t max_centers = kDefaultMaxCenters;
};

void cmd_train(const CLI::App* app, TrainArgs a) {
  ConfigFile cfg;
  cfg.load(a.config);
  cfg.fill(app, "data", a.data);
  cfg.fill(app, "labels-column", a.labels_column);
  cfg.fill(app, "out-model", a.out_model);
  cfg.fill(app, "states", a.states);
  cfg.fill(app, "unsupervised", a.unsupervised);
  cfg.fill(app, "seed", a.seed);
  cfg.fill(app, "folds", a.folds);
  cfg.fill(app, "max-centers", a.max_centers);
  if (a.data.empty() || a.out_model.empty()) throw InvalidArgument("--data and --out-model are required");
  if (a.states < 2) throw InvalidArgument("--states must be at least 2");

  LearningConfig learning;
  learning.seed = a.seed;
  learning.folds = a.folds;
  learning.max_centers = a.max_centers;

  const io::CsvTable table = io::read_csv(a.data);
  FittedDrHmm model = [&] {
    if (a.unsupervised) {
      const auto seq = io::sequence_from_table(table, a.labels_column);
      return fit_unsupervised(seq.observations, a.states, learning);
    }
    if (table.column(a.labels_column) < 0) {
      throw DataError("training data has no '" + a.labels_column + "' column (use --unsupervised)");
    }
    const auto seq = io::sequence_from_table(table, a.labels_column, a.states);
    return fit_supervised({LabeledSequence{seq.observations, seq.labels}}, a.states, learning);
  }();
  io::save_model(model, a.out_model);
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string mode = "smooth";
  std::string labels_column = "state";
  std::string config;
  bool emit_probs = false;
};

InferenceMode parse_mode(const std::string& mode) {
  if (mode == "filter") return InferenceMode::filter;
  if (mode == "smooth") return InferenceMode::smooth;
  if (mode == "independent") return InferenceMode::independent;
  throw InvalidArgument("unknown mode '" + mode + "' (expected filter, smooth or independent)");
}

void cmd_infer(const CLI::App* app, InferArgs a) {
  ConfigFile cfg;
  cfg.load(a.config);
  cfg.fill(app, "model", a.model);
  cfg.fill(app, "data", a.data);
  cfg.fill(app, "out", a.out);
  cfg.fill(app, "mode", a.mode);
  cfg.fill(app, "labels-column", a.labels_column);
  cfg.fill(app, "emit-probs", a.emit_probs);
  if (a.model.empty() || a.data.empty() || a.out.empty()) {
    throw InvalidArgument("--model, --data and --out are required");
  }
  const InferenceMode mode = parse_mode(a.mode);
  const FittedDrHmm model = io::load_model(a.model);
  const auto seq = read_observations(a.data, a.labels_column);
  const Matrix probs = infer_probabilities(model, seq.observations, mode);
  const StateSequence states = map_decode(probs);

  auto out = io::open_output(a.out);
  out << "frame,state";
  if (a.emit_probs) {
    for (std::size_t i = 1; i <= model.num_states(); ++i) out << ",p" << i;
  }
  out << '\n';
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    out << seq.frames[static_cast<std::size_t>(t)] << ',' << states[static_cast<std::size_t>(t)] + 1;
    if (a.emit_probs) {
      for (Eigen::Index i = 0; i < probs.cols(); ++i) out << ',' << io::format_number(probs(t, i));
    }
    out << '\n';
  }
  if (!out) throw InvalidArgument("failed writing '" + a.out + "'");
  json meta = run_metadata("infer");
  meta["model"] = a.model;
  meta["data"] = a.data;
  meta["mode"] = a.mode;
  meta["frames"] = probs.rows();
  write_json(a.out + ".meta.json", meta);
}

// ---------------------------------------------------------------------------

struct AnomalyArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string labels_column = "state";
  std::string config;
};

void cmd_anomaly(const CLI::App* app, AnomalyArgs a) {
  ConfigFile cfg;
  cfg.load(a.config);
  cfg.fill(app, "model", a.model);
  cfg.fill(app, "data", a.data);
  cfg.fill(app, "out", a.out);
  cfg.fill(app, "labels-column", a.labels_column);
  if (a.model.empty() || a.data.empty() || a.out.empty()) {
    throw InvalidArgument("--model, --data and --out are required");
  }
  const FittedDrHmm model = io::load_model(a.model);
  const auto seq = read_observations(a.data, a.labels_column);
  if (seq.observations.cols() != model.dimension()) {
    throw ShapeError("data has " + std::to_string(seq.observations.cols()) +
                     " observation columns, model expects " + std::to_string(model.dimension()));
  }
  auto out = io::open_output(a.out);
  out << "frame,score\n";
  for (Eigen::Index t = 0; t < seq.observations.rows(); ++t) {
    out << seq.frames[static_cast<std::size_t>(t)] << ','
        << io::format_number(outlier_score(model.posteriors, seq.observations.row(t))) << '\n';
  }
  if (!out) throw InvalidArgument("failed writing '" + a.out + "'");
  json meta = run_metadata("anomaly");
  meta["model"] = a.model;
  meta["data"] = a.data;
  meta["frames"] = seq.observations.rows();
  write_json(a.out + ".meta.json", meta);
}

// ---------------------------------------------------------------------------

struct BenchmarkArgs {
  std::vector<std::size_t> sizes{50, 125, 250, 500};
  std::size_t runs = 50;
  std::vector<std::string> methods{"drhmm", "kdehmm", "gmmhmm"};
  std::uint64_t seed = 0;
  std::size_t test_length = 1000;
  std::size_t threads = 1;
  std::string out_dir;
  std::string config;
};

json cell_json(const BenchmarkCell& c) {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  return {{"method", method_name(c.method)}, {"size", c.size},
          {"completed", c.completed},        {"failed", c.failed},
          {"smoothing", ms(c.smoothing)},    {"filtering", ms(c.filtering)},
          {"independent", ms(c.independent)}};
}

void cmd_benchmark(const CLI::App* app, BenchmarkArgs a) {
  ConfigFile cfg;
  cfg.load(a.config);
  cfg.fill(app, "sizes", a.sizes);
  cfg.fill(app, "runs", a.runs);
  cfg.fill(app, "methods", a.methods);
  cfg.fill(app, "seed", a.seed);
  cfg.fill(app, "test-length", a.test_length);
  cfg.fill(app, "threads", a.threads);
  cfg.fill(app, "out-dir", a.out_dir);
  if (a.out_dir.empty()) throw InvalidArgument("--out-dir is required");

  BenchmarkConfig config;
  config.sizes = a.sizes;
  config.runs = a.runs;
  config.seed = a.seed;
  config.test_length = a.test_length;
  config.threads = a.threads;
  config.methods.clear();
  for (const auto& m : a.methods) config.methods.push_back(parse_method(m));

  const BenchmarkResult result = run_benchmark(config);
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  {
    auto out = io::open_output((dir / "results.csv").string());
    out << "method,size,run,run_seed,training_hash,smoothing,filtering,independent,status\n";
    for (const auto& r : result.rows) {
      out << method_name(r.method) << ',' << r.size << ',' << r.run + 1 << ',' << r.run_seed << ','
          << r.training_hash << ',' << io::format_number(r.smoothing) << ','
          << io::format_number(r.filtering) << ',' << io::format_number(r.independent) << ','
          << (r.failed ? "failed" : "ok") << '\n';
      if (r.failed) {
        std::cerr << "benchmark: " << method_name(r.method) << " size " << r.size << " run "
                  << r.run + 1 << " failed: " << r.error << '\n';
      }
    }
  }
  json summary;
  summary["metadata"] = run_metadata("benchmark");
  summary["metadata"]["seed"] = a.seed;
  summary["metadata"]["runs"] = a.runs;
  summary["metadata"]["sizes"] = a.sizes;
  summary["metadata"]["methods"] = a.methods;
  summary["metadata"]["test_length"] = a.test_length;
  summary["failed_runs"] = result.failed_runs;
  summary["cells"] = json::array();
  for (const auto& c : result.cells) summary["cells"].push_back(cell_json(c));
  write_json((dir / "summary.json").string(), summary);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Density-ratio hidden Markov models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a switching-sine toy sequence and its windowed form");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--length", gen.length, "Raw series length");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--window", gen.window, "Sliding window width");
  g->add_option("--noise-std", gen.noise_std, "Noise standard deviation");
  g->add_option("--config", gen.config, "JSON file with default option values");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Fit a model and save it as JSON");
  t->add_option("--data", train.data, "Sequence CSV");
  t->add_option("--labels-column", train.labels_column, "Label column (1-based states)");
  t->add_option("--states", train.states, "Number of states");
  t->add_flag("--unsupervised", train.unsupervised, "Learn without labels by EM");
  t->add_option("--out-model", train.out_model, "Model JSON path");
  t->add_option("--seed", train.seed, "Random seed");
  t->add_option("--folds", train.folds, "Cross-validation folds");
  t->add_option("--max-centers", train.max_centers, "Kernel centers");
  t->add_option("--config", train.config, "JSON file with default option values");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Per-frame state estimates");
  i->add_option("--model", infer.model, "Model JSON");
  i->add_option("--data", infer.data, "Sequence CSV");
  i->add_option("--mode", infer.mode, "filter, smooth or independent");
  i->add_option("--out", infer.out, "Output CSV");
  i->add_flag("--emit-probs", infer.emit_probs, "Also write state probabilities");
  i->add_option("--labels-column", infer.labels_column, "Column ignored as labels if present");
  i->add_option("--config", infer.config, "JSON file with default option values");

  AnomalyArgs anomaly;
  auto* an = app.add_subcommand("anomaly", "Per-frame outlier scores");
  an->add_option("--model", anomaly.model, "Model JSON");
  an->add_option("--data", anomaly.data, "Sequence CSV");
  an->add_option("--out", anomaly.out, "Output CSV");
  an->add_option("--labels-column", anomaly.labels_column, "Column ignored as labels if present");
  an->add_option("--config", anomaly.config, "JSON file with default option values");

  BenchmarkArgs bench;
  auto* b = app.add_subcommand("benchmark", "Compare DR-HMM with KDE and GMM emission HMMs");
  b->add_option("--sizes", bench.sizes, "Training windows per regime")->delimiter(',');
  b->add_option("--runs", bench.runs, "Runs per size");
  b->add_option("--methods", bench.methods, "drhmm, kdehmm, gmmhmm")->delimiter(',');
  b->add_option("--seed", bench.seed, "Base seed");
  b->add_option("--test-length", bench.test_length, "Raw test series length");
  b->add_option("--threads", bench.threads, "Worker threads");
  b->add_option("--out-dir", bench.out_dir, "Directory for results.csv and summary.json");
  b->add_option("--config", bench.config, "JSON file with default option values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (g->parsed()) cmd_generate(g, gen);
    if (t->parsed()) cmd_train(t, train);
    if (i->parsed()) cmd_infer(i, infer);
    if (an->parsed()) cmd_anomaly(an, anomaly);
    if (b->parsed()) cmd_benchmark(b, bench);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 4;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

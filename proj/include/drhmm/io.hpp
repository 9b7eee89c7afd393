#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drhmm/core.hpp"
#include "drhmm/model_learning.hpp"

namespace drhmm::io {

inline constexpr int kModelSchemaVersion = 1;

// ---------------------------------------------------------------------------
// CSV: header row, comma separated, '.' decimal point.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::ptrdiff_t column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return static_cast<std::ptrdiff_t>(c);
    }
    return -1;
  }
};

namespace detail {

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

inline CsvTable parse_csv(std::istream& in, const std::string& source = "<stream>") {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": empty CSV (missing header)");
  for (auto& h : detail::split(line)) table.header.push_back(detail::trim(h));
  if (table.header.empty()) throw ParseError(source + ": empty header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    if (fields.size() != table.header.size()) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& raw : fields) {
      const std::string f = detail::trim(raw);
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(f, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (f.empty() || used != f.size() || !std::isfinite(value)) {
        throw ParseError(source + ":" + std::to_string(line_no) + ": invalid number '" + f + "'");
      }
      row.push_back(value);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "' for reading");
  return parse_csv(in, path);
}

inline std::string format_number(double value) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << std::setprecision(17) << value;
  return out.str();
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open '" + path + "' for writing");
  out.imbue(std::locale::classic());
  return out;
}

/// Observation columns and optional labels read from a sequence CSV. Every column
/// other than `frame` and the label column is an observation component.
struct SequenceData {
  Points observations;
  std::optional<StateSequence> labels;  // 0-based
  std::vector<std::size_t> frames;      // 1-based
  std::vector<std::string> columns;
};

inline SequenceData sequence_from_table(const CsvTable& table, const std::string& label_column,
                                        std::size_t num_states = 0) {
  SequenceData out;
  const auto frame_col = table.column("frame");
  const auto label_col = label_column.empty() ? -1 : table.column(label_column);
  std::vector<std::size_t> value_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto ci = static_cast<std::ptrdiff_t>(c);
    if (ci == frame_col || ci == label_col) continue;
    value_cols.push_back(c);
    out.columns.push_back(table.header[c]);
  }
  if (value_cols.empty()) throw ParseError("sequence CSV has no observation columns");
  if (table.rows.empty()) throw ParseError("sequence CSV has no data rows");
  out.observations.resize(static_cast<Eigen::Index>(table.rows.size()),
                          static_cast<Eigen::Index>(value_cols.size()));
  if (label_col >= 0) out.labels.emplace();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    for (std::size_t k = 0; k < value_cols.size(); ++k) {
      out.observations(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = row[value_cols[k]];
    }
    out.frames.push_back(frame_col >= 0 ? static_cast<std::size_t>(row[static_cast<std::size_t>(frame_col)])
                                        : r + 1);
    if (label_col >= 0) {
      const double v = row[static_cast<std::size_t>(label_col)];
      if (v != std::floor(v) || v < 1.0 || (num_states > 0 && v > static_cast<double>(num_states))) {
        throw DataError("label " + format_number(v) + " on row " + std::to_string(r + 1) +
                        " is not a state in 1.." +
                        (num_states > 0 ? std::to_string(num_states) : std::string("S")));
      }
      out.labels->push_back(static_cast<int>(v) - 1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model JSON.

namespace detail {

inline nlohmann::json matrix_json(const Eigen::Ref<const Matrix>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                               const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ParseError(std::string("model JSON: '") + name + "' must have " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError(std::string("model JSON: '") + name + "' row " + std::to_string(i + 1) +
                       " must have " + std::to_string(cols) + " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j, Eigen::Index size, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) {
    throw ParseError(std::string("model JSON: '") + name + "' must have " + std::to_string(size) + " entries");
  }
  Vector v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json model_to_json(const FittedDrHmm& model) {
  const auto& post = model.posteriors;
  const auto& meta = model.metadata;
  nlohmann::json j;
  j["schema_version"] = kModelSchemaVersion;
  j["S"] = model.num_states();
  j["d_y"] = post.basis.dimension();
  j["A"] = detail::matrix_json(model.transitions.transitions);
  j["pi"] = detail::vector_json(model.transitions.initial);
  j["sigma"] = post.basis.sigma();
  j["rho"] = post.ridge;
  j["centers"] = detail::matrix_json(post.basis.centers());
  j["theta"] = detail::matrix_json(post.coefficients);
  j["class_counts"] = detail::vector_json(post.class_counts);
  j["metadata"] = {
      {"seed", meta.seed},
      {"basis_seed", post.basis.seed()},
      {"center_indices", post.basis.center_indices()},
      {"median_distance", meta.median_distance},
      {"cv_sigma", meta.selection.sigma},
      {"cv_ridge", meta.selection.ridge},
      {"cv_score", meta.selection.score},
      {"unsupervised", meta.unsupervised},
      {"em_iterations", meta.em_iterations},
      {"final_change", meta.final_change},
      {"change_history", meta.change_history},
  };
  return j;
}

inline FittedDrHmm model_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ParseError("model JSON: top level must be an object");
    const int version = j.at("schema_version").get<int>();
    if (version != kModelSchemaVersion) {
      throw ParseError("model JSON: unsupported schema_version " + std::to_string(version));
    }
    const auto s = j.at("S").get<Eigen::Index>();
    const auto d = j.at("d_y").get<Eigen::Index>();
    if (s < 2 || d < 1) throw ParseError("model JSON: need S >= 2 and d_y >= 1");
    const auto& centers_json = j.at("centers");
    if (!centers_json.is_array() || centers_json.empty()) {
      throw ParseError("model JSON: 'centers' must be a nonempty array");
    }
    const auto b = static_cast<Eigen::Index>(centers_json.size());

    TransitionModel transitions{detail::matrix_from_json(j.at("A"), s, s, "A"),
                                detail::vector_from_json(j.at("pi"), s, "pi")};
    validate(transitions);

    const auto& meta_json = j.at("metadata");
    std::vector<std::size_t> indices =
        meta_json.value("center_indices", std::vector<std::size_t>{});
    if (indices.empty()) {
      indices.resize(static_cast<std::size_t>(b));
      std::iota(indices.begin(), indices.end(), std::size_t{0});
    }
    Points centers = detail::matrix_from_json(centers_json, b, d, "centers");
    KernelBasis basis(std::move(centers), std::move(indices), j.at("sigma").get<double>(),
                      meta_json.value("basis_seed", std::uint64_t{0}));
    PosteriorModel posteriors{detail::matrix_from_json(j.at("theta"), s, b, "theta"),
                              detail::vector_from_json(j.at("class_counts"), s, "class_counts"),
                              std::move(basis), j.at("rho").get<double>()};
    if (!(posteriors.ridge > 0.0)) throw ParseError("model JSON: 'rho' must be positive");
    if ((posteriors.class_counts.array() <= 0.0).any()) {
      throw ParseError("model JSON: class_counts must be positive");
    }

    FitMetadata meta;
    meta.seed = meta_json.value("seed", std::uint64_t{0});
    meta.median_distance = meta_json.value("median_distance", 0.0);
    meta.selection.sigma = meta_json.value("cv_sigma", 0.0);
    meta.selection.ridge = meta_json.value("cv_ridge", 0.0);
    meta.selection.score = meta_json.value("cv_score", 0.0);
    meta.unsupervised = meta_json.value("unsupervised", false);
    meta.em_iterations = meta_json.value("em_iterations", std::size_t{0});
    meta.final_change = meta_json.value("final_change", 0.0);
    meta.change_history = meta_json.value("change_history", std::vector<double>{});
    return FittedDrHmm{std::move(transitions), std::move(posteriors), std::move(meta)};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model JSON: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("model JSON: ") + e.what());
  }
}

inline std::string dump_model(const FittedDrHmm& model) { return model_to_json(model).dump(2) + "\n"; }

inline void save_model(const FittedDrHmm& model, const std::string& path) {
  auto out = open_output(path);
  out << dump_model(model);
  if (!out) throw InvalidArgument("failed writing '" + path + "'");
}

inline FittedDrHmm load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "' for reading");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace drhmm::io

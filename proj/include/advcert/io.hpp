// CSV datasets, JSON model files and CSV reports.
#pragma once

#include "advcert/bounds.hpp"
#include "advcert/core.hpp"
#include "advcert/linear.hpp"
#include "advcert/network.hpp"
#include "advcert/verify.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace advcert {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& text, const std::string& where) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  require(res.ec == std::errc() && res.ptr == last && !text.empty(), "cannot parse number '" + text + "' " + where);
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Label interpretation when reading a CSV. Auto picks binary when every label
/// is +1 or -1, class when every label is a nonnegative integer, real otherwise.
enum class LabelMode { Auto, Binary, Class, Real };

inline LabelMode parse_label_mode(std::string_view s) {
  if (s == "auto") return LabelMode::Auto;
  if (s == "binary") return LabelMode::Binary;
  if (s == "class") return LabelMode::Class;
  if (s == "real") return LabelMode::Real;
  throw ValidationError("unknown label kind '" + std::string(s) + "': expected auto, binary, class or real");
}

inline Dataset parse_dataset_csv(std::istream& in, LabelMode mode = LabelMode::Auto) {
  std::string line;
  detail::require(static_cast<bool>(std::getline(in, line)), "dataset CSV is empty");
  const auto header = detail::split_csv_line(line);
  detail::require(header.size() >= 2 && header.back() == "label",
                  "dataset header must be x0,...,x{m-1},label");
  const std::size_t m = header.size() - 1;
  for (std::size_t j = 0; j < m; ++j) {
    detail::require(header[j] == "x" + std::to_string(j), "dataset header column " + std::to_string(j) +
                                                               " must be named x" + std::to_string(j));
  }
  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = "on line " + std::to_string(line_no);
    detail::require(cells.size() == m + 1, "expected " + std::to_string(m + 1) + " columns " + where);
    std::vector<double> row(m);
    for (std::size_t j = 0; j < m; ++j) row[j] = detail::parse_double(cells[j], where);
    rows.push_back(std::move(row));
    labels.push_back(detail::parse_double(cells[m], where));
  }
  detail::require(!rows.empty(), "dataset CSV has no samples");
  Matrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }

  const bool all_pm1 = std::all_of(labels.begin(), labels.end(), [](double v) { return v == 1.0 || v == -1.0; });
  const bool all_index = std::all_of(labels.begin(), labels.end(),
                                     [](double v) { return v >= 0.0 && v == std::floor(v) && v < 1e9; });
  if (mode == LabelMode::Auto) mode = all_pm1 ? LabelMode::Binary : (all_index ? LabelMode::Class : LabelMode::Real);

  switch (mode) {
    case LabelMode::Binary: {
      detail::require(all_pm1, "binary labels must be +1 or -1");
      BinaryLabels y;
      for (double v : labels) y.values.push_back(static_cast<int>(v));
      return Dataset(std::move(X), std::move(y));
    }
    case LabelMode::Class: {
      detail::require(all_index, "class labels must be nonnegative integers");
      ClassLabels y;
      for (double v : labels) {
        y.values.push_back(static_cast<std::size_t>(v));
        y.num_classes = std::max(y.num_classes, y.values.back() + 1);
      }
      y.num_classes = std::max<std::size_t>(y.num_classes, 2);
      return Dataset(std::move(X), std::move(y));
    }
    default: {
      RealLabels y;
      y.values = labels;
      return Dataset(std::move(X), std::move(y));
    }
  }
}

inline Dataset read_dataset_csv(const std::string& path, LabelMode mode = LabelMode::Auto) {
  std::ifstream in(path);
  detail::require(in.good(), "cannot open dataset file '" + path + "'");
  return parse_dataset_csv(in, mode);
}

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t j = 0; j < data.m(); ++j) out << 'x' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t j = 0; j < data.m(); ++j) {
      out << format_double(data.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) << ',';
    }
    switch (data.kind()) {
      case LabelKind::Binary: out << data.binary()[i]; break;
      case LabelKind::Class: out << data.classes().values[i]; break;
      case LabelKind::Real: out << format_double(data.real()[i]); break;
    }
    out << '\n';
  }
}

inline void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  detail::require(out.good(), "cannot write dataset file '" + path + "'");
  write_dataset_csv(out, data);
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

using AnyModel = std::variant<LinearModel, MulticlassLinearModel, NeuralNet>;

namespace detail {

using nlohmann::json;

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json matrix_json(const Matrix& M) {
  json a = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) a.push_back(vector_json(M.row(i).transpose()));
  return a;
}

inline Vector vector_from_json(const json& j, const std::string& what) {
  require(j.is_array(), what + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_number(), what + " must contain only numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  require(j.is_array() && !j.empty(), what + " must be a non-empty array of rows");
  const std::size_t cols = j[0].size();
  Matrix M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector row = vector_from_json(j[i], what);
    require(static_cast<std::size_t>(row.size()) == cols, what + " rows must all have the same length");
    M.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return M;
}

}  // namespace detail

inline nlohmann::json model_to_json(const AnyModel& model) {
  using detail::json;
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearModel>) {
          return {{"kind", "linear"}, {"theta", detail::vector_json(m.theta)}, {"b", m.b}};
        } else if constexpr (std::is_same_v<T, MulticlassLinearModel>) {
          return {{"kind", "multiclass_linear"}, {"Theta", detail::matrix_json(m.Theta)}, {"b", detail::vector_json(m.b)}};
        } else {
          json layers = json::array(), acts = json::array();
          for (const auto& A : m.layers) layers.push_back(detail::matrix_json(A));
          for (auto a : m.activations) acts.push_back(to_string(a));
          return {{"kind", "nn"}, {"layers", layers}, {"activations", acts}};
        }
      },
      model);
}

inline AnyModel model_from_json(const nlohmann::json& j) {
  detail::require(j.is_object() && j.contains("kind") && j["kind"].is_string(), "model JSON needs a \"kind\" field");
  const std::string kind = j["kind"];
  if (kind == "linear") {
    detail::require(j.contains("theta") && j.contains("b") && j["b"].is_number(), "linear model needs theta and b");
    LinearModel m{detail::vector_from_json(j["theta"], "theta"), j["b"].get<double>()};
    m.validate();
    return m;
  }
  if (kind == "multiclass_linear") {
    detail::require(j.contains("Theta") && j.contains("b"), "multiclass model needs Theta and b");
    MulticlassLinearModel m{detail::matrix_from_json(j["Theta"], "Theta"), detail::vector_from_json(j["b"], "b")};
    m.validate();
    return m;
  }
  if (kind == "nn") {
    detail::require(j.contains("layers") && j.contains("activations") && j["layers"].is_array() &&
                        j["activations"].is_array(),
                    "network model needs layers and activations arrays");
    NeuralNet net;
    for (const auto& L : j["layers"]) net.layers.push_back(detail::matrix_from_json(L, "layer"));
    for (const auto& a : j["activations"]) {
      detail::require(a.is_string(), "activations must be strings");
      net.activations.push_back(parse_activation(a.get<std::string>()));
    }
    net.validate();
    return net;
  }
  throw ValidationError("unknown model kind '" + kind + "': expected linear, multiclass_linear or nn");
}

inline void write_model_json(const std::string& path, const AnyModel& model) {
  std::ofstream out(path);
  detail::require(out.good(), "cannot write model file '" + path + "'");
  out << model_to_json(model).dump(2) << '\n';
}

inline AnyModel read_model_json(const std::string& path) {
  std::ifstream in(path);
  detail::require(in.good(), "cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline void write_report_csv(std::ostream& out, const BoundReport& r) {
  out << "form,loss,n,epsilon,delta,empirical,perturbation,complexity,confidence,total\n";
  out << r.form << ',' << r.loss << ',' << r.n << ',' << format_double(r.epsilon) << ',' << format_double(r.delta)
      << ',' << format_double(r.empirical) << ',' << format_double(r.perturbation) << ','
      << format_double(r.complexity) << ',' << format_double(r.confidence) << ',' << format_double(r.total) << '\n';
}

inline void write_training_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << "iter,objective,grad_norm\n";
  for (const auto& row : log) {
    out << row.iter << ',' << format_double(row.objective) << ',' << format_double(row.grad_norm) << '\n';
  }
}

inline void write_checks_csv(std::ostream& out, const std::vector<CheckRow>& rows) {
  out << "check_name,instances,max_violation,pass\n";
  for (const auto& r : rows) {
    out << r.name << ',' << r.instances << ',' << format_double(r.max_violation) << ',' << (r.pass ? "true" : "false")
        << '\n';
  }
}

}  // namespace advcert

// Shared domain types: perturbation balls, datasets, and the losses used by
// every bound in the library.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace advcert {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Raised when an input violates an operation's preconditions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& values) {
  return values.allFinite();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

/// Supported norm exponents. General p > 1 is intentionally not representable.
enum class NormExp { One, Two, Inf };

inline std::string to_string(NormExp p) {
  switch (p) {
    case NormExp::One: return "1";
    case NormExp::Two: return "2";
    case NormExp::Inf: return "inf";
  }
  return "?";
}

/// Parses "1", "2", "inf" (also "infinity"). Anything else is rejected.
inline NormExp parse_norm_exp(std::string_view text) {
  if (text == "1") return NormExp::One;
  if (text == "2") return NormExp::Two;
  if (text == "inf" || text == "infinity" || text == "Inf") return NormExp::Inf;
  throw ValidationError("unsupported norm exponent '" + std::string(text) +
                        "': expected one of 1, 2, inf");
}

/// Maps a numeric exponent onto NormExp; only 1, 2 and +infinity are accepted.
inline NormExp norm_exp_from_value(double p) {
  if (p == 1.0) return NormExp::One;
  if (p == 2.0) return NormExp::Two;
  if (std::isinf(p) && p > 0) return NormExp::Inf;
  throw ValidationError("unsupported norm exponent p=" + std::to_string(p) +
                        ": expected one of 1, 2, inf");
}

/// Hölder conjugate: 1/p + 1/q = 1 with p=1 <-> q=inf.
constexpr NormExp dual_exponent(NormExp p) {
  switch (p) {
    case NormExp::One: return NormExp::Inf;
    case NormExp::Two: return NormExp::Two;
    case NormExp::Inf: return NormExp::One;
  }
  return NormExp::Two;
}

template <class Derived>
double lp_norm(const Eigen::MatrixBase<Derived>& v, NormExp p) {
  if (v.size() == 0) return 0.0;
  switch (p) {
    case NormExp::One: return v.template lpNorm<1>();
    case NormExp::Two: return v.norm();
    case NormExp::Inf: return v.template lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

/// A deterministic subgradient of v -> ||v||_q.
///   q=1:   sign vector, 0 at zero entries
///   q=2:   v / ||v||_2, the zero vector at v = 0
///   q=inf: unit indicator (with sign) on the lowest-index maximal |v_j|
template <class Derived>
Vector lp_norm_subgradient(const Eigen::MatrixBase<Derived>& v, NormExp q) {
  Vector g = Vector::Zero(v.size());
  switch (q) {
    case NormExp::One:
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        g(j) = v(j) > 0 ? 1.0 : (v(j) < 0 ? -1.0 : 0.0);
      }
      break;
    case NormExp::Two: {
      const double n = v.norm();
      if (n > 0) g = v / n;
      break;
    }
    case NormExp::Inf: {
      Eigen::Index best = -1;
      double best_abs = 0.0;
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        if (std::abs(v(j)) > best_abs) {
          best_abs = std::abs(v(j));
          best = j;
        }
      }
      if (best >= 0) g(best) = v(best) > 0 ? 1.0 : -1.0;
      break;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Perturbation ball
// ---------------------------------------------------------------------------

/// The adversary's budget: the l_p ball of radius epsilon around an input.
class PerturbationBall {
 public:
  PerturbationBall(NormExp p, double epsilon) : p_(p), epsilon_(epsilon) {
    detail::require(std::isfinite(epsilon) && epsilon >= 0.0,
                    "perturbation radius must be finite and nonnegative");
  }

  NormExp p() const { return p_; }
  NormExp q() const { return dual_exponent(p_); }
  double epsilon() const { return epsilon_; }

  /// ||v||_q, the support function of the unit ball evaluated at v.
  template <class Derived>
  double dual_norm(const Eigen::MatrixBase<Derived>& v) const {
    return lp_norm(v, q());
  }

  template <class Derived>
  bool contains(const Eigen::MatrixBase<Derived>& w, double tol = 1e-12) const {
    return lp_norm(w, p_) <= epsilon_ + tol;
  }

 private:
  NormExp p_;
  double epsilon_;
};

// ---------------------------------------------------------------------------
// Labels and datasets
// ---------------------------------------------------------------------------

struct BinaryLabel {
  int value;  // +1 or -1
};
struct ClassLabel {
  std::size_t index;  // 0-based
};
struct RealLabel {
  double value;
};
using Label = std::variant<BinaryLabel, ClassLabel, RealLabel>;

struct BinaryLabels {
  std::vector<int> values;
};
struct ClassLabels {
  std::vector<std::size_t> values;
  std::size_t num_classes = 0;
};
struct RealLabels {
  std::vector<double> values;
};
using Labels = std::variant<BinaryLabels, ClassLabels, RealLabels>;

enum class LabelKind { Binary, Class, Real };

inline std::string to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::Binary: return "binary";
    case LabelKind::Class: return "class";
    case LabelKind::Real: return "real";
  }
  return "?";
}

/// The +-1 encoding of a class index: exactly one +1 entry.
inline Vector one_hot_signs(std::size_t cls, std::size_t num_classes) {
  Vector y = Vector::Constant(static_cast<Eigen::Index>(num_classes), -1.0);
  y(static_cast<Eigen::Index>(cls)) = 1.0;
  return y;
}

/// n observations: an n x m feature matrix (one row per sample) and labels.
class Dataset {
 public:
  Dataset(Matrix features, Labels labels)
      : features_(std::move(features)), labels_(std::move(labels)) {
    detail::require(features_.rows() >= 1 && features_.cols() >= 1,
                    "dataset needs n >= 1 samples and m >= 1 features");
    detail::require(detail::all_finite(features_), "dataset features must be finite");
    const auto n = static_cast<std::size_t>(features_.rows());
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          detail::require(l.values.size() == n, "label count does not match sample count");
          if constexpr (std::is_same_v<T, BinaryLabels>) {
            for (int y : l.values) {
              detail::require(y == 1 || y == -1, "binary labels must be +1 or -1");
            }
          } else if constexpr (std::is_same_v<T, ClassLabels>) {
            detail::require(l.num_classes >= 2, "class labels need K >= 2");
            for (auto c : l.values) {
              detail::require(c < l.num_classes, "class label outside 0..K-1");
            }
          } else {
            for (double y : l.values) {
              detail::require(std::isfinite(y), "regression labels must be finite");
            }
          }
        },
        labels_);
  }

  std::size_t n() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(features_.cols()); }
  const Matrix& features() const { return features_; }
  const Labels& labels() const { return labels_; }

  Vector x(std::size_t i) const { return features_.row(static_cast<Eigen::Index>(i)).transpose(); }

  LabelKind kind() const {
    switch (labels_.index()) {
      case 0: return LabelKind::Binary;
      case 1: return LabelKind::Class;
      default: return LabelKind::Real;
    }
  }

  const std::vector<int>& binary() const {
    const auto* l = std::get_if<BinaryLabels>(&labels_);
    detail::require(l != nullptr, "operation requires binary (+1/-1) labels");
    return l->values;
  }
  const ClassLabels& classes() const {
    const auto* l = std::get_if<ClassLabels>(&labels_);
    detail::require(l != nullptr, "operation requires class labels");
    return *l;
  }
  const std::vector<double>& real() const {
    const auto* l = std::get_if<RealLabels>(&labels_);
    detail::require(l != nullptr, "operation requires real-valued labels");
    return l->values;
  }

  Label label(std::size_t i) const {
    switch (kind()) {
      case LabelKind::Binary: return BinaryLabel{binary()[i]};
      case LabelKind::Class: return ClassLabel{classes().values[i]};
      case LabelKind::Real: return RealLabel{real()[i]};
    }
    return RealLabel{0.0};
  }

  /// max_i ||x_i||_2
  double max_row_norm() const { return features_.rowwise().norm().maxCoeff(); }

 private:
  Matrix features_;
  Labels labels_;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace loss {
struct Hinge {};
/// min{1, hinge}
struct HingeTruncated {};
/// 1{y a <= 0}
struct ZeroOne {};
/// 1{hinge > 0}
struct HingeIndicator {};
/// Natural-log cross-entropy on the softmax link.
struct CrossEntropy {};
struct Margin {
  double rho = 1.0;
};
struct RegressionPower {
  double r = 2.0;
  double B = 1.0;
};
}  // namespace loss

using LossSpec = std::variant<loss::Hinge, loss::HingeTruncated, loss::ZeroOne,
                              loss::HingeIndicator, loss::CrossEntropy, loss::Margin,
                              loss::RegressionPower>;

inline void validate(const LossSpec& spec) {
  if (const auto* m = std::get_if<loss::Margin>(&spec)) {
    detail::require(std::isfinite(m->rho) && m->rho > 0, "margin loss needs rho > 0");
  }
  if (const auto* r = std::get_if<loss::RegressionPower>(&spec)) {
    detail::require(std::isfinite(r->r) && r->r > 0, "regression loss needs r > 0");
    detail::require(std::isfinite(r->B) && r->B > 0, "regression loss needs B > 0");
  }
}

/// True for the scalar losses that are monotone in y * prediction.
inline bool is_binary_loss(const LossSpec& spec) {
  return spec.index() <= 4;
}

inline std::string describe(const LossSpec& spec) {
  return std::visit(
      [](const auto& l) -> std::string {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, loss::Hinge>) return "hinge";
        else if constexpr (std::is_same_v<T, loss::HingeTruncated>) return "hinge-truncated";
        else if constexpr (std::is_same_v<T, loss::ZeroOne>) return "zero-one";
        else if constexpr (std::is_same_v<T, loss::HingeIndicator>) return "hinge-indicator";
        else if constexpr (std::is_same_v<T, loss::CrossEntropy>) return "xe";
        else if constexpr (std::is_same_v<T, loss::Margin>) return "margin(rho=" + std::to_string(l.rho) + ")";
        else return "regression(r=" + std::to_string(l.r) + ",B=" + std::to_string(l.B) + ")";
      },
      spec);
}

/// Builds a loss from its command-line name.
inline LossSpec parse_loss(std::string_view name, double rho = 1.0, double r = 2.0, double B = 1.0) {
  LossSpec spec;
  if (name == "hinge") spec = loss::Hinge{};
  else if (name == "hinge-truncated") spec = loss::HingeTruncated{};
  else if (name == "zero-one" || name == "01") spec = loss::ZeroOne{};
  else if (name == "hinge-indicator") spec = loss::HingeIndicator{};
  else if (name == "xe" || name == "cross-entropy") spec = loss::CrossEntropy{};
  else if (name == "margin") spec = loss::Margin{rho};
  else if (name == "regression") spec = loss::RegressionPower{r, B};
  else {
    throw ValidationError("unknown loss '" + std::string(name) +
                          "': expected hinge, hinge-truncated, zero-one, hinge-indicator, xe, "
                          "margin or regression");
  }
  validate(spec);
  return spec;
}

/// (e^a - 1) / (e^a + 1), computed as tanh(a/2) so it saturates without overflow.
inline double softmax_delta(double a) { return std::tanh(0.5 * a); }

struct ValueAndDerivative {
  double value;
  double derivative;
};

/// g_y(a) = -ln(e^a / (e^a + 1)) for y = +1 and -ln(1 / (e^a + 1)) for y = -1,
/// together with g'_y(a). Both use the softplus form to stay finite.
inline ValueAndDerivative xe_value_and_derivative(double a, int y) {
  const auto softplus = [](double t) {
    return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
  };
  const auto sigmoid = [](double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  };
  if (y > 0) return {softplus(-a), -sigmoid(-a)};
  return {softplus(a), sigmoid(a)};
}

inline double hinge_loss(double a, int y) { return std::max(0.0, 1.0 - y * a); }

/// Ramp surrogate: 1 below 0, linear on [0, rho], 0 above rho.
inline double phi_rho(double t, double rho) {
  if (t >= rho) return 0.0;
  if (t <= 0.0) return 1.0;
  return 1.0 - t / rho;
}

struct MarginInfo {
  double margin;           // f_y(x) - max_{i != y} f_i(x)
  Eigen::Index runner_up;  // lowest-index maximiser among i != y
};

inline MarginInfo multiclass_margin(const Vector& scores, std::size_t cls) {
  const auto y = static_cast<Eigen::Index>(cls);
  detail::require(scores.size() >= 2 && y < scores.size(), "class index outside score vector");
  Eigen::Index best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (i == y) continue;
    if (best < 0 || scores(i) > best_score) {
      best = i;
      best_score = scores(i);
    }
  }
  return {scores(y) - best_score, best};
}

inline double positive_part(double t) { return t > 0 ? t : 0.0; }
inline double negative_part(double t) { return t < 0 ? -t : 0.0; }

/// min{(a - y)_+^r, B^r}
inline double regression_plus(double a, double y, double r, double B) {
  return std::min(std::pow(positive_part(a - y), r), std::pow(B, r));
}
/// min{(a - y)_-^r, B^r}
inline double regression_minus(double a, double y, double r, double B) {
  return std::min(std::pow(negative_part(a - y), r), std::pow(B, r));
}
/// min{|a - y|^r, B^r}
inline double regression_truncated(double a, double y, double r, double B) {
  return std::min(std::pow(std::abs(a - y), r), std::pow(B, r));
}
/// The two-argument loss evaluated on an (upper, lower) envelope pair.
inline double regression_envelope_loss(double upper, double lower, double y, double r, double B) {
  return std::max(regression_plus(upper, y, r, B), regression_minus(lower, y, r, B));
}

/// Scalar binary loss value at prediction a for label y.
inline double binary_loss(const LossSpec& spec, double a, int y) {
  return std::visit(
      [&](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, loss::Hinge>) return hinge_loss(a, y);
        else if constexpr (std::is_same_v<T, loss::HingeTruncated>) return std::min(1.0, hinge_loss(a, y));
        else if constexpr (std::is_same_v<T, loss::ZeroOne>) return y * a <= 0 ? 1.0 : 0.0;
        else if constexpr (std::is_same_v<T, loss::HingeIndicator>) return hinge_loss(a, y) > 0 ? 1.0 : 0.0;
        else if constexpr (std::is_same_v<T, loss::CrossEntropy>) return xe_value_and_derivative(a, y).value;
        else throw ValidationError("loss " + describe(spec) + " is not a binary classification loss");
      },
      spec);
}

/// d/da of binary_loss. Piecewise-constant losses return 0; kinks take the flat side.
inline double binary_loss_derivative(const LossSpec& spec, double a, int y) {
  return std::visit(
      [&](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, loss::Hinge>) return 1.0 - y * a > 0 ? -static_cast<double>(y) : 0.0;
        else if constexpr (std::is_same_v<T, loss::HingeTruncated>) {
          const double h = 1.0 - y * a;
          return (h > 0 && h < 1) ? -static_cast<double>(y) : 0.0;
        } else if constexpr (std::is_same_v<T, loss::ZeroOne> || std::is_same_v<T, loss::HingeIndicator>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, loss::CrossEntropy>) {
          return xe_value_and_derivative(a, y).derivative;
        } else {
          throw ValidationError("loss " + describe(spec) + " is not a binary classification loss");
        }
      },
      spec);
}

inline double margin_loss(const Vector& scores, std::size_t cls, double rho) {
  return phi_rho(multiclass_margin(scores, cls).margin, rho);
}

/// Gradient of phi_rho(m_f) with respect to the score vector.
inline Vector margin_loss_gradient(const Vector& scores, std::size_t cls, double rho) {
  Vector g = Vector::Zero(scores.size());
  const auto info = multiclass_margin(scores, cls);
  if (info.margin > 0 && info.margin < rho) {
    g(static_cast<Eigen::Index>(cls)) = -1.0 / rho;
    g(info.runner_up) = 1.0 / rho;
  }
  return g;
}

/// d/d(upper) and d/d(lower) of regression_envelope_loss. The larger branch is
/// differentiated (ties go to the upper branch); saturated branches give 0.
inline std::pair<double, double> regression_envelope_gradient(double upper, double lower, double y,
                                                              double r, double B) {
  const double cap = std::pow(B, r);
  const double plus = regression_plus(upper, y, r, B);
  const double minus = regression_minus(lower, y, r, B);
  if (plus >= minus) {
    const double d = upper - y;
    if (d > 0 && std::pow(d, r) < cap) return {r * std::pow(d, r - 1.0), 0.0};
    return {0.0, 0.0};
  }
  const double d = y - lower;
  if (d > 0 && std::pow(d, r) < cap) return {0.0, -r * std::pow(d, r - 1.0)};
  return {0.0, 0.0};
}

using Prediction = std::variant<double, Vector>;

/// Exact loss value; the prediction shape must match the label kind.
inline double loss_eval(const LossSpec& spec, const Prediction& prediction, const Label& label) {
  validate(spec);
  if (const auto* v = std::get_if<Vector>(&prediction)) {
    detail::require(v->allFinite(), "prediction must be finite");
  } else {
    detail::require(std::isfinite(std::get<double>(prediction)), "prediction must be finite");
  }

  if (is_binary_loss(spec)) {
    const auto* y = std::get_if<BinaryLabel>(&label);
    const auto* a = std::get_if<double>(&prediction);
    detail::require(y != nullptr && a != nullptr,
                    "binary losses take a scalar prediction and a +-1 label");
    detail::require(y->value == 1 || y->value == -1, "binary label must be +1 or -1");
    return binary_loss(spec, *a, y->value);
  }
  if (const auto* m = std::get_if<loss::Margin>(&spec)) {
    const auto* y = std::get_if<ClassLabel>(&label);
    const auto* scores = std::get_if<Vector>(&prediction);
    detail::require(y != nullptr && scores != nullptr,
                    "margin loss takes a K-vector prediction and a class label");
    return margin_loss(*scores, y->index, m->rho);
  }
  const auto& reg = std::get<loss::RegressionPower>(spec);
  const auto* y = std::get_if<RealLabel>(&label);
  const auto* a = std::get_if<double>(&prediction);
  detail::require(y != nullptr && a != nullptr,
                  "regression loss takes a scalar prediction and a real label");
  detail::require(std::isfinite(y->value), "regression label must be finite");
  return regression_truncated(*a, y->value, reg.r, reg.B);
}

// ---------------------------------------------------------------------------
// Rademacher signs
// ---------------------------------------------------------------------------

struct RademacherDraw {
  std::vector<int> sigma;
  std::uint64_t seed = 0;

  static RademacherDraw generate(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    RademacherDraw draw{std::vector<int>(n), seed};
    std::bernoulli_distribution coin(0.5);
    for (auto& s : draw.sigma) s = coin(rng) ? 1 : -1;
    return draw;
  }
};

}  // namespace advcert

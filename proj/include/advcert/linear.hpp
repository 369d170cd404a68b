// Linear predictors: closed-form supremum transform, risk certificates for
// binary, multiclass and regression tasks, and the two linear trainers.
#pragma once

#include "advcert/bounds.hpp"
#include "advcert/core.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace advcert {

struct LinearModel {
  Vector theta;
  double b = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(theta.size()); }
  double predict(const Vector& x) const { return theta.dot(x) + b; }

  void validate() const {
    detail::require(theta.size() >= 1, "linear model needs at least one weight");
    detail::require(theta.allFinite() && std::isfinite(b), "linear model entries must be finite");
  }
};

struct MulticlassLinearModel {
  Matrix Theta;  // K x m, row k is theta_k
  Vector b;      // K

  std::size_t classes() const { return static_cast<std::size_t>(Theta.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(Theta.cols()); }
  Vector predict(const Vector& x) const { return Theta * x + b; }

  LinearModel row(std::size_t k) const {
    const auto i = static_cast<Eigen::Index>(k);
    return {Theta.row(i).transpose(), b(i)};
  }

  void validate() const {
    detail::require(Theta.rows() >= 2, "multiclass model needs K >= 2");
    detail::require(Theta.cols() >= 1, "multiclass model needs m >= 1");
    detail::require(b.size() == Theta.rows(), "bias length must equal the number of classes");
    detail::require(Theta.allFinite() && b.allFinite(), "multiclass model entries must be finite");
  }
};

/// Norm caps of a linear class: ||theta||_2 <= M2, ||theta||_q <= Mq, ||x_i||_2 <= R.
/// For multiclass models the caps are maxima over the rows.
struct CapacityLinear {
  double M2 = 0.0;
  double Mq = 0.0;
  double R = 0.0;

  static CapacityLinear from(const LinearModel& model, NormExp q, const Dataset& data) {
    return {model.theta.norm(), lp_norm(model.theta, q), data.max_row_norm()};
  }

  static CapacityLinear from(const MulticlassLinearModel& model, NormExp q, const Dataset& data) {
    CapacityLinear cap{0.0, 0.0, data.max_row_norm()};
    for (Eigen::Index k = 0; k < model.Theta.rows(); ++k) {
      cap.M2 = std::max(cap.M2, model.Theta.row(k).norm());
      cap.Mq = std::max(cap.Mq, lp_norm(model.Theta.row(k).transpose(), q));
    }
    return cap;
  }
};

namespace detail {

inline void check_dims(const LinearModel& model, const Vector& x) {
  require(static_cast<std::size_t>(x.size()) == model.dim(), "input length does not match model dimension");
}

inline void check_dims(std::size_t model_dim, const Dataset& data) {
  require(model_dim == data.m(), "dataset feature count does not match model dimension");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// theta.x + b - y eps ||theta||_q: the worst-case prediction for label y.
inline double sup_transform_linear(const LinearModel& model, const PerturbationBall& ball,
                                   const Vector& x, int y) {
  detail::check_dims(model, x);
  return model.predict(x) - y * ball.epsilon() * ball.dual_norm(model.theta);
}

/// Componentwise transform: class `cls` is pushed down, every other class up.
inline Vector sup_transform_multiclass(const MulticlassLinearModel& model, const PerturbationBall& ball,
                                       const Vector& x, std::size_t cls) {
  detail::require(static_cast<std::size_t>(x.size()) == model.dim(), "input length does not match model dimension");
  detail::require(cls < model.classes(), "class index outside 0..K-1");
  Vector out = model.predict(x);
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    const double yk = static_cast<std::size_t>(k) == cls ? 1.0 : -1.0;
    out(k) -= yk * ball.epsilon() * lp_norm(model.Theta.row(k).transpose(), ball.q());
  }
  return out;
}

/// Upper and lower envelope of f over the ball (regression).
struct Envelope {
  double upper;
  double lower;
};

inline Envelope psi_plus_minus_linear(const LinearModel& model, const PerturbationBall& ball, const Vector& x) {
  detail::check_dims(model, x);
  const double f = model.predict(x);
  const double spread = ball.epsilon() * ball.dual_norm(model.theta);
  return {f + spread, f - spread};
}

// ---------------------------------------------------------------------------
// Empirical risks
// ---------------------------------------------------------------------------

/// Mean loss of f itself (no adversary).
inline double empirical_risk_linear(const LinearModel& model, const Dataset& data, const LossSpec& loss) {
  model.validate();
  validate(loss);
  detail::check_dims(model.dim(), data);
  const Vector pred = (data.features() * model.theta).array() + model.b;
  double sum = 0.0;
  if (is_binary_loss(loss)) {
    const auto& y = data.binary();
    for (std::size_t i = 0; i < data.n(); ++i) sum += binary_loss(loss, pred(static_cast<Eigen::Index>(i)), y[i]);
  } else if (const auto* reg = std::get_if<loss::RegressionPower>(&loss)) {
    const auto& y = data.real();
    for (std::size_t i = 0; i < data.n(); ++i) {
      sum += regression_truncated(pred(static_cast<Eigen::Index>(i)), y[i], reg->r, reg->B);
    }
  } else {
    throw ValidationError("loss " + describe(loss) + " needs a multiclass model");
  }
  return sum / static_cast<double>(data.n());
}

/// Adversarial empirical risk, computed exactly through the supremum transform.
/// Binary losses use Psi f; RegressionPower uses the (Psi_+ f, Psi_- f) envelope.
inline double robust_empirical_risk_linear(const LinearModel& model, const Dataset& data,
                                           const PerturbationBall& ball, const LossSpec& loss) {
  model.validate();
  validate(loss);
  detail::check_dims(model.dim(), data);
  const Vector pred = (data.features() * model.theta).array() + model.b;
  const double spread = ball.epsilon() * ball.dual_norm(model.theta);
  double sum = 0.0;
  if (is_binary_loss(loss)) {
    const auto& y = data.binary();
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double psi = pred(static_cast<Eigen::Index>(i)) - y[i] * spread;
      sum += binary_loss(loss, psi, y[i]);
    }
  } else if (const auto* reg = std::get_if<loss::RegressionPower>(&loss)) {
    const auto& y = data.real();
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double f = pred(static_cast<Eigen::Index>(i));
      sum += regression_envelope_loss(f + spread, f - spread, y[i], reg->r, reg->B);
    }
  } else {
    throw ValidationError("loss " + describe(loss) + " needs a multiclass model");
  }
  return sum / static_cast<double>(data.n());
}

/// Multiclass adversarial margin risk through the componentwise transform.
inline double robust_empirical_risk_linear(const MulticlassLinearModel& model, const Dataset& data,
                                           const PerturbationBall& ball, const LossSpec& loss) {
  model.validate();
  validate(loss);
  detail::check_dims(model.dim(), data);
  const auto* margin = std::get_if<loss::Margin>(&loss);
  detail::require(margin != nullptr, "multiclass models are scored with the margin loss");
  const auto& labels = data.classes();
  detail::require(labels.num_classes == model.classes(), "model class count does not match dataset");
  double sum = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    sum += margin_loss(sup_transform_multiclass(model, ball, data.x(i), labels.values[i]), labels.values[i],
                       margin->rho);
  }
  return sum / static_cast<double>(data.n());
}

/// Number of samples whose transformed hinge loss is positive.
inline std::size_t gamma_lin(const LinearModel& model, const Dataset& data, const PerturbationBall& ball) {
  model.validate();
  detail::check_dims(model.dim(), data);
  const auto& y = data.binary();
  const Vector pred = (data.features() * model.theta).array() + model.b;
  const double spread = ball.epsilon() * ball.dual_norm(model.theta);
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double psi = pred(static_cast<Eigen::Index>(i)) - y[i] * spread;
    if (hinge_loss(psi, y[i]) > 0.0) ++count;
  }
  return count;
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

/// M2 R / sqrt(n) + eps Mq / (2 sqrt(n))
inline double rad_bound_linear(const CapacityLinear& cap, const PerturbationBall& ball, std::size_t n) {
  detail::require(n >= 1, "Rademacher bound needs n >= 1");
  detail::require(cap.M2 >= 0 && cap.Mq >= 0 && cap.R >= 0, "capacity caps must be nonnegative");
  const double rn = std::sqrt(static_cast<double>(n));
  return cap.M2 * cap.R / rn + ball.epsilon() * cap.Mq / (2.0 * rn);
}

enum class LinearBoundForm { Transformed, Regularized };

namespace detail {

/// A loss bounded by one that coincides with `loss` wherever it is already below one.
inline double truncated_binary_loss(const LossSpec& loss, double a, int y) {
  return std::min(1.0, binary_loss(loss, a, y));
}

}  // namespace detail

/// Binary certificate. Transformed: truncated loss of Psi f plus capacity terms.
/// Regularized (hinge only): truncated hinge of f plus eps ||theta||_q gamma_lin / n.
inline BoundReport certify_linear(const LinearModel& model, const Dataset& data, const PerturbationBall& ball,
                                  const LossSpec& loss, double delta,
                                  LinearBoundForm form = LinearBoundForm::Transformed) {
  model.validate();
  validate(loss);
  detail::check_dims(model.dim(), data);
  detail::require(is_binary_loss(loss), "certify_linear takes a binary classification loss");
  const auto& y = data.binary();
  const std::size_t n = data.n();
  const double rn = std::sqrt(static_cast<double>(n));
  const auto cap = CapacityLinear::from(model, ball.q(), data);
  const double theta_q = ball.dual_norm(model.theta);

  BoundReport r;
  r.delta = delta;
  r.epsilon = ball.epsilon();
  r.n = n;
  r.loss = describe(loss);
  r.confidence = confidence_term(delta, n);
  r.complexity = 2.0 * cap.M2 * cap.R / rn;
  r.perturbation = ball.epsilon() * cap.Mq / rn;

  const Vector pred = (data.features() * model.theta).array() + model.b;
  double sum = 0.0;
  if (form == LinearBoundForm::Transformed) {
    r.form = "transformed";
    for (std::size_t i = 0; i < n; ++i) {
      const double psi = pred(static_cast<Eigen::Index>(i)) - y[i] * ball.epsilon() * theta_q;
      sum += detail::truncated_binary_loss(loss, psi, y[i]);
    }
  } else {
    detail::require(std::holds_alternative<loss::Hinge>(loss) || std::holds_alternative<loss::HingeTruncated>(loss),
                    "the regularized linear bound is stated for the hinge loss");
    r.form = "regularized";
    for (std::size_t i = 0; i < n; ++i) {
      sum += std::min(1.0, hinge_loss(pred(static_cast<Eigen::Index>(i)), y[i]));
    }
    r.perturbation += ball.epsilon() * theta_q * static_cast<double>(gamma_lin(model, data, ball)) /
                      static_cast<double>(n);
  }
  r.empirical = sum / static_cast<double>(n);
  return detail::finish_report(r);
}

inline BoundReport certify_multiclass_linear(const MulticlassLinearModel& model, const Dataset& data,
                                             const PerturbationBall& ball, double rho, double delta) {
  model.validate();
  detail::require(std::isfinite(rho) && rho > 0, "margin loss needs rho > 0");
  const LossSpec loss = loss::Margin{rho};
  const std::size_t n = data.n();
  const double rn = std::sqrt(static_cast<double>(n));
  const double K = static_cast<double>(model.classes());
  const auto cap = CapacityLinear::from(model, ball.q(), data);

  BoundReport r;
  r.delta = delta;
  r.epsilon = ball.epsilon();
  r.n = n;
  r.loss = describe(loss);
  r.form = "multiclass";
  r.confidence = confidence_term(delta, n);
  r.empirical = robust_empirical_risk_linear(model, data, ball, loss);
  r.complexity = (8.0 * K / rho) * cap.M2 * cap.R / rn;
  r.perturbation = (4.0 * K / rho) * ball.epsilon() * cap.Mq / rn;
  return detail::finish_report(r);
}

inline BoundReport certify_linear_regression(const LinearModel& model, const Dataset& data,
                                             const PerturbationBall& ball, double r_exp, double B,
                                             double delta) {
  model.validate();
  const LossSpec loss = loss::RegressionPower{r_exp, B};
  validate(loss);
  const std::size_t n = data.n();
  const double rn = std::sqrt(static_cast<double>(n));
  const auto cap = CapacityLinear::from(model, ball.q(), data);
  const double lipschitz = 4.0 * r_exp * std::pow(B, r_exp - 1.0);

  BoundReport r;
  r.delta = delta;
  r.epsilon = ball.epsilon();
  r.n = n;
  r.loss = describe(loss);
  r.form = "regression";
  r.confidence = std::pow(B, r_exp) * confidence_term(delta, n);
  r.empirical = robust_empirical_risk_linear(model, data, ball, loss);
  r.complexity = lipschitz * cap.M2 * cap.R / rn;
  r.perturbation = lipschitz * ball.epsilon() * cap.Mq / (2.0 * rn);
  return detail::finish_report(r);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Step size c / sqrt(t) at iteration t = 1, 2, ...
struct StepSchedule {
  double c = 1.0;
  double at(std::size_t t) const { return c / std::sqrt(static_cast<double>(t)); }
};

struct TrainOptions {
  std::size_t iters = 5000;
  StepSchedule step{};
  std::uint64_t seed = 0;
  /// Number of regularization grid intervals to use; 0 means every gamma_i = i/n.
  std::size_t grid = 0;
};

struct TrainLogRow {
  std::size_t iter;
  double objective;
  double grad_norm;
};

struct LinearFit {
  LinearModel model;
  double objective = 0.0;
  std::vector<TrainLogRow> log;
};

namespace detail {

inline void check_training_options(const TrainOptions& opts) {
  require(opts.iters >= 1, "training needs at least one iteration");
  require(std::isfinite(opts.step.c) && opts.step.c > 0, "step constant must be positive");
}

/// Mean of max{0, 1 - y_i(theta.x_i + b) + reg} and its subgradient in (theta, b),
/// where reg is a constant shift whose theta-subgradient is passed in.
struct HingeEval {
  double value;
  Vector grad_theta;
  double grad_b;
};

inline HingeEval shifted_hinge(const LinearModel& model, const Matrix& X, const std::vector<int>& y, double shift,
                               const Vector& shift_grad, double shift_grad_weight) {
  const std::size_t n = y.size();
  const Vector pred = (X * model.theta).array() + model.b;
  HingeEval out{0.0, Vector::Zero(model.theta.size()), 0.0};
  Vector coeff = Vector::Zero(static_cast<Eigen::Index>(n));
  double active_weight = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double h = 1.0 - y[i] * pred(ii) + shift;
    if (h > 0) {
      out.value += h;
      coeff(ii) = -static_cast<double>(y[i]);
      out.grad_b -= y[i];
      active_weight += 1.0;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.value *= inv_n;
  out.grad_b *= inv_n;
  out.grad_theta = X.transpose() * coeff * inv_n + shift_grad * (shift_grad_weight * active_weight * inv_n);
  return out;
}

}  // namespace detail

/// Mean of max{0, 1 - y(theta.x + b) + eps ||theta||_q}: convex in (theta, b).
inline double convex_objective(const LinearModel& model, const Dataset& data, const PerturbationBall& ball) {
  return robust_empirical_risk_linear(model, data, ball, loss::Hinge{});
}

/// Subgradient descent on the convex robust hinge objective, returning the
/// best iterate seen. Starts at theta = 0, b = 0; fully deterministic.
inline LinearFit train_convex(const Dataset& data, const PerturbationBall& ball, const TrainOptions& opts = {}) {
  detail::check_training_options(opts);
  const auto& y = data.binary();
  const Matrix& X = data.features();
  LinearModel current{Vector::Zero(static_cast<Eigen::Index>(data.m())), 0.0};
  LinearFit fit{current, std::numeric_limits<double>::infinity(), {}};
  fit.log.reserve(opts.iters);
  const double eps = ball.epsilon();
  for (std::size_t t = 1; t <= opts.iters; ++t) {
    const double norm_q = ball.dual_norm(current.theta);
    const Vector norm_grad = lp_norm_subgradient(current.theta, ball.q());
    const auto eval = detail::shifted_hinge(current, X, y, eps * norm_q, norm_grad, eps);
    const double grad_norm = std::sqrt(eval.grad_theta.squaredNorm() + eval.grad_b * eval.grad_b);
    fit.log.push_back({t, eval.value, grad_norm});
    if (eval.value < fit.objective) {
      fit.objective = eval.value;
      fit.model = current;
    }
    if (grad_norm == 0.0) break;
    const double step = opts.step.at(t);
    current.theta -= step * eval.grad_theta;
    current.b -= step * eval.grad_b;
  }
  const double final_value = convex_objective(current, data, ball);
  if (final_value < fit.objective) {
    fit.objective = final_value;
    fit.model = current;
  }
  return fit;
}

/// Mean hinge of f plus eps ||theta||_q gamma (one grid point of the regularized family).
inline double regularized_objective(const LinearModel& model, const Dataset& data, const PerturbationBall& ball,
                                    double gamma) {
  return empirical_risk_linear(model, data, loss::Hinge{}) + ball.epsilon() * ball.dual_norm(model.theta) * gamma;
}

/// Model-selection score: mean hinge of f plus eps ||theta||_q gamma_lin(f) / n.
inline double selection_objective(const LinearModel& model, const Dataset& data, const PerturbationBall& ball) {
  return regularized_objective(model, data, ball,
                               static_cast<double>(gamma_lin(model, data, ball)) / static_cast<double>(data.n()));
}

struct GridCandidate {
  double gamma;
  LinearModel model;
  double selection_objective;
};

struct GridFit {
  LinearModel model;
  double objective = 0.0;
  std::size_t selected = 0;  // index into candidates
  std::vector<GridCandidate> candidates;
  std::vector<TrainLogRow> log;
};

/// gamma_i = i/n for the requested grid resolution (all i when grid == 0).
inline std::vector<double> regularization_grid(std::size_t n, std::size_t grid) {
  std::vector<double> gammas;
  if (grid == 0 || grid >= n) {
    for (std::size_t i = 0; i <= n; ++i) gammas.push_back(static_cast<double>(i) / static_cast<double>(n));
    return gammas;
  }
  std::size_t last = std::numeric_limits<std::size_t>::max();
  for (std::size_t k = 0; k <= grid; ++k) {
    const std::size_t i = (k * n + grid / 2) / grid;
    if (i == last) continue;
    last = i;
    gammas.push_back(static_cast<double>(i) / static_cast<double>(n));
  }
  return gammas;
}

/// Solves the hinge + eps ||theta||_q gamma_i problem along the grid (each
/// point warm-started from the previous one) and keeps the candidate with the
/// smallest selection objective; ties go to the smaller gamma.
inline GridFit train_regularized_grid(const Dataset& data, const PerturbationBall& ball,
                                      const TrainOptions& opts = {}) {
  detail::check_training_options(opts);
  const auto& y = data.binary();
  const Matrix& X = data.features();
  const double eps = ball.epsilon();
  GridFit out;
  LinearModel current{Vector::Zero(static_cast<Eigen::Index>(data.m())), 0.0};
  std::size_t global_iter = 0;

  for (double gamma : regularization_grid(data.n(), opts.grid)) {
    LinearModel best = current;
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t t = 1; t <= opts.iters; ++t) {
      const Vector norm_grad = lp_norm_subgradient(current.theta, ball.q());
      auto eval = detail::shifted_hinge(current, X, y, 0.0, norm_grad, 0.0);
      const double value = eval.value + eps * ball.dual_norm(current.theta) * gamma;
      eval.grad_theta += (eps * gamma) * norm_grad;
      const double grad_norm = std::sqrt(eval.grad_theta.squaredNorm() + eval.grad_b * eval.grad_b);
      out.log.push_back({++global_iter, value, grad_norm});
      if (value < best_value) {
        best_value = value;
        best = current;
      }
      if (grad_norm == 0.0) break;
      const double step = opts.step.at(t);
      current.theta -= step * eval.grad_theta;
      current.b -= step * eval.grad_b;
    }
    if (regularized_objective(current, data, ball, gamma) < best_value) best = current;
    current = best;
    out.candidates.push_back({gamma, best, selection_objective(best, data, ball)});
  }

  out.selected = 0;
  for (std::size_t i = 1; i < out.candidates.size(); ++i) {
    if (out.candidates[i].selection_objective < out.candidates[out.selected].selection_objective) out.selected = i;
  }
  out.model = out.candidates[out.selected].model;
  out.objective = out.candidates[out.selected].selection_objective;
  return out;
}

}  // namespace advcert

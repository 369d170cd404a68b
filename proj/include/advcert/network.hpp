// Feed-forward networks, the tree transform (two-channel evaluation and the
// literal path-enumeration reference), network certificates, and training on
// the transformed loss.
#pragma once

#include "advcert/bounds.hpp"
#include "advcert/core.hpp"
#include "advcert/linear.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace advcert {

enum class Activation { ReLU, Tanh };

inline std::string to_string(Activation a) { return a == Activation::ReLU ? "relu" : "tanh"; }

inline Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  throw ValidationError("unknown activation '" + std::string(name) + "': expected relu or tanh");
}

template <class Derived>
Matrix activate(Activation a, const Eigen::MatrixBase<Derived>& z) {
  if (a == Activation::ReLU) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

/// s'(z) elementwise; the ReLU kink at 0 takes derivative 0.
template <class Derived>
Matrix activate_derivative(Activation a, const Eigen::MatrixBase<Derived>& z) {
  if (a == Activation::ReLU) return (z.array() > 0.0).template cast<double>().matrix();
  return (1.0 - z.array().tanh().square()).matrix();
}

/// f(x) = A^(d+1) s_d(A^(d) ... s_1(A^(1) x)). layers[k] maps J_k -> J_{k+1}
/// (zero-based), activations[k] follows layers[k] for k < d.
struct NeuralNet {
  std::vector<Matrix> layers;
  std::vector<Activation> activations;

  std::size_t depth() const { return activations.size(); }
  std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers.back().rows()); }

  /// J_1 .. J_{d+1}
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w;
    for (const auto& A : layers) w.push_back(static_cast<std::size_t>(A.rows()));
    return w;
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& A : layers) total += static_cast<std::size_t>(A.size());
    return total;
  }

  void validate() const {
    detail::require(!activations.empty(), "network needs depth d >= 1");
    detail::require(layers.size() == activations.size() + 1, "network needs d + 1 layers for d activations");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      detail::require(layers[k].rows() >= 1 && layers[k].cols() >= 1, "layer matrices must be non-empty");
      detail::require(layers[k].allFinite(), "layer entries must be finite");
      if (k > 0) {
        detail::require(layers[k].cols() == layers[k - 1].rows(),
                        "layer " + std::to_string(k + 1) + " input width does not match previous output width");
      }
    }
  }
};

namespace detail {

inline void check_input(const NeuralNet& net, Eigen::Index rows) {
  require(static_cast<std::size_t>(rows) == net.input_dim(), "input length does not match network input width");
}

}  // namespace detail

/// Forward pass on a batch whose columns are inputs.
inline Matrix forward_batch(const NeuralNet& net, const Matrix& X) {
  net.validate();
  detail::check_input(net, X.rows());
  Matrix h = X;
  for (std::size_t k = 0; k < net.depth(); ++k) h = activate(net.activations[k], net.layers[k] * h);
  return net.layers.back() * h;
}

inline Vector forward(const NeuralNet& net, const Vector& x) { return forward_batch(net, x); }

/// Vector-Jacobian product g^T df/dx at x.
inline Vector input_gradient(const NeuralNet& net, const Vector& x, const Vector& gout) {
  net.validate();
  detail::check_input(net, x.size());
  detail::require(static_cast<std::size_t>(gout.size()) == net.output_dim(), "output cotangent has wrong length");
  std::vector<Vector> pre;
  Vector h = x;
  for (std::size_t k = 0; k < net.depth(); ++k) {
    pre.push_back(net.layers[k] * h);
    h = activate(net.activations[k], pre.back());
  }
  Vector g = net.layers.back().transpose() * gout;
  for (std::size_t k = net.depth(); k-- > 0;) {
    g = g.cwiseProduct(Vector(activate_derivative(net.activations[k], pre[k])));
    g = net.layers[k].transpose() * g;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Tree transform
// ---------------------------------------------------------------------------

/// Per-layer values of the two sign channels. The "lo" channel of a unit is
/// its value when every path through it is pushed toward decreasing the output
/// component it feeds with a +1 label; "hi" is the opposite push. For a label y
/// and downstream weight-sign product s, the unit uses lo when y s = +1 and hi
/// otherwise. Columns index samples.
struct TreeEvalState {
  std::vector<Matrix> z_lo, z_hi;  // pre-activations, one per hidden layer
  std::vector<Matrix> u_lo, u_hi;  // activations, one per hidden layer
  Matrix out_lo, out_hi;           // output layer, lo = Tf(x, +1), hi = Tf(x, -1)
  Vector row_norms;                // ||a_j^(1)||_q
};

namespace detail {

inline Matrix positive_part(const Matrix& A) { return A.cwiseMax(0.0); }
inline Matrix negative_part(const Matrix& A) { return A.cwiseMin(0.0); }

}  // namespace detail

/// Two-channel evaluation for a batch of inputs (columns of X).
inline TreeEvalState tree_propagate(const NeuralNet& net, const PerturbationBall& ball, const Matrix& X) {
  net.validate();
  detail::check_input(net, X.rows());
  TreeEvalState s;
  const Matrix& A1 = net.layers.front();
  s.row_norms.resize(A1.rows());
  for (Eigen::Index j = 0; j < A1.rows(); ++j) s.row_norms(j) = lp_norm(A1.row(j).transpose(), ball.q());
  const Matrix base = A1 * X;
  const Vector shift = ball.epsilon() * s.row_norms;
  s.z_lo.push_back(base.colwise() - shift);
  s.z_hi.push_back(base.colwise() + shift);
  s.u_lo.push_back(activate(net.activations[0], s.z_lo.back()));
  s.u_hi.push_back(activate(net.activations[0], s.z_hi.back()));
  for (std::size_t k = 1; k <= net.depth(); ++k) {
    const Matrix Ap = detail::positive_part(net.layers[k]);
    const Matrix An = detail::negative_part(net.layers[k]);
    Matrix lo = Ap * s.u_lo.back() + An * s.u_hi.back();
    Matrix hi = Ap * s.u_hi.back() + An * s.u_lo.back();
    if (k == net.depth()) {
      s.out_lo = std::move(lo);
      s.out_hi = std::move(hi);
    } else {
      s.z_lo.push_back(std::move(lo));
      s.z_hi.push_back(std::move(hi));
      s.u_lo.push_back(activate(net.activations[k], s.z_lo.back()));
      s.u_hi.push_back(activate(net.activations[k], s.z_hi.back()));
    }
  }
  return s;
}

namespace detail {

inline void check_label_signs(const NeuralNet& net, const Vector& labels) {
  require(static_cast<std::size_t>(labels.size()) == net.output_dim(),
          "need one +-1 label per output component");
  for (Eigen::Index k = 0; k < labels.size(); ++k) {
    require(labels(k) == 1.0 || labels(k) == -1.0, "tree transform labels must be +1 or -1");
  }
}

}  // namespace detail

/// Tf(x, y) with output component k evaluated under label labels(k).
inline Vector tree_transform_eval(const NeuralNet& net, const PerturbationBall& ball, const Vector& x,
                                  const Vector& labels) {
  detail::check_label_signs(net, labels);
  const auto s = tree_propagate(net, ball, x);
  Vector out(labels.size());
  for (Eigen::Index k = 0; k < labels.size(); ++k) out(k) = labels(k) > 0 ? s.out_lo(k, 0) : s.out_hi(k, 0);
  return out;
}

/// Binary tree transform of a single-output network.
inline double tree_transform_binary(const NeuralNet& net, const PerturbationBall& ball, const Vector& x, int y) {
  detail::require(net.output_dim() == 1, "binary tree transform needs a single-output network");
  detail::require(y == 1 || y == -1, "binary label must be +1 or -1");
  return tree_transform_eval(net, ball, x, Vector::Constant(1, y))(0);
}

/// Componentwise multiclass transform: class `cls` under +1, the rest under -1.
inline Vector tree_transform_multiclass(const NeuralNet& net, const PerturbationBall& ball, const Vector& x,
                                        std::size_t cls) {
  detail::require(cls < net.output_dim(), "class index outside the network's output width");
  return tree_transform_eval(net, ball, x, one_hot_signs(cls, net.output_dim()));
}

/// (T_+ f, T_- f) = (Tf(x, -1), Tf(x, +1)) for a single-output network.
inline Envelope tree_envelope(const NeuralNet& net, const PerturbationBall& ball, const Vector& x) {
  detail::require(net.output_dim() == 1, "regression envelope needs a single-output network");
  const auto s = tree_propagate(net, ball, x);
  return {s.out_hi(0, 0), s.out_lo(0, 0)};
}

/// Largest path count accepted by the literal path-enumeration evaluator.
inline constexpr double kNaivePathLimit = 1e5;

namespace detail {

/// argmax over the unit l_p ball of a.w (lowest index on ties for p = 1).
inline Vector dual_direction(const Vector& a, NormExp p) {
  Vector w = Vector::Zero(a.size());
  switch (p) {
    case NormExp::Inf:
      for (Eigen::Index i = 0; i < a.size(); ++i) w(i) = a(i) > 0 ? 1.0 : (a(i) < 0 ? -1.0 : 0.0);
      break;
    case NormExp::Two: {
      const double n = a.norm();
      if (n > 0) w = a / n;
      break;
    }
    case NormExp::One: {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < a.size(); ++i) {
        if (std::abs(a(i)) > std::abs(a(best))) best = i;
      }
      if (a(best) != 0.0) w(best) = a(best) > 0 ? 1.0 : -1.0;
      break;
    }
  }
  return w;
}

inline double sgn(double v) { return v < 0 ? -1.0 : 1.0; }

}  // namespace detail

/// Tf evaluated literally: every input-to-output path gets its own perturbed
/// input x + w, with w pushing the first-layer unit against the label times the
/// sign of the weight product along the rest of the path.
inline Vector tree_transform_naive(const NeuralNet& net, const PerturbationBall& ball, const Vector& x,
                                   const Vector& labels) {
  net.validate();
  detail::check_input(net, x.size());
  detail::check_label_signs(net, labels);
  double paths = 1.0;
  for (auto w : net.widths()) paths *= static_cast<double>(w);
  detail::require(paths <= kNaivePathLimit, "path count exceeds the enumeration guard");

  const std::size_t d = net.depth();
  // unit(k, j, sign, y): value of unit j in hidden layer k (1-based) on the
  // subtree rooted there, given the sign of the downstream weight product.
  std::function<double(std::size_t, Eigen::Index, double, double)> unit =
      [&](std::size_t k, Eigen::Index j, double sign, double y) -> double {
    if (k == 1) {
      const Vector a = net.layers[0].row(j).transpose();
      const Vector w = (-y * sign * ball.epsilon()) * detail::dual_direction(a, ball.p());
      const double pre = a.dot(x + w);
      return activate(net.activations[0], Vector::Constant(1, pre))(0, 0);
    }
    const Matrix& A = net.layers[k - 1];
    double pre = 0.0;
    for (Eigen::Index jp = 0; jp < A.cols(); ++jp) {
      pre += A(j, jp) * unit(k - 1, jp, sign * detail::sgn(A(j, jp)), y);
    }
    return activate(net.activations[k - 1], Vector::Constant(1, pre))(0, 0);
  };

  const Matrix& C = net.layers.back();
  Vector out = Vector::Zero(C.rows());
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    for (Eigen::Index j = 0; j < C.cols(); ++j) out(i) += C(i, j) * unit(d, j, detail::sgn(C(i, j)), labels(i));
  }
  return out;
}

/// Restricted transform for networks with nonnegative hidden weights, two units
/// in the last hidden layer and output weights (+, -). Branch one runs under
/// label y, branch two under -y, each with one shared first-layer shift -label eps c_q.
inline double restricted_tree_eval(const NeuralNet& net, const PerturbationBall& ball, const Vector& x, int y,
                                   double c_q) {
  net.validate();
  detail::check_input(net, x.size());
  detail::require(y == 1 || y == -1, "binary label must be +1 or -1");
  detail::require(std::isfinite(c_q) && c_q >= 0, "c_q must be finite and nonnegative");
  const std::size_t d = net.depth();
  for (std::size_t k = 0; k < d; ++k) {
    detail::require((net.layers[k].array() >= 0.0).all(),
                    "restricted transform needs nonnegative weights in layer " + std::to_string(k + 1));
  }
  const Matrix& C = net.layers.back();
  detail::require(C.rows() == 1 && C.cols() == 2, "restricted transform needs two last-hidden units and one output");
  detail::require(C(0, 0) >= 0.0 && C(0, 1) <= 0.0, "restricted transform needs output weights (+, -)");
  const Matrix& A1 = net.layers.front();
  for (Eigen::Index j = 0; j < A1.rows(); ++j) {
    detail::require(lp_norm(A1.row(j).transpose(), ball.q()) <= c_q * (1.0 + 1e-12) + 1e-15,
                    "first-layer row norm exceeds c_q");
  }

  const auto branch = [&](double shift) {
    Vector h = activate(net.activations[0], ((A1 * x).array() + shift).matrix());
    for (std::size_t k = 1; k < d; ++k) h = activate(net.activations[k], net.layers[k] * h);
    return h;
  };
  const double w1 = -y * ball.epsilon() * c_q;
  const double w2 = y * ball.epsilon() * c_q;
  return C(0, 0) * branch(w1)(0) + C(0, 1) * branch(w2)(1);
}

// ---------------------------------------------------------------------------
// Capacity and Rademacher bound
// ---------------------------------------------------------------------------

/// Max absolute row sum.
inline double operator_inf_norm(const Matrix& A) { return A.cwiseAbs().rowwise().sum().maxCoeff(); }

struct CapacityNet {
  std::vector<double> alpha_j;  // ||A^(j)||_inf, j = 1..d+1
  double alpha = 0.0;           // product of alpha_j
  double alpha_1F = 0.0;        // ||A^(1)||_F
  double alpha_1q = 0.0;        // max_j ||a_j^(1)||_q
  double R = 0.0;               // max_i ||x_i||_2

  /// Product of alpha_j over j >= 2 (the deeper layers).
  double tail_product() const {
    double p = 1.0;
    for (std::size_t j = 1; j < alpha_j.size(); ++j) p *= alpha_j[j];
    return p;
  }
};

inline CapacityNet net_capacity(const NeuralNet& net, NormExp q, double R) {
  net.validate();
  CapacityNet cap;
  cap.alpha = 1.0;
  for (const auto& A : net.layers) {
    cap.alpha_j.push_back(operator_inf_norm(A));
    cap.alpha *= cap.alpha_j.back();
  }
  const Matrix& A1 = net.layers.front();
  cap.alpha_1F = A1.norm();
  for (Eigen::Index j = 0; j < A1.rows(); ++j) cap.alpha_1q = std::max(cap.alpha_1q, lp_norm(A1.row(j).transpose(), q));
  cap.R = R;
  return cap;
}

inline CapacityNet net_capacity(const NeuralNet& net, NormExp q, const Dataset& data) {
  return net_capacity(net, q, data.max_row_norm());
}

/// The two halves of the network Rademacher bound: the R part and the eps part.
struct TreeRadParts {
  double data_part;
  double perturbation_part;
  double total() const { return data_part + perturbation_part; }
};

inline TreeRadParts rad_bound_tree_parts(const CapacityNet& cap, const PerturbationBall& ball, std::size_t n,
                                         std::size_t d) {
  detail::require(n >= 1, "Rademacher bound needs n >= 1");
  detail::require(d >= 1, "Rademacher bound needs depth d >= 1");
  const double factor = cap.tail_product() * (std::sqrt(2.0 * static_cast<double>(d) * std::log(2.0)) + 1.0) /
                        std::sqrt(static_cast<double>(n));
  return {factor * cap.alpha_1F * cap.R, factor * cap.alpha_1q * ball.epsilon()};
}

/// alpha (alpha_1F / alpha_1 R + alpha_1q / alpha_1 eps)(sqrt(2 d ln 2) + 1) / sqrt(n),
/// evaluated with alpha / alpha_1 as the product of the deeper layers.
inline double rad_bound_tree(const CapacityNet& cap, const PerturbationBall& ball, std::size_t n, std::size_t d) {
  return rad_bound_tree_parts(cap, ball, n, d).total();
}

// ---------------------------------------------------------------------------
// Risks and certificates
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix columns(const Dataset& data) { return data.features().transpose(); }

inline void check_net_for_data(const NeuralNet& net, const Dataset& data) {
  net.validate();
  require(net.input_dim() == data.m(), "dataset feature count does not match network input width");
  switch (data.kind()) {
    case LabelKind::Binary:
    case LabelKind::Real:
      require(net.output_dim() == 1, "binary and regression tasks need a single-output network");
      break;
    case LabelKind::Class:
      require(net.output_dim() == data.classes().num_classes, "network output width must equal K");
      break;
  }
}

}  // namespace detail

/// Per-sample loss at the tree transform; `truncate` caps each term at 1.
inline std::vector<double> tree_losses(const NeuralNet& net, const Dataset& data, const PerturbationBall& ball,
                                       const LossSpec& loss, bool truncate = false) {
  detail::check_net_for_data(net, data);
  validate(loss);
  const auto s = tree_propagate(net, ball, detail::columns(data));
  std::vector<double> out(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    double v = 0.0;
    if (is_binary_loss(loss)) {
      const int y = data.binary()[i];
      v = binary_loss(loss, y > 0 ? s.out_lo(0, c) : s.out_hi(0, c), y);
    } else if (const auto* m = std::get_if<loss::Margin>(&loss)) {
      const std::size_t cls = data.classes().values[i];
      Vector t = s.out_hi.col(c);
      t(static_cast<Eigen::Index>(cls)) = s.out_lo(static_cast<Eigen::Index>(cls), c);
      v = margin_loss(t, cls, m->rho);
    } else {
      const auto& reg = std::get<loss::RegressionPower>(loss);
      v = regression_envelope_loss(s.out_hi(0, c), s.out_lo(0, c), data.real()[i], reg.r, reg.B);
    }
    out[i] = truncate ? std::min(1.0, v) : v;
  }
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

/// Mean loss at Tf: an upper bound on the adversarial empirical risk.
inline double tree_empirical_risk(const NeuralNet& net, const Dataset& data, const PerturbationBall& ball,
                                  const LossSpec& loss) {
  return mean_of(tree_losses(net, data, ball, loss));
}

/// Mean loss of f itself.
inline double empirical_risk_nn(const NeuralNet& net, const Dataset& data, const LossSpec& loss) {
  return tree_empirical_risk(net, data, PerturbationBall(NormExp::Two, 0.0), loss);
}

enum class NnBoundForm { Generic, CrossEntropy };

/// Binary network certificate. Generic: truncated loss of Tf plus twice the
/// Rademacher bound. CrossEntropy: truncated cross-entropy of f plus a
/// perturbation term weighted by the mean |g'| at Tf.
inline BoundReport certify_nn(const NeuralNet& net, const Dataset& data, const PerturbationBall& ball,
                              const LossSpec& loss, double delta, NnBoundForm form = NnBoundForm::Generic) {
  detail::check_net_for_data(net, data);
  validate(loss);
  detail::require(data.kind() == LabelKind::Binary, "certify_nn needs binary labels");
  detail::require(is_binary_loss(loss), "certify_nn takes a binary classification loss");
  const std::size_t n = data.n();
  const auto cap = net_capacity(net, ball.q(), data);
  const auto rad = rad_bound_tree_parts(cap, ball, n, net.depth());

  BoundReport r;
  r.delta = delta;
  r.epsilon = ball.epsilon();
  r.n = n;
  r.confidence = confidence_term(delta, n);
  r.complexity = 2.0 * rad.data_part;
  r.perturbation = 2.0 * rad.perturbation_part;
  if (form == NnBoundForm::Generic) {
    r.form = "generic";
    r.loss = describe(loss);
    r.empirical = mean_of(tree_losses(net, data, ball, loss, true));
  } else {
    detail::require(std::holds_alternative<loss::CrossEntropy>(loss),
                    "the cross-entropy network bound needs the xe loss");
    r.form = "xe";
    r.loss = describe(loss);
    const auto s = tree_propagate(net, ball, detail::columns(data));
    const Matrix f = forward_batch(net, detail::columns(data));
    const auto& y = data.binary();
    double emp = 0.0, slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      emp += std::min(1.0, xe_value_and_derivative(f(0, c), y[i]).value);
      const double tf = y[i] > 0 ? s.out_lo(0, c) : s.out_hi(0, c);
      slope += std::abs(xe_value_and_derivative(tf, y[i]).derivative);
    }
    r.empirical = emp / static_cast<double>(n);
    r.perturbation += ball.epsilon() * cap.alpha_1q * cap.tail_product() * slope / static_cast<double>(n);
  }
  return detail::finish_report(r);
}

inline BoundReport certify_multiclass_nn(const NeuralNet& net, const Dataset& data, const PerturbationBall& ball,
                                         double rho, double delta) {
  detail::check_net_for_data(net, data);
  detail::require(data.kind() == LabelKind::Class, "certify_multiclass_nn needs class labels");
  detail::require(std::isfinite(rho) && rho > 0, "margin loss needs rho > 0");
  const LossSpec loss = loss::Margin{rho};
  const std::size_t n = data.n();
  const double scale = 8.0 * static_cast<double>(net.output_dim()) / rho;
  const auto rad = rad_bound_tree_parts(net_capacity(net, ball.q(), data), ball, n, net.depth());

  BoundReport r;
  r.delta = delta;
  r.epsilon = ball.epsilon();
  r.n = n;
  r.loss = describe(loss);
  r.form = "multiclass";
  r.confidence = confidence_term(delta, n);
  r.empirical = tree_empirical_risk(net, data, ball, loss);
  r.complexity = scale * rad.data_part;
  r.perturbation = scale * rad.perturbation_part;
  return detail::finish_report(r);
}

inline BoundReport certify_nn_regression(const NeuralNet& net, const Dataset& data, const PerturbationBall& ball,
                                         double r_exp, double B, double delta) {
  detail::check_net_for_data(net, data);
  detail::require(data.kind() == LabelKind::Real, "certify_nn_regression needs real labels");
  const LossSpec loss = loss::RegressionPower{r_exp, B};
  validate(loss);
  const std::size_t n = data.n();
  const double scale = 4.0 * r_exp * std::pow(B, r_exp - 1.0);
  const auto rad = rad_bound_tree_parts(net_capacity(net, ball.q(), data), ball, n, net.depth());

  BoundReport r;
  r.delta = delta;
  r.epsilon = ball.epsilon();
  r.n = n;
  r.loss = describe(loss);
  r.form = "regression";
  r.confidence = std::pow(B, r_exp) * confidence_term(delta, n);
  r.empirical = tree_empirical_risk(net, data, ball, loss);
  r.complexity = scale * rad.data_part;
  r.perturbation = scale * rad.perturbation_part;
  return detail::finish_report(r);
}

// ---------------------------------------------------------------------------
// Training on the transformed loss
// ---------------------------------------------------------------------------

struct Architecture {
  std::vector<std::size_t> hidden_widths;
  std::vector<Activation> activations;

  void validate() const {
    detail::require(!hidden_widths.empty(), "architecture needs at least one hidden layer");
    detail::require(hidden_widths.size() == activations.size(), "need one activation per hidden layer");
    for (auto w : hidden_widths) detail::require(w >= 1, "hidden widths must be >= 1");
  }
};

/// Entries uniform in [-1/sqrt(J_in), 1/sqrt(J_in)] per layer, seeded.
inline NeuralNet init_net(const Architecture& arch, std::size_t input_dim, std::size_t output_dim,
                          std::uint64_t seed) {
  arch.validate();
  detail::require(input_dim >= 1 && output_dim >= 1, "network needs positive input and output widths");
  Rng rng(seed);
  NeuralNet net;
  net.activations = arch.activations;
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), arch.hidden_widths.begin(), arch.hidden_widths.end());
  dims.push_back(output_dim);
  for (std::size_t k = 1; k < dims.size(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[k - 1]));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix A(static_cast<Eigen::Index>(dims[k]), static_cast<Eigen::Index>(dims[k - 1]));
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      for (Eigen::Index j = 0; j < A.cols(); ++j) A(i, j) = u(rng);
    }
    net.layers.push_back(std::move(A));
  }
  return net;
}

struct TreeObjective {
  double value = 0.0;
  std::vector<Matrix> grads;  // one per layer, same shapes as net.layers

  double grad_norm() const {
    double s = 0.0;
    for (const auto& g : grads) s += g.squaredNorm();
    return std::sqrt(s);
  }
};

namespace detail {

inline void check_trainable(const LossSpec& loss, const Dataset& data) {
  validate(loss);
  detail::require(!std::holds_alternative<loss::ZeroOne>(loss) && !std::holds_alternative<loss::HingeIndicator>(loss),
                  "loss " + describe(loss) + " has zero gradient almost everywhere and cannot be trained");
  switch (data.kind()) {
    case LabelKind::Binary:
      require(is_binary_loss(loss), "binary labels need a binary classification loss");
      break;
    case LabelKind::Class:
      require(std::holds_alternative<loss::Margin>(loss), "class labels need the margin loss");
      break;
    case LabelKind::Real:
      require(std::holds_alternative<loss::RegressionPower>(loss), "real labels need the regression loss");
      break;
  }
}

/// Back-propagates output cotangents on both channels through the two-channel
/// evaluation. Weight signs are held fixed, which is exact away from zero weights.
inline std::vector<Matrix> tree_backward(const NeuralNet& net, const PerturbationBall& ball, const Matrix& X,
                                         const TreeEvalState& s, Matrix g_lo, Matrix g_hi) {
  const std::size_t d = net.depth();
  std::vector<Matrix> grads(net.layers.size());
  for (std::size_t k = d; k >= 1; --k) {
    const Matrix& A = net.layers[k];
    const Matrix& ulo = s.u_lo[k - 1];
    const Matrix& uhi = s.u_hi[k - 1];
    const auto mask = (A.array() >= 0.0).cast<double>();
    const Matrix same = g_lo * ulo.transpose() + g_hi * uhi.transpose();
    const Matrix cross = g_lo * uhi.transpose() + g_hi * ulo.transpose();
    grads[k] = (mask * same.array() + (1.0 - mask) * cross.array()).matrix();
    const Matrix Ap = positive_part(A), An = negative_part(A);
    Matrix du_lo = Ap.transpose() * g_lo + An.transpose() * g_hi;
    Matrix du_hi = Ap.transpose() * g_hi + An.transpose() * g_lo;
    g_lo = du_lo.cwiseProduct(activate_derivative(net.activations[k - 1], s.z_lo[k - 1]));
    g_hi = du_hi.cwiseProduct(activate_derivative(net.activations[k - 1], s.z_hi[k - 1]));
  }
  const Matrix& A1 = net.layers.front();
  grads[0] = (g_lo + g_hi) * X.transpose();
  const Vector spread = (g_hi - g_lo).rowwise().sum();
  for (Eigen::Index j = 0; j < A1.rows(); ++j) {
    if (spread(j) == 0.0) continue;
    grads[0].row(j) += (ball.epsilon() * spread(j)) * lp_norm_subgradient(A1.row(j).transpose(), ball.q()).transpose();
  }
  return grads;
}

}  // namespace detail

/// Mean loss at Tf over the dataset and its gradient in every layer matrix.
inline TreeObjective tree_objective(const NeuralNet& net, const Dataset& data, const PerturbationBall& ball,
                                    const LossSpec& loss) {
  detail::check_net_for_data(net, data);
  detail::check_trainable(loss, data);
  const Matrix X = detail::columns(data);
  const auto s = tree_propagate(net, ball, X);
  const std::size_t n = data.n();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix g_lo = Matrix::Zero(s.out_lo.rows(), s.out_lo.cols());
  Matrix g_hi = Matrix::Zero(s.out_hi.rows(), s.out_hi.cols());
  TreeObjective out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    if (is_binary_loss(loss)) {
      const int y = data.binary()[i];
      const double t = y > 0 ? s.out_lo(0, c) : s.out_hi(0, c);
      out.value += binary_loss(loss, t, y);
      (y > 0 ? g_lo : g_hi)(0, c) = binary_loss_derivative(loss, t, y) * inv_n;
    } else if (const auto* m = std::get_if<loss::Margin>(&loss)) {
      const std::size_t cls = data.classes().values[i];
      const auto ci = static_cast<Eigen::Index>(cls);
      Vector t = s.out_hi.col(c);
      t(ci) = s.out_lo(ci, c);
      out.value += margin_loss(t, cls, m->rho);
      const Vector g = margin_loss_gradient(t, cls, m->rho) * inv_n;
      g_hi.col(c) = g;
      g_hi(ci, c) = 0.0;
      g_lo(ci, c) = g(ci);
    } else {
      const auto& reg = std::get<loss::RegressionPower>(loss);
      const double y = data.real()[i];
      out.value += regression_envelope_loss(s.out_hi(0, c), s.out_lo(0, c), y, reg.r, reg.B);
      const auto [d_upper, d_lower] = regression_envelope_gradient(s.out_hi(0, c), s.out_lo(0, c), y, reg.r, reg.B);
      g_hi(0, c) = d_upper * inv_n;
      g_lo(0, c) = d_lower * inv_n;
    }
  }
  out.value *= inv_n;
  out.grads = detail::tree_backward(net, ball, X, s, std::move(g_lo), std::move(g_hi));
  return out;
}

struct NetFit {
  NeuralNet net;
  double objective = 0.0;
  std::vector<TrainLogRow> log;
};

/// Subgradient descent on the mean loss at Tf from a seeded initialization,
/// returning the best iterate seen.
inline NetFit train_tree(const Dataset& data, const PerturbationBall& ball, const Architecture& arch,
                         const LossSpec& loss, const TrainOptions& opts = {}) {
  arch.validate();
  detail::check_training_options(opts);
  detail::check_trainable(loss, data);
  const std::size_t out_dim = data.kind() == LabelKind::Class ? data.classes().num_classes : 1;
  NeuralNet current = init_net(arch, data.m(), out_dim, opts.seed);
  NetFit fit{current, std::numeric_limits<double>::infinity(), {}};
  fit.log.reserve(opts.iters);
  for (std::size_t t = 1; t <= opts.iters; ++t) {
    const auto obj = tree_objective(current, data, ball, loss);
    const double gn = obj.grad_norm();
    fit.log.push_back({t, obj.value, gn});
    if (obj.value < fit.objective) {
      fit.objective = obj.value;
      fit.net = current;
    }
    if (gn == 0.0) break;
    const double step = opts.step.at(t);
    for (std::size_t k = 0; k < current.layers.size(); ++k) current.layers[k] -= step * obj.grads[k];
  }
  const double final_value = tree_empirical_risk(current, data, ball, loss);
  if (final_value < fit.objective) {
    fit.objective = final_value;
    fit.net = current;
  }
  return fit;
}

}  // namespace advcert

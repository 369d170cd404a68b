// Brute-force adversaries, Monte-Carlo Rademacher estimation, SDP dual
// certificates for the two-layer comparison instance, and the property suites
// run by `advcert verify`.
#pragma once

#include "advcert/core.hpp"
#include "advcert/linear.hpp"
#include "advcert/network.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace advcert {

// ---------------------------------------------------------------------------
// Sampling helpers
// ---------------------------------------------------------------------------

inline Vector random_gaussian(std::size_t len, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(static_cast<Eigen::Index>(len));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = g(rng);
  return v;
}

inline Matrix random_gaussian(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = g(rng);
  }
  return M;
}

/// A uniformly distributed point of the ball.
inline Vector sample_in_ball(const PerturbationBall& ball, std::size_t m, Rng& rng) {
  const double eps = ball.epsilon();
  Vector w(static_cast<Eigen::Index>(m));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (ball.p()) {
    case NormExp::Inf:
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = eps * (2.0 * u(rng) - 1.0);
      break;
    case NormExp::Two: {
      Vector g = random_gaussian(m, rng);
      const double n = g.norm();
      if (n == 0.0) return Vector::Zero(w.size());
      w = g * (eps * std::pow(u(rng), 1.0 / static_cast<double>(m)) / n);
      break;
    }
    case NormExp::One: {
      std::exponential_distribution<double> e(1.0);
      double total = e(rng);
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        w(i) = e(rng);
        total += w(i);
      }
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = eps * w(i) / total * (u(rng) < 0.5 ? -1.0 : 1.0);
      break;
    }
  }
  return w;
}

/// Euclidean projection onto the ball (sorted-simplex projection for p = 1).
inline Vector project_to_ball(const Vector& w, const PerturbationBall& ball) {
  const double eps = ball.epsilon();
  switch (ball.p()) {
    case NormExp::Inf: return w.cwiseMax(-eps).cwiseMin(eps);
    case NormExp::Two: {
      const double n = w.norm();
      return n <= eps ? w : Vector(w * (eps / n));
    }
    case NormExp::One: {
      if (w.lpNorm<1>() <= eps) return w;
      if (eps == 0.0) return Vector::Zero(w.size());
      std::vector<double> u(static_cast<std::size_t>(w.size()));
      for (Eigen::Index i = 0; i < w.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(w(i));
      std::sort(u.begin(), u.end(), std::greater<>());
      double cumsum = 0.0, tau = 0.0;
      for (std::size_t j = 0; j < u.size(); ++j) {
        cumsum += u[j];
        const double t = (cumsum - eps) / static_cast<double>(j + 1);
        if (u[j] - t > 0) tau = t;
      }
      Vector out(w.size());
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        out(i) = (w(i) < 0 ? -1.0 : 1.0) * std::max(std::abs(w(i)) - tau, 0.0);
      }
      return out;
    }
  }
  return w;
}

inline LinearModel random_linear_model(std::size_t m, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return {random_gaussian(m, rng), g(rng)};
}

inline NeuralNet random_net(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim,
                            const std::vector<Activation>& acts, Rng& rng) {
  NeuralNet net;
  net.activations = acts;
  std::size_t prev = input_dim;
  for (auto w : hidden) {
    net.layers.push_back(random_gaussian(w, prev, rng, 1.0 / std::sqrt(static_cast<double>(prev))));
    prev = w;
  }
  net.layers.push_back(random_gaussian(output_dim, prev, rng, 1.0 / std::sqrt(static_cast<double>(prev))));
  return net;
}

// ---------------------------------------------------------------------------
// Attacks
// ---------------------------------------------------------------------------

struct AttackReport {
  Vector best_w;
  double achieved_loss = 0.0;
  std::string method;
  std::size_t iterations = 0;
  std::size_t restarts = 0;
};

inline constexpr std::size_t kCornerDimLimit = 15;

/// Exact maximum of the loss over the 2^m corners of the l_inf ball. For a
/// linear f every monotone loss attains its supremum at a corner.
inline AttackReport corner_adversary_linear(const LinearModel& model, const PerturbationBall& ball, const Vector& x,
                                            int y, const LossSpec& loss) {
  model.validate();
  validate(loss);
  detail::require(ball.p() == NormExp::Inf, "corner enumeration needs p = inf");
  detail::require(model.dim() <= kCornerDimLimit, "corner enumeration needs m <= 15");
  detail::require(static_cast<std::size_t>(x.size()) == model.dim(), "input length does not match model dimension");
  detail::require(is_binary_loss(loss), "corner enumeration takes a binary classification loss");
  const std::size_t m = model.dim();
  AttackReport rep;
  rep.method = "corner";
  rep.achieved_loss = -std::numeric_limits<double>::infinity();
  Vector w(static_cast<Eigen::Index>(m));
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    for (std::size_t j = 0; j < m; ++j) {
      w(static_cast<Eigen::Index>(j)) = ((mask >> j) & 1U) ? ball.epsilon() : -ball.epsilon();
    }
    const double value = binary_loss(loss, model.predict(x + w), y);
    if (value > rep.achieved_loss) {
      rep.achieved_loss = value;
      rep.best_w = w;
    }
    ++rep.iterations;
  }
  return rep;
}

namespace detail {

inline Prediction predict_any(const LinearModel& m, const Vector& x) { return m.predict(x); }
inline Prediction predict_any(const MulticlassLinearModel& m, const Vector& x) { return Vector(m.predict(x)); }
inline Prediction predict_any(const NeuralNet& net, const Vector& x) {
  Vector out = forward(net, x);
  if (out.size() == 1) return out(0);
  return out;
}

inline Vector output_vjp(const LinearModel& m, const Vector&, const Vector& g) { return g(0) * m.theta; }
inline Vector output_vjp(const MulticlassLinearModel& m, const Vector&, const Vector& g) {
  return m.Theta.transpose() * g;
}
inline Vector output_vjp(const NeuralNet& net, const Vector& x, const Vector& g) { return input_gradient(net, x, g); }

/// Gradient (in output space) of a score that increases whenever the loss can:
/// -y f for binary labels, the negated margin for classes, |f - y| for reals.
inline Vector score_cotangent(const Prediction& pred, const Label& label) {
  if (const auto* b = std::get_if<BinaryLabel>(&label)) return Vector::Constant(1, -static_cast<double>(b->value));
  if (const auto* c = std::get_if<ClassLabel>(&label)) {
    const auto& scores = std::get<Vector>(pred);
    const auto info = multiclass_margin(scores, c->index);
    Vector g = Vector::Zero(scores.size());
    g(static_cast<Eigen::Index>(c->index)) = -1.0;
    g(info.runner_up) = 1.0;
    return g;
  }
  const double f = std::get<double>(pred);
  return Vector::Constant(1, f >= std::get<RealLabel>(label).value ? 1.0 : -1.0);
}

}  // namespace detail

struct PgdOptions {
  std::size_t steps = 100;
  std::size_t restarts = 10;
  double step = -1.0;  // negative means epsilon / 10
  std::uint64_t seed = 0;
};

/// Projected gradient ascent over the ball. Restart 0 starts at w = 0, later
/// restarts at seeded uniform points; the true loss is recorded at every
/// iterate and the best one returned, so the result is a sound lower bound on
/// the supremum.
template <class Model>
AttackReport pgd_attack(const Model& model, const PerturbationBall& ball, const Vector& x, const Label& label,
                        const LossSpec& loss, const PgdOptions& opts = {}) {
  validate(loss);
  detail::require(opts.restarts >= 1, "PGD needs at least one restart");
  const std::size_t m = static_cast<std::size_t>(x.size());
  const double step = opts.step > 0 ? opts.step : ball.epsilon() / 10.0;
  Rng rng(opts.seed);
  AttackReport rep;
  rep.method = "pgd";
  rep.restarts = opts.restarts;
  rep.best_w = Vector::Zero(x.size());
  rep.achieved_loss = loss_eval(loss, detail::predict_any(model, x), label);

  for (std::size_t r = 0; r < opts.restarts; ++r) {
    Vector w = r == 0 ? Vector::Zero(x.size()) : sample_in_ball(ball, m, rng);
    for (std::size_t t = 0; t <= opts.steps; ++t) {
      const Vector xp = x + w;
      const Prediction pred = detail::predict_any(model, xp);
      const double value = loss_eval(loss, pred, label);
      ++rep.iterations;
      if (value > rep.achieved_loss) {
        rep.achieved_loss = value;
        rep.best_w = w;
      }
      if (t == opts.steps || ball.epsilon() == 0.0) break;
      const Vector g = detail::output_vjp(model, xp, detail::score_cotangent(pred, label));
      Vector dir = Vector::Zero(g.size());
      switch (ball.p()) {
        case NormExp::Inf:
          for (Eigen::Index i = 0; i < g.size(); ++i) dir(i) = g(i) > 0 ? 1.0 : (g(i) < 0 ? -1.0 : 0.0);
          break;
        case NormExp::Two:
          if (g.norm() > 0) dir = g / g.norm();
          break;
        case NormExp::One: {
          Eigen::Index j = 0;
          g.cwiseAbs().maxCoeff(&j);
          if (g(j) != 0.0) dir(j) = g(j) > 0 ? 1.0 : -1.0;
          break;
        }
      }
      w = project_to_ball(w + step * dir, ball);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Monte-Carlo Rademacher estimation
// ---------------------------------------------------------------------------

struct MonteCarloEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t draws_sigma = 0;
  std::size_t draws_function = 0;
};

/// Given F (one row of per-sample values per sampled function), averages over
/// seeded sign draws the best correlation (1/n) sum_i sigma_i F(f, i).
inline MonteCarloEstimate mc_rademacher_from_values(const Matrix& F, std::size_t draws_sigma, std::uint64_t seed) {
  detail::require(draws_sigma >= 1 && F.rows() >= 1, "Monte-Carlo estimation needs at least one draw");
  const auto n = F.cols();
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  Matrix S(static_cast<Eigen::Index>(draws_sigma), n);
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    for (Eigen::Index j = 0; j < n; ++j) S(i, j) = coin(rng) ? 1.0 : -1.0;
  }
  const Vector best = (S * F.transpose()).rowwise().maxCoeff() / static_cast<double>(n);
  MonteCarloEstimate est;
  est.draws_sigma = draws_sigma;
  est.draws_function = static_cast<std::size_t>(F.rows());
  est.mean = best.mean();
  if (draws_sigma > 1) {
    const double var = (best.array() - est.mean).square().sum() / static_cast<double>(draws_sigma - 1);
    est.se = std::sqrt(var / static_cast<double>(draws_sigma));
  }
  return est;
}

/// Generic family: `sample` returns the n per-sample values of one random member.
inline MonteCarloEstimate mc_rademacher(const std::function<Vector(Rng&)>& sample, std::size_t n,
                                        std::size_t draws_sigma, std::size_t draws_function, std::uint64_t seed) {
  detail::require(draws_function >= 1, "Monte-Carlo estimation needs at least one function draw");
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Matrix F(static_cast<Eigen::Index>(draws_function), static_cast<Eigen::Index>(n));
  for (Eigen::Index f = 0; f < F.rows(); ++f) {
    const Vector v = sample(rng);
    detail::require(static_cast<std::size_t>(v.size()) == n, "sampled function returned the wrong number of values");
    F.row(f) = v.transpose();
  }
  return mc_rademacher_from_values(F, draws_sigma, seed);
}

struct LinearCaps {
  double M2 = 1.0;
  double Mq = 1.0;
};

/// Linear family with ||theta||_2 <= M2, ||theta||_q <= Mq and b = 0, scored on Psi f.
inline MonteCarloEstimate mc_rademacher(const LinearCaps& caps, const Dataset& data, const PerturbationBall& ball,
                                        std::size_t draws_sigma, std::size_t draws_function, std::uint64_t seed) {
  const auto& y = data.binary();
  Vector ys(static_cast<Eigen::Index>(data.n()));
  for (std::size_t i = 0; i < data.n(); ++i) ys(static_cast<Eigen::Index>(i)) = y[i];
  const Matrix& X = data.features();
  const auto sample = [&](Rng& rng) -> Vector {
    const Vector g = random_gaussian(data.m(), rng);
    const double n2 = g.norm(), nq = lp_norm(g, ball.q());
    if (n2 == 0.0) return Vector::Zero(static_cast<Eigen::Index>(data.n()));
    const Vector theta = g * std::min(caps.M2 / n2, caps.Mq / nq);
    return X * theta - ys * (ball.epsilon() * lp_norm(theta, ball.q()));
  };
  return mc_rademacher(sample, data.n(), draws_sigma, draws_function, seed);
}

struct NetCaps {
  Architecture arch;
  std::vector<double> alpha_j;  // caps on ||A^(j)||_inf, j = 1..d+1
  double alpha_1F = 1.0;
  double alpha_1q = 1.0;
};

/// Random network rescaled so every cap in `caps` holds.
inline NeuralNet sample_net_in_caps(const NetCaps& caps, std::size_t input_dim, NormExp q, Rng& rng) {
  caps.arch.validate();
  detail::require(caps.alpha_j.size() == caps.arch.hidden_widths.size() + 1, "need one alpha cap per layer");
  NeuralNet net = random_net(input_dim, caps.arch.hidden_widths, 1, caps.arch.activations, rng);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Matrix& A = net.layers[k];
    double scale = caps.alpha_j[k] / operator_inf_norm(A);
    if (k == 0) {
      scale = std::min(scale, caps.alpha_1F / A.norm());
      double row_q = 0.0;
      for (Eigen::Index j = 0; j < A.rows(); ++j) row_q = std::max(row_q, lp_norm(A.row(j).transpose(), q));
      scale = std::min(scale, caps.alpha_1q / row_q);
    }
    A *= scale;
  }
  return net;
}

/// Network family inside the caps, scored on Tf(x_i, y_i).
inline MonteCarloEstimate mc_rademacher(const NetCaps& caps, const Dataset& data, const PerturbationBall& ball,
                                        std::size_t draws_sigma, std::size_t draws_function, std::uint64_t seed) {
  const auto& y = data.binary();
  const Matrix X = data.features().transpose();
  const auto sample = [&](Rng& rng) -> Vector {
    const NeuralNet net = sample_net_in_caps(caps, data.m(), ball.q(), rng);
    const auto s = tree_propagate(net, ball, X);
    Vector v(static_cast<Eigen::Index>(data.n()));
    for (std::size_t i = 0; i < data.n(); ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      v(c) = y[i] > 0 ? s.out_lo(0, c) : s.out_hi(0, c);
    }
    return v;
  };
  return mc_rademacher(sample, data.n(), draws_sigma, draws_function, seed);
}

/// Capacity of the family described by `caps` on `data` (the quantity the closed form uses).
inline CapacityNet capacity_from_caps(const NetCaps& caps, const Dataset& data) {
  CapacityNet cap;
  cap.alpha_j = caps.alpha_j;
  cap.alpha = std::accumulate(caps.alpha_j.begin(), caps.alpha_j.end(), 1.0, std::multiplies<>());
  cap.alpha_1F = caps.alpha_1F;
  cap.alpha_1q = caps.alpha_1q;
  cap.R = data.max_row_norm();
  return cap;
}

// ---------------------------------------------------------------------------
// SDP certificates
// ---------------------------------------------------------------------------

/// Q(v, W) on index blocks {0} (constant), {1..m} (inputs), {m+1..m+J} (hidden).
/// Constraint i of the program is P_ii <= 1, so sum_i y_i W^(i) = diag(y).
struct SdpInstance {
  Matrix Q;
  std::size_t m = 0;
  std::size_t J = 0;
  std::size_t size() const { return 1 + m + J; }
};

inline SdpInstance build_Q(const Vector& v, const Matrix& W) {
  detail::require(W.rows() == v.size() && W.rows() >= 1 && W.cols() >= 1, "W must be J x m with v of length J");
  SdpInstance inst;
  inst.m = static_cast<std::size_t>(W.cols());
  inst.J = static_cast<std::size_t>(W.rows());
  const auto m = W.cols(), J = W.rows(), N = 1 + m + J;
  inst.Q = Matrix::Zero(N, N);
  // Left block (constant row followed by inputs) against hidden units.
  Matrix B(1 + m, J);
  B.row(0) = (W.rowwise().sum().cwiseProduct(v)).transpose();
  B.bottomRows(m) = W.transpose() * v.asDiagonal();
  inst.Q.topRightCorner(1 + m, J) = B;
  inst.Q.bottomLeftCorner(J, 1 + m) = B.transpose();
  return inst;
}

struct SdpCertificate {
  Matrix P;  // primal, PSD with diag <= 1
  Vector y;  // dual multipliers, nonnegative
  Matrix L;  // diag(y) - z Q
  int z = 1;
};

struct CertificateCheck {
  bool certified = false;
  double primal = 0.0;
  double dual = 0.0;
  std::vector<std::string> violations;
};

/// Certificate for a bipartite Q whose off-diagonal block has one sign after
/// multiplying by z: P = 1 1^T (or the +-1 split vector), y = absolute row sums.
inline SdpCertificate bipartite_certificate(const SdpInstance& inst, int z) {
  detail::require(z == 1 || z == -1, "z must be +1 or -1");
  const auto left = static_cast<Eigen::Index>(1 + inst.m);
  const auto N = static_cast<Eigen::Index>(inst.size());
  const Matrix B = z * inst.Q.topRightCorner(left, static_cast<Eigen::Index>(inst.J));
  const bool nonneg = (B.array() >= 0.0).all();
  const bool nonpos = (B.array() <= 0.0).all();
  detail::require(nonneg || nonpos, "closed-form certificate needs a sign-uniform coupling block");
  Vector u = Vector::Ones(N);
  if (!nonneg) u.head(left).setConstant(-1.0);
  SdpCertificate c;
  c.z = z;
  c.P = u * u.transpose();
  c.y = inst.Q.cwiseAbs().rowwise().sum();
  c.L = Matrix(c.y.asDiagonal()) - z * inst.Q;
  return c;
}

/// Certificate for s Q from a certificate for Q.
inline SdpCertificate rescale_certificate(const SdpCertificate& c, double s) {
  SdpCertificate out = c;
  out.y = c.y * std::abs(s);
  out.L = c.L * std::abs(s);
  out.z = s < 0 ? -c.z : c.z;
  return out;
}

inline CertificateCheck sdp_certificate_check(const SdpInstance& inst, const SdpCertificate& cert,
                                              double tol = 1e-9) {
  CertificateCheck out;
  const auto N = static_cast<Eigen::Index>(inst.size());
  const auto fail = [&](const std::string& what) { out.violations.push_back(what); };
  if (cert.P.rows() != N || cert.P.cols() != N || cert.L.rows() != N || cert.L.cols() != N || cert.y.size() != N) {
    fail("certificate shapes do not match the instance");
    return out;
  }
  if (cert.z != 1 && cert.z != -1) fail("z must be +1 or -1");
  // Primal feasibility.
  if ((cert.P - cert.P.transpose()).cwiseAbs().maxCoeff() > tol) fail("P is not symmetric");
  for (Eigen::Index i = 0; i < N; ++i) {
    if (cert.P(i, i) > 1.0 + tol) fail("diag(P)[" + std::to_string(i) + "] exceeds 1");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (cert.P + cert.P.transpose()), Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -tol * std::max(1.0, cert.P.cwiseAbs().maxCoeff())) fail("P is not PSD");
  out.primal = (cert.z * inst.Q).cwiseProduct(cert.P).sum();
  // Dual feasibility.
  for (Eigen::Index i = 0; i < N; ++i) {
    if (cert.y(i) < -tol) fail("y[" + std::to_string(i) + "] is negative");
  }
  const Matrix expected_L = Matrix(cert.y.asDiagonal()) - cert.z * inst.Q;
  if ((cert.L - expected_L).cwiseAbs().maxCoeff() > tol) fail("L differs from diag(y) - zQ");
  for (Eigen::Index i = 0; i < N; ++i) {
    const double off = cert.L.row(i).cwiseAbs().sum() - std::abs(cert.L(i, i));
    if (cert.L(i, i) < -tol) fail("L has a negative diagonal entry at " + std::to_string(i));
    if (cert.L(i, i) + tol < off) fail("L is not diagonally dominant at row " + std::to_string(i));
  }
  out.dual = cert.y.sum();
  if (std::abs(out.primal - out.dual) > tol * std::max(1.0, std::abs(out.dual))) {
    fail("primal value " + std::to_string(out.primal) + " differs from dual value " + std::to_string(out.dual));
  }
  out.certified = out.violations.empty();
  return out;
}

/// max over z and feasible P of <z Q(v, W), P>, certified in closed form.
inline double sdp_value(const Vector& v, const Matrix& W) {
  const auto inst = build_Q(v, W);
  double best = -std::numeric_limits<double>::infinity();
  for (int z : {1, -1}) {
    const auto check = sdp_certificate_check(inst, bipartite_certificate(inst, z));
    detail::require(check.certified, "closed-form SDP certificate was rejected: " +
                                         (check.violations.empty() ? std::string() : check.violations.front()));
    best = std::max(best, check.dual);
  }
  return best;
}

/// The one-hidden-layer ReLU network with first layer [[1,2,3],[10,20,30]]
/// and output rows (1,1), (-a,-a), (-b,-b).
inline NeuralNet comparison_network(double a, double b) {
  NeuralNet net;
  Matrix A1(2, 3);
  A1 << 1, 2, 3, 10, 20, 30;
  Matrix A2(3, 2);
  A2 << 1, 1, -a, -a, -b, -b;
  net.layers = {A1, A2};
  net.activations = {Activation::ReLU};
  return net;
}

struct SdpMode {
  enum class Kind { MaxOverK, ClassK } kind = Kind::MaxOverK;
  std::size_t k = 0;  // output row used in ClassK mode (0-based)

  static SdpMode max_over_k() { return {}; }
  static SdpMode class_k(std::size_t k) { return {Kind::ClassK, k}; }
};

struct DemoResult {
  double margin_f = 0.0;   // m_f(z) for x = (c, c, c), class 0
  double margin_tf = 0.0;  // margin of Tf under the l_inf ball
  double sdp_term = 0.0;   // SDP value entering the relaxation loss
  double loss_hat = 0.0;   // phi_rho(m_f - eps/2 * sdp_term)
  double loss_tf = 0.0;    // phi_rho(margin of Tf)
  std::vector<double> sdp_per_class;
};

/// Evaluates both adversarial surrogates on the comparison network at
/// x = (c, c, c) with true class 0 and an l_inf budget eps.
inline DemoResult incomparability_demo(double a, double b, double c, double eps, double rho, SdpMode mode) {
  detail::require(a > 0 && b > 0 && c > 0 && eps > 0 && rho > 0, "demo parameters must be positive");
  detail::require(eps < c, "demo needs eps < c");
  const NeuralNet net = comparison_network(a, b);
  const Vector x = Vector::Constant(3, c);
  const PerturbationBall ball(NormExp::Inf, eps);
  DemoResult r;
  r.margin_f = multiclass_margin(forward(net, x), 0).margin;
  r.margin_tf = multiclass_margin(tree_transform_multiclass(net, ball, x, 0), 0).margin;
  const Matrix& A1 = net.layers[0];
  for (Eigen::Index k = 0; k < net.layers[1].rows(); ++k) {
    r.sdp_per_class.push_back(sdp_value(net.layers[1].row(k).transpose(), A1));
  }
  if (mode.kind == SdpMode::Kind::MaxOverK) {
    r.sdp_term = *std::max_element(r.sdp_per_class.begin(), r.sdp_per_class.end());
  } else {
    detail::require(mode.k < r.sdp_per_class.size(), "class index outside the network's output rows");
    r.sdp_term = r.sdp_per_class[mode.k];
  }
  r.loss_hat = phi_rho(r.margin_f - 0.5 * eps * r.sdp_term, rho);
  r.loss_tf = phi_rho(r.margin_tf, rho);
  return r;
}

// ---------------------------------------------------------------------------
// Property suites
// ---------------------------------------------------------------------------

struct CheckRow {
  std::string name;
  std::size_t instances = 0;
  double max_violation = 0.0;
  bool pass = true;
};

namespace detail {

inline NormExp random_norm(Rng& rng) {
  static constexpr NormExp all[] = {NormExp::One, NormExp::Two, NormExp::Inf};
  return all[std::uniform_int_distribution<int>(0, 2)(rng)];
}

inline Dataset random_binary_dataset(std::size_t n, std::size_t m, Rng& rng) {
  BinaryLabels y;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < n; ++i) y.values.push_back(coin(rng) ? 1 : -1);
  return Dataset(random_gaussian(n, m, rng), std::move(y));
}

inline Activation random_activation(Rng& rng) {
  return std::bernoulli_distribution(0.5)(rng) ? Activation::ReLU : Activation::Tanh;
}

inline NeuralNet random_small_net(Rng& rng, std::size_t m, std::size_t max_depth, std::size_t max_width,
                                  std::size_t out) {
  std::uniform_int_distribution<std::size_t> depth_d(1, max_depth), width_d(1, max_width);
  const std::size_t d = depth_d(rng);
  std::vector<std::size_t> hidden;
  std::vector<Activation> acts;
  for (std::size_t k = 0; k < d; ++k) {
    hidden.push_back(width_d(rng));
    acts.push_back(random_activation(rng));
  }
  return random_net(m, hidden, out, acts, rng);
}

}  // namespace detail

inline std::vector<CheckRow> linear_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckRow> rows;
  std::uniform_int_distribution<std::size_t> dim(1, 10);
  std::uniform_real_distribution<double> eps_d(0.0, 1.0);

  CheckRow exact{"linear.transform_equals_corner_max", 0, 0.0, true};
  for (int t = 0; t < 200; ++t) {
    const auto m = dim(rng);
    const auto model = random_linear_model(m, rng);
    const PerturbationBall ball(NormExp::Inf, eps_d(rng));
    const Vector x = random_gaussian(m, rng);
    const int y = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
    for (const LossSpec& loss : {LossSpec{loss::Hinge{}}, LossSpec{loss::CrossEntropy{}}}) {
      const double via_transform = binary_loss(loss, sup_transform_linear(model, ball, x, y), y);
      const double via_corners = corner_adversary_linear(model, ball, x, y, loss).achieved_loss;
      exact.max_violation = std::max(exact.max_violation, std::abs(via_transform - via_corners));
      ++exact.instances;
    }
  }
  exact.pass = exact.max_violation <= 1e-9;
  rows.push_back(exact);

  CheckRow dom{"linear.multiclass_domination", 0, 0.0, true};
  for (int t = 0; t < 100; ++t) {
    const auto m = dim(rng);
    const std::size_t K = 2 + t % 4;
    MulticlassLinearModel model{random_gaussian(K, m, rng), random_gaussian(K, rng)};
    const PerturbationBall ball(detail::random_norm(rng), eps_d(rng));
    const Vector x = random_gaussian(m, rng);
    const std::size_t cls = static_cast<std::size_t>(t) % K;
    const Vector psi = sup_transform_multiclass(model, ball, x, cls);
    for (int s = 0; s < 50; ++s) {
      const Vector f = model.predict(x + sample_in_ball(ball, m, rng));
      for (Eigen::Index k = 0; k < f.size(); ++k) {
        // Class cls must not drop below psi, every other class must not exceed it.
        const double v = static_cast<std::size_t>(k) == cls ? psi(k) - f(k) : f(k) - psi(k);
        dom.max_violation = std::max(dom.max_violation, v);
      }
      ++dom.instances;
    }
  }
  dom.pass = dom.max_violation <= 1e-9;
  rows.push_back(dom);

  CheckRow sandwich{"linear.empirical_difference_sandwich", 0, 0.0, true};
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + t % 20, m = dim(rng);
    const auto data = detail::random_binary_dataset(n, m, rng);
    const auto model = random_linear_model(m, rng);
    const PerturbationBall ball(detail::random_norm(rng), eps_d(rng));
    const double slack = ball.epsilon() * ball.dual_norm(model.theta);
    double lower = 0, mid = 0, upper = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = data.binary()[i];
      const double f = model.predict(data.x(i));
      const double psi = sup_transform_linear(model, ball, data.x(i), y);
      lower += slack * (hinge_loss(f, y) > 0 ? 1.0 : 0.0);
      mid += hinge_loss(psi, y) - hinge_loss(f, y);
      upper += slack * (hinge_loss(psi, y) > 0 ? 1.0 : 0.0);
    }
    sandwich.max_violation = std::max({sandwich.max_violation, (lower - mid) / n, (mid - upper) / n});
    ++sandwich.instances;
  }
  sandwich.pass = sandwich.max_violation <= 1e-9;
  rows.push_back(sandwich);

  CheckRow convex{"linear.objective_convexity", 0, 0.0, true};
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + t % 15, m = dim(rng);
    const auto data = detail::random_binary_dataset(n, m, rng);
    const PerturbationBall ball(detail::random_norm(rng), eps_d(rng));
    const auto A = random_linear_model(m, rng), B = random_linear_model(m, rng);
    const double lam = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const LinearModel mix{lam * A.theta + (1 - lam) * B.theta, lam * A.b + (1 - lam) * B.b};
    const double gap = convex_objective(mix, data, ball) -
                       (lam * convex_objective(A, data, ball) + (1 - lam) * convex_objective(B, data, ball));
    convex.max_violation = std::max(convex.max_violation, gap);
    ++convex.instances;
  }
  convex.pass = convex.max_violation <= 1e-9;
  rows.push_back(convex);
  return rows;
}

inline std::vector<CheckRow> tree_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckRow> rows;
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  std::uniform_real_distribution<double> eps_d(0.0, 1.0);

  CheckRow equiv{"tree.dp_equals_path_enumeration", 0, 0.0, true};
  CheckRow order{"tree.envelope_ordering", 0, 0.0, true};
  for (int t = 0; t < 300; ++t) {
    const auto m = dim(rng);
    const std::size_t out = 1 + t % 3;
    const auto net = detail::random_small_net(rng, m, 3, 4, out);
    const PerturbationBall ball(detail::random_norm(rng), eps_d(rng));
    const Vector x = random_gaussian(m, rng);
    Vector labels(static_cast<Eigen::Index>(out));
    for (Eigen::Index k = 0; k < labels.size(); ++k) labels(k) = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
    const Vector dp = tree_transform_eval(net, ball, x, labels);
    const Vector naive = tree_transform_naive(net, ball, x, labels);
    equiv.max_violation = std::max(equiv.max_violation, (dp - naive).cwiseAbs().maxCoeff());
    ++equiv.instances;
    const Vector f = forward(net, x);
    const Vector lo = tree_transform_eval(net, ball, x, Vector::Ones(labels.size()));
    const Vector hi = tree_transform_eval(net, ball, x, -Vector::Ones(labels.size()));
    order.max_violation = std::max({order.max_violation, (lo - f).maxCoeff(), (f - hi).maxCoeff()});
    ++order.instances;
  }
  equiv.pass = equiv.max_violation <= 1e-9;
  order.pass = order.max_violation <= 1e-9;
  rows.push_back(equiv);
  rows.push_back(order);

  CheckRow dom{"tree.domination", 0, 0.0, true};
  for (int t = 0; t < 100; ++t) {
    const auto m = dim(rng);
    const auto net = detail::random_small_net(rng, m, 3, 8, 1);
    const PerturbationBall ball(detail::random_norm(rng), eps_d(rng));
    const Vector x = random_gaussian(m, rng);
    const int y = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
    const double tf = tree_transform_binary(net, ball, x, y);
    const double bound = binary_loss(loss::Hinge{}, tf, y);
    for (int s = 0; s < 100; ++s) {
      const double v = binary_loss(loss::Hinge{}, forward(net, x + sample_in_ball(ball, m, rng))(0), y);
      dom.max_violation = std::max(dom.max_violation, v - bound);
    }
    PgdOptions pgd;
    pgd.steps = 20;
    pgd.restarts = 3;
    pgd.seed = seed + static_cast<std::uint64_t>(t);
    const auto atk = pgd_attack(net, ball, x, BinaryLabel{y}, loss::Hinge{}, pgd);
    dom.max_violation = std::max(dom.max_violation, atk.achieved_loss - bound);
    ++dom.instances;
  }
  dom.pass = dom.max_violation <= 1e-9;
  rows.push_back(dom);

  CheckRow xe{"tree.cross_entropy_difference_bound", 0, 0.0, true};
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + t % 10, m = dim(rng);
    const auto data = detail::random_binary_dataset(n, m, rng);
    const auto net = detail::random_small_net(rng, m, 3, 5, 1);
    const PerturbationBall ball(detail::random_norm(rng), eps_d(rng));
    const auto cap = net_capacity(net, ball.q(), data);
    double diff = 0.0, slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = data.binary()[i];
      const double tf = tree_transform_binary(net, ball, data.x(i), y);
      const double f = forward(net, data.x(i))(0);
      diff += xe_value_and_derivative(tf, y).value - xe_value_and_derivative(f, y).value;
      slope += std::abs(xe_value_and_derivative(tf, y).derivative);
    }
    const double rhs = ball.epsilon() * cap.alpha_1q * cap.tail_product() * slope;
    xe.max_violation = std::max(xe.max_violation, (diff - rhs) / n);
    ++xe.instances;
  }
  xe.pass = xe.max_violation <= 1e-9;
  rows.push_back(xe);

  CheckRow slice{"tree.multiclass_matches_slices", 0, 0.0, true};
  for (int t = 0; t < 100; ++t) {
    const auto m = dim(rng);
    const std::size_t K = 2 + t % 3;
    const auto net = detail::random_small_net(rng, m, 3, 5, K);
    const PerturbationBall ball(detail::random_norm(rng), eps_d(rng));
    const Vector x = random_gaussian(m, rng);
    const std::size_t cls = static_cast<std::size_t>(t) % K;
    const Vector tf = tree_transform_multiclass(net, ball, x, cls);
    for (std::size_t k = 0; k < K; ++k) {
      NeuralNet sliced = net;
      sliced.layers.back() = net.layers.back().row(static_cast<Eigen::Index>(k));
      const double v = tree_transform_binary(sliced, ball, x, k == cls ? 1 : -1);
      slice.max_violation = std::max(slice.max_violation, std::abs(v - tf(static_cast<Eigen::Index>(k))));
    }
    ++slice.instances;
  }
  slice.pass = slice.max_violation <= 1e-9;
  rows.push_back(slice);
  return rows;
}

inline std::vector<CheckRow> sdp_suite() {
  std::vector<CheckRow> rows;
  const NeuralNet net = comparison_network(0.5, 0.6);
  const Matrix& A1 = net.layers[0];
  const double expected[] = {264.0, 132.0, 158.4};
  const char* names[] = {"sdp.value_row1", "sdp.value_row2", "sdp.value_row3"};
  for (int k = 0; k < 3; ++k) {
    const auto inst = build_Q(net.layers[1].row(k).transpose(), A1);
    CheckRow row{names[k], 0, 0.0, true};
    for (int z : {1, -1}) {
      const auto cert = bipartite_certificate(inst, z);
      const auto check = sdp_certificate_check(inst, cert);
      row.pass = row.pass && check.certified;
      row.max_violation = std::max(row.max_violation, std::abs(check.dual - expected[k]));
      ++row.instances;
    }
    row.pass = row.pass && row.max_violation <= 1e-9;
    rows.push_back(row);
  }

  CheckRow scaling{"sdp.scaling", 0, 0.0, true};
  const auto base = build_Q(net.layers[1].row(0).transpose(), A1);
  const auto base_cert = bipartite_certificate(base, 1);
  for (double s : {-3.0, -0.5, 0.25, 2.0, 7.5}) {
    SdpInstance scaled = base;
    scaled.Q *= s;
    const auto check = sdp_certificate_check(scaled, rescale_certificate(base_cert, s));
    scaling.pass = scaling.pass && check.certified;
    scaling.max_violation = std::max(scaling.max_violation, std::abs(check.dual - 264.0 * std::abs(s)));
    ++scaling.instances;
  }
  scaling.pass = scaling.pass && scaling.max_violation <= 1e-9;
  rows.push_back(scaling);

  CheckRow demo{"sdp.comparison_direction1", 1, 0.0, true};
  const auto d1 = incomparability_demo(0.5, 10.0, 2.0, 1.0, 1.0, SdpMode::max_over_k());
  demo.max_violation = std::max(std::abs(d1.loss_tf - 0.0), std::abs(d1.loss_hat - 1.0));
  demo.pass = demo.max_violation == 0.0;
  rows.push_back(demo);
  return rows;
}

/// Runs "linear", "tree", "sdp" or "all".
inline std::vector<CheckRow> run_suite(const std::string& suite, std::uint64_t seed) {
  std::vector<CheckRow> rows;
  const auto append = [&](std::vector<CheckRow> more) { rows.insert(rows.end(), more.begin(), more.end()); };
  if (suite == "linear" || suite == "all") append(linear_suite(seed));
  if (suite == "tree" || suite == "all") append(tree_suite(seed + 1));
  if (suite == "sdp" || suite == "all") append(sdp_suite());
  detail::require(!rows.empty(), "unknown suite '" + suite + "': expected all, linear, tree or sdp");
  return rows;
}

}  // namespace advcert

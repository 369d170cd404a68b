#include "advcert/core.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace advcert;

namespace {

constexpr double kTol = 1e-9;

LossSpec binary_losses[] = {loss::Hinge{}, loss::HingeTruncated{}, loss::ZeroOne{}, loss::HingeIndicator{},
                            loss::CrossEntropy{}};

}  // namespace

TEST(DualExponent, Conventions) {
  EXPECT_EQ(dual_exponent(NormExp::Two), NormExp::Two);
  EXPECT_EQ(dual_exponent(NormExp::Inf), NormExp::One);
  EXPECT_EQ(dual_exponent(NormExp::One), NormExp::Inf);
}

TEST(DualExponent, RejectsUnsupportedExponents) {
  EXPECT_THROW(norm_exp_from_value(3.0), ValidationError);
  EXPECT_THROW(norm_exp_from_value(0.5), ValidationError);
  EXPECT_THROW(parse_norm_exp("1.5"), ValidationError);
  EXPECT_EQ(norm_exp_from_value(std::numeric_limits<double>::infinity()), NormExp::Inf);
  EXPECT_EQ(parse_norm_exp("inf"), NormExp::Inf);
}

TEST(PerturbationBall, RadiusValidationAndDegenerateBall) {
  EXPECT_THROW(PerturbationBall(NormExp::Two, -0.1), ValidationError);
  EXPECT_THROW(PerturbationBall(NormExp::Two, std::nan("")), ValidationError);
  PerturbationBall zero(NormExp::Inf, 0.0);
  EXPECT_TRUE(zero.contains(Vector::Zero(3)));
  EXPECT_FALSE(zero.contains(Vector::Constant(3, 1e-6)));
  EXPECT_EQ(zero.q(), NormExp::One);
}

TEST(Norms, SubgradientsAreDeterministicAndValid) {
  Vector v(4);
  v << 0.0, -3.0, 3.0, 1.0;
  EXPECT_EQ(lp_norm_subgradient(v, NormExp::One), (Vector(4) << 0, -1, 1, 1).finished());
  EXPECT_EQ(lp_norm_subgradient(v, NormExp::Inf), (Vector(4) << 0, -1, 0, 0).finished());
  EXPECT_EQ(lp_norm_subgradient(Vector::Zero(3), NormExp::Two), Vector::Zero(3));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int t = 0; t < 200; ++t) {
    Vector a(5), b(5);
    for (int i = 0; i < 5; ++i) {
      a(i) = g(rng);
      b(i) = g(rng);
    }
    for (NormExp q : {NormExp::One, NormExp::Two, NormExp::Inf}) {
      // Subgradient inequality ||b|| >= ||a|| + s.(b - a).
      const Vector s = lp_norm_subgradient(a, q);
      EXPECT_GE(lp_norm(b, q) + kTol, lp_norm(a, q) + s.dot(b - a));
    }
  }
}

TEST(Dataset, ValidatesShapesAndLabels) {
  Matrix X(2, 1);
  X << 1, -1;
  EXPECT_NO_THROW(Dataset(X, BinaryLabels{{1, -1}}));
  EXPECT_THROW(Dataset(X, BinaryLabels{{1, 0}}), ValidationError);
  EXPECT_THROW(Dataset(X, BinaryLabels{{1}}), ValidationError);
  EXPECT_THROW(Dataset(X, ClassLabels{{0, 3}, 3}), ValidationError);
  EXPECT_THROW(Dataset(X, ClassLabels{{0, 0}, 1}), ValidationError);
  EXPECT_THROW(Dataset(X, RealLabels{{1.0, std::nan("")}}), ValidationError);
  Matrix bad = X;
  bad(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(Dataset(bad, BinaryLabels{{1, -1}}), ValidationError);
  EXPECT_THROW(Dataset(Matrix(0, 1), BinaryLabels{}), ValidationError);
}

TEST(Dataset, OneHotHasExactlyOnePositiveEntry) {
  for (std::size_t K = 2; K < 6; ++K) {
    for (std::size_t c = 0; c < K; ++c) {
      const Vector y = one_hot_signs(c, K);
      EXPECT_EQ((y.array() > 0).count(), 1);
      EXPECT_EQ(y(static_cast<Eigen::Index>(c)), 1.0);
    }
  }
}

TEST(LossEval, Examples) {
  EXPECT_DOUBLE_EQ(loss_eval(loss::Hinge{}, 0.5, BinaryLabel{1}), 0.5);
  Vector scores(3);
  scores << 2, 0.5, -1;
  EXPECT_DOUBLE_EQ(loss_eval(loss::Margin{1.0}, scores, ClassLabel{0}), 0.0);
  EXPECT_DOUBLE_EQ(loss_eval(loss::RegressionPower{2.0, 1.0}, 4.0, RealLabel{1.0}), 1.0);
  EXPECT_DOUBLE_EQ(loss_eval(loss::RegressionPower{2.0, 5.0}, 4.0, RealLabel{1.0}), 9.0);
  EXPECT_DOUBLE_EQ(loss_eval(loss::ZeroOne{}, 0.0, BinaryLabel{1}), 1.0);
  EXPECT_DOUBLE_EQ(loss_eval(loss::HingeIndicator{}, 0.99, BinaryLabel{1}), 1.0);
  EXPECT_DOUBLE_EQ(loss_eval(loss::HingeIndicator{}, 1.0, BinaryLabel{1}), 0.0);
}

TEST(LossEval, RejectsMismatchedShapesAndNonFinite) {
  EXPECT_THROW(loss_eval(loss::Hinge{}, Vector::Zero(2), BinaryLabel{1}), ValidationError);
  EXPECT_THROW(loss_eval(loss::Margin{1.0}, 0.5, ClassLabel{0}), ValidationError);
  EXPECT_THROW(loss_eval(loss::Hinge{}, 0.5, RealLabel{1.0}), ValidationError);
  EXPECT_THROW(loss_eval(loss::Hinge{}, std::nan(""), BinaryLabel{1}), ValidationError);
  EXPECT_THROW(loss_eval(loss::Margin{0.0}, Vector::Zero(2), ClassLabel{0}), ValidationError);
  EXPECT_THROW(loss_eval(loss::RegressionPower{2.0, -1.0}, 0.0, RealLabel{0.0}), ValidationError);
}

TEST(SoftmaxDelta, ValuesAndSaturation) {
  EXPECT_EQ(softmax_delta(0.0), 0.0);
  EXPECT_NEAR(softmax_delta(std::log(3.0)), 0.5, 1e-15);
  EXPECT_NEAR(softmax_delta(1000.0), 1.0, 1e-15);
  EXPECT_NEAR(softmax_delta(-1000.0), -1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(softmax_delta(1e308)));
  for (double a = -5; a < 5; a += 0.37) {
    EXPECT_NEAR(softmax_delta(-a), -softmax_delta(a), 1e-15);
    EXPECT_LT(softmax_delta(a), softmax_delta(a + 0.1));
  }
}

TEST(CrossEntropy, ValuesAndDerivatives) {
  auto v = xe_value_and_derivative(0.0, 1);
  EXPECT_NEAR(v.value, std::log(2.0), 1e-15);
  EXPECT_NEAR(v.derivative, -0.5, 1e-15);
  v = xe_value_and_derivative(0.0, -1);
  EXPECT_NEAR(v.value, std::log(2.0), 1e-15);
  EXPECT_NEAR(v.derivative, 0.5, 1e-15);

  // Frozen reference values: ln 4 and 3/4, and a central difference of g_{-1}.
  v = xe_value_and_derivative(std::log(3.0), -1);
  EXPECT_NEAR(v.value, 1.3862943611198906, 1e-15);
  EXPECT_NEAR(v.derivative, 0.75, 1e-15);
  const double h = 1e-6, a = std::log(3.0);
  const double fd = (std::log1p(std::exp(a + h)) - std::log1p(std::exp(a - h))) / (2 * h);
  EXPECT_NEAR(v.derivative, fd, 1e-8);

  // Large arguments stay finite.
  EXPECT_NEAR(xe_value_and_derivative(800.0, -1).value, 800.0, 1e-9);
  EXPECT_NEAR(xe_value_and_derivative(-800.0, 1).value, 800.0, 1e-9);
  EXPECT_NEAR(xe_value_and_derivative(800.0, 1).value, 0.0, 1e-12);
}

TEST(Properties, BinaryLossesAreMonotone) {
  for (const auto& loss : binary_losses) {
    for (int y : {1, -1}) {
      double prev = std::numeric_limits<double>::infinity();
      // Sorted grid in y * prediction.
      for (double t = -6.0; t <= 6.0; t += 0.01) {
        const double value = binary_loss(loss, y * t, y);
        EXPECT_LE(value, prev + kTol) << describe(loss) << " y=" << y << " t=" << t;
        prev = value;
      }
    }
  }
}

TEST(Properties, SurrogatesDominateIndicators) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int t = 0; t < 2000; ++t) {
    const double a = g(rng);
    const int y = t % 2 ? 1 : -1;
    EXPECT_LE(binary_loss(loss::ZeroOne{}, a, y), binary_loss(loss::Hinge{}, a, y));
    Vector s(4);
    for (int k = 0; k < 4; ++k) s(k) = g(rng);
    const std::size_t cls = static_cast<std::size_t>(t % 4);
    const double mis = multiclass_margin(s, cls).margin <= 0 ? 1.0 : 0.0;
    EXPECT_LE(mis, margin_loss(s, cls, 0.7));
  }
}

TEST(Properties, MarginLossIsCoordinatewiseDecreasing) {
  // a precedes b for class c when a_c >= b_c and a_k <= b_k elsewhere.
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  std::exponential_distribution<double> e(1.0);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t K = 2 + t % 4;
    const std::size_t cls = static_cast<std::size_t>(t) % K;
    Vector b(static_cast<Eigen::Index>(K)), a(static_cast<Eigen::Index>(K));
    for (Eigen::Index k = 0; k < b.size(); ++k) {
      b(k) = g(rng);
      a(k) = static_cast<std::size_t>(k) == cls ? b(k) + e(rng) : b(k) - e(rng);
    }
    for (double rho : {0.1, 1.0, 3.0}) EXPECT_LE(margin_loss(a, cls, rho), margin_loss(b, cls, rho) + kTol);
  }
}

TEST(Properties, RegressionLossDecomposes) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (int t = 0; t < 2000; ++t) {
    const double a = g(rng), y = g(rng), r = u(rng), B = u(rng);
    EXPECT_NEAR(regression_truncated(a, y, r, B),
                std::max(regression_plus(a, y, r, B), regression_minus(a, y, r, B)), 1e-12);
    // With equal envelope ends the two-argument loss is the plain loss.
    EXPECT_NEAR(regression_envelope_loss(a, a, y, r, B), regression_truncated(a, y, r, B), 1e-12);
  }
}

TEST(Properties, CrossEntropyDerivativeBoundsTheDifference) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g(0.0, 4.0);
  for (int t = 0; t < 5000; ++t) {
    const double a = g(rng), b = g(rng);
    const int y = t % 2 ? 1 : -1;
    const auto va = xe_value_and_derivative(a, y), vb = xe_value_and_derivative(b, y);
    EXPECT_LE(std::abs(va.derivative), 1.0);
    // Convexity: the value at b exceeds the value at a by at most |g'(b)| |b - a|.
    EXPECT_LE(vb.value - va.value, std::abs(vb.derivative) * std::abs(b - a) + kTol);
  }
}

TEST(Properties, CrossEntropyBoundNeedsDerivativeAtTheLargerPoint) {
  // With the derivative taken at the point of smaller loss the inequality fails:
  // g_{+1} is nearly flat at b = 10 but a = -10 has loss about 10.
  const auto va = xe_value_and_derivative(-10.0, 1), vb = xe_value_and_derivative(10.0, 1);
  EXPECT_GT(va.value - vb.value, std::abs(vb.derivative) * 20.0);
}

TEST(Losses, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> g(0.0, 2.0);
  const double h = 1e-6;
  for (int t = 0; t < 500; ++t) {
    const double a = g(rng);
    const int y = t % 2 ? 1 : -1;
    for (const LossSpec& loss : {LossSpec{loss::Hinge{}}, LossSpec{loss::HingeTruncated{}}, LossSpec{loss::CrossEntropy{}}}) {
      const double fd = (binary_loss(loss, a + h, y) - binary_loss(loss, a - h, y)) / (2 * h);
      const double hinge = 1.0 - y * a;
      if (std::abs(hinge) < 1e-4 || std::abs(hinge - 1.0) < 1e-4) continue;
      EXPECT_NEAR(binary_loss_derivative(loss, a, y), fd, 1e-6) << describe(loss);
    }
  }
}

TEST(Losses, PhiRhoShape) {
  EXPECT_EQ(phi_rho(-1.0, 2.0), 1.0);
  EXPECT_EQ(phi_rho(0.0, 2.0), 1.0);
  EXPECT_EQ(phi_rho(1.0, 2.0), 0.5);
  EXPECT_EQ(phi_rho(2.0, 2.0), 0.0);
  EXPECT_EQ(phi_rho(5.0, 2.0), 0.0);
}

TEST(Losses, ParseNamesAndRejectUnknown) {
  EXPECT_TRUE(std::holds_alternative<loss::CrossEntropy>(parse_loss("xe")));
  EXPECT_EQ(std::get<loss::Margin>(parse_loss("margin", 0.5)).rho, 0.5);
  EXPECT_THROW(parse_loss("squared"), ValidationError);
  EXPECT_THROW(parse_loss("margin", -1.0), ValidationError);
}

TEST(RademacherDraw, ReproducibleAndBalanced) {
  const auto a = RademacherDraw::generate(10000, 42), b = RademacherDraw::generate(10000, 42);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_NE(a.sigma, RademacherDraw::generate(10000, 43).sigma);
  long sum = 0;
  for (int s : a.sigma) {
    EXPECT_TRUE(s == 1 || s == -1);
    sum += s;
  }
  EXPECT_LT(std::abs(sum), 400);  // 4 standard deviations of a fair +-1 walk.
}

#include "advcert/data.hpp"
#include "advcert/verify.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace advcert;

namespace {

constexpr double kTol = 1e-9;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Matrix comparison_W() { return (Matrix(2, 3) << 1, 2, 3, 10, 20, 30).finished(); }

}  // namespace

TEST(Sampling, PointsStayInsideTheBall) {
  Rng rng(1);
  for (NormExp p : {NormExp::One, NormExp::Two, NormExp::Inf}) {
    const PerturbationBall ball(p, 0.7);
    for (int t = 0; t < 2000; ++t) {
      EXPECT_TRUE(ball.contains(sample_in_ball(ball, 1 + t % 6, rng), 1e-12));
    }
  }
}

TEST(Projection, LandsInBallAndIsIdempotent) {
  Rng rng(2);
  for (NormExp p : {NormExp::One, NormExp::Two, NormExp::Inf}) {
    const PerturbationBall ball(p, 0.5);
    for (int t = 0; t < 500; ++t) {
      const Vector w = random_gaussian(1 + t % 7, rng);
      const Vector pw = project_to_ball(w, ball);
      EXPECT_TRUE(ball.contains(pw, 1e-12));
      EXPECT_LE((project_to_ball(pw, ball) - pw).norm(), 1e-12);
      // Euclidean projection: no sampled ball point is closer to w.
      for (int s = 0; s < 20; ++s) {
        EXPECT_LE((w - pw).norm(), (w - sample_in_ball(ball, static_cast<std::size_t>(w.size()), rng)).norm() + 1e-12);
      }
    }
  }
  const Vector l1 = project_to_ball(vec({3, -1}), PerturbationBall(NormExp::One, 1.0));
  EXPECT_NEAR(l1(0), 1.0, 1e-15);
  EXPECT_NEAR(l1(1), 0.0, 1e-15);
}

TEST(CornerAdversary, Examples) {
  const LinearModel model{vec({1, -2}), 0.0};
  const auto rep = corner_adversary_linear(model, PerturbationBall(NormExp::Inf, 0.25), vec({0, 0}), 1, loss::Hinge{});
  EXPECT_NEAR(rep.achieved_loss, 1.75, 1e-15);
  EXPECT_EQ(rep.best_w, vec({-0.25, 0.25}));
  EXPECT_EQ(rep.iterations, 4u);

  const auto flat = corner_adversary_linear(model, PerturbationBall(NormExp::Inf, 0.0), vec({1, 0}), 1, loss::Hinge{});
  EXPECT_EQ(flat.achieved_loss, 0.0);
}

TEST(CornerAdversary, EqualsTransformedLoss) {
  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const std::size_t m = 1 + t % 10;
    const auto model = random_linear_model(m, rng);
    const PerturbationBall ball(NormExp::Inf, 0.1 * (t % 6));
    const Vector x = random_gaussian(m, rng);
    const int y = t % 2 ? 1 : -1;
    for (const LossSpec& loss : {LossSpec{loss::Hinge{}}, LossSpec{loss::CrossEntropy{}}}) {
      const auto rep = corner_adversary_linear(model, ball, x, y, loss);
      EXPECT_NEAR(rep.achieved_loss, binary_loss(loss, sup_transform_linear(model, ball, x, y), y), kTol);
      EXPECT_TRUE(ball.contains(rep.best_w, 1e-12));
    }
  }
}

TEST(CornerAdversary, RejectsBadInputs) {
  Rng rng(4);
  const auto big = random_linear_model(16, rng);
  EXPECT_THROW(corner_adversary_linear(big, PerturbationBall(NormExp::Inf, 0.1), Vector::Zero(16), 1, loss::Hinge{}),
               ValidationError);
  const auto small = random_linear_model(2, rng);
  EXPECT_THROW(corner_adversary_linear(small, PerturbationBall(NormExp::Two, 0.1), Vector::Zero(2), 1, loss::Hinge{}),
               ValidationError);
}

TEST(Pgd, MatchesCornerOnLinearModels) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + t % 8;
    const auto model = random_linear_model(m, rng);
    const PerturbationBall ball(NormExp::Inf, 0.3);
    const Vector x = random_gaussian(m, rng);
    const int y = t % 2 ? 1 : -1;
    const auto corner = corner_adversary_linear(model, ball, x, y, loss::CrossEntropy{});
    const auto pgd = pgd_attack(model, ball, x, BinaryLabel{y}, loss::CrossEntropy{}, {100, 10, -1, 7});
    EXPECT_NEAR(pgd.achieved_loss, corner.achieved_loss, 1e-6);
    EXPECT_TRUE(ball.contains(pgd.best_w, 1e-12));
  }
}

TEST(Pgd, ZeroRadiusIsUnperturbedLoss) {
  Rng rng(6);
  const auto net = random_net(3, {4}, 1, {Activation::Tanh}, rng);
  const Vector x = random_gaussian(3, rng);
  const auto rep = pgd_attack(net, PerturbationBall(NormExp::Two, 0.0), x, BinaryLabel{1}, loss::Hinge{});
  EXPECT_EQ(rep.achieved_loss, hinge_loss(forward(net, x)(0), 1));
  EXPECT_EQ(rep.best_w, Vector::Zero(3));
}

TEST(Pgd, NeverExceedsTreeTransform) {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    const auto net = detail::random_small_net(rng, 3, 3, 4, 1);
    const PerturbationBall ball(detail::random_norm(rng), 0.4);
    const Vector x = random_gaussian(3, rng);
    const int y = t % 2 ? 1 : -1;
    const auto rep = pgd_attack(net, ball, x, BinaryLabel{y}, loss::Hinge{}, {50, 4, -1, static_cast<std::uint64_t>(t)});
    EXPECT_LE(rep.achieved_loss, hinge_loss(tree_transform_binary(net, ball, x, y), y) + kTol);
    EXPECT_TRUE(ball.contains(rep.best_w, 1e-12));
  }
}

TEST(Pgd, MulticlassMarginLoss) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const auto net = detail::random_small_net(rng, 3, 2, 4, 3);
    const PerturbationBall ball(detail::random_norm(rng), 0.3);
    const Vector x = random_gaussian(3, rng);
    const std::size_t cls = static_cast<std::size_t>(t) % 3;
    const auto rep = pgd_attack(net, ball, x, ClassLabel{cls}, loss::Margin{1.0}, {30, 3, -1, 1});
    EXPECT_LE(rep.achieved_loss, margin_loss(tree_transform_multiclass(net, ball, x, cls), cls, 1.0) + kTol);
  }
}

TEST(MonteCarlo, ZeroFamily) {
  const auto est = mc_rademacher([](Rng&) { return Vector::Zero(10); }, 10, 100, 3, 1);
  EXPECT_EQ(est.mean, 0.0);
  EXPECT_EQ(est.se, 0.0);
}

TEST(MonteCarlo, LinearFamilyBelowClosedForm) {
  Rng rng(9);
  Matrix X = random_gaussian(100, 3, rng);
  for (Eigen::Index i = 0; i < X.rows(); ++i) X.row(i) /= X.row(i).norm();
  BinaryLabels y;
  for (int i = 0; i < 100; ++i) y.values.push_back(i % 2 ? 1 : -1);
  const Dataset data(X, y);
  const PerturbationBall zero(NormExp::Two, 0.0);
  const auto est = mc_rademacher(LinearCaps{1.0, 1.0}, data, zero, 1000, 1000, 11);
  EXPECT_LE(est.mean, rad_bound_linear({1.0, 1.0, 1.0}, zero, 100) + 3 * est.se);
  EXPECT_GT(est.mean, 0.0);

  const PerturbationBall ball(NormExp::Inf, 0.3);
  const auto est2 = mc_rademacher(LinearCaps{1.0, 1.5}, data, ball, 1000, 1000, 12);
  EXPECT_LE(est2.mean, rad_bound_linear({1.0, 1.5, 1.0}, ball, 100) + 3 * est2.se);
}

TEST(MonteCarlo, NetFamilyBelowClosedForm) {
  Rng rng(10);
  const auto data = detail::random_binary_dataset(50, 3, rng);
  NetCaps caps{{{4}, {Activation::ReLU}}, {2.0, 1.5}, 1.5, 1.2};
  const PerturbationBall ball(NormExp::Two, 0.2);
  const auto est = mc_rademacher(caps, data, ball, 500, 500, 13);
  EXPECT_LE(est.mean, rad_bound_tree(capacity_from_caps(caps, data), ball, 50, 1) + 3 * est.se);
  for (int t = 0; t < 20; ++t) {
    const auto net = sample_net_in_caps(caps, 3, ball.q(), rng);
    const auto cap = net_capacity(net, ball.q(), data);
    EXPECT_LE(cap.alpha_j[0], 2.0 + 1e-12);
    EXPECT_LE(cap.alpha_j[1], 1.5 + 1e-12);
    EXPECT_LE(cap.alpha_1F, 1.5 + 1e-12);
    EXPECT_LE(cap.alpha_1q, 1.2 + 1e-12);
  }
}

TEST(BuildQ, ComparisonInstance) {
  const auto inst = build_Q(vec({1, 1}), comparison_W());
  ASSERT_EQ(inst.size(), 6u);
  Vector first(6);
  first << 0, 0, 0, 0, 6, 60;
  EXPECT_EQ(Vector(inst.Q.row(0).transpose()), first);
  EXPECT_EQ(inst.Q, inst.Q.transpose());
  EXPECT_EQ(inst.Q.topLeftCorner(4, 4), Matrix::Zero(4, 4));
  EXPECT_EQ(inst.Q.bottomRightCorner(2, 2), Matrix::Zero(2, 2));
  EXPECT_EQ(build_Q(Vector::Zero(2), comparison_W()).Q, Matrix::Zero(6, 6));
  EXPECT_EQ(build_Q(vec({2.5, 2.5}), comparison_W()).Q, 2.5 * inst.Q);
  EXPECT_THROW(build_Q(vec({1, 1, 1}), comparison_W()), ValidationError);
}

TEST(SdpCertificate, ComparisonValues) {
  const auto inst = build_Q(vec({1, 1}), comparison_W());
  const auto plus = bipartite_certificate(inst, 1);
  EXPECT_EQ(plus.P, Matrix::Ones(6, 6));
  EXPECT_EQ(plus.y, vec({66, 11, 22, 33, 12, 120}));
  const auto c1 = sdp_certificate_check(inst, plus);
  EXPECT_TRUE(c1.certified);
  EXPECT_EQ(c1.dual, 264.0);
  EXPECT_EQ(c1.primal, 264.0);

  const auto minus = bipartite_certificate(inst, -1);
  const Vector u = vec({-1, -1, -1, -1, 1, 1});
  EXPECT_EQ(minus.P, u * u.transpose());
  const auto c2 = sdp_certificate_check(inst, minus);
  EXPECT_TRUE(c2.certified);
  EXPECT_EQ(c2.dual, 264.0);

  EXPECT_NEAR(sdp_value(vec({-0.5, -0.5}), comparison_W()), 132.0, 1e-12);
  EXPECT_NEAR(sdp_value(vec({-0.6, -0.6}), comparison_W()), 158.4, 1e-12);
}

TEST(SdpCertificate, RejectsBrokenCertificates) {
  const auto inst = build_Q(vec({1, 1}), comparison_W());
  auto bad_y = bipartite_certificate(inst, 1);
  bad_y.y(0) -= 1;
  EXPECT_FALSE(sdp_certificate_check(inst, bad_y).certified);

  auto bad_l = bipartite_certificate(inst, 1);
  bad_l.y(5) = 100;
  bad_l.L = Matrix(bad_l.y.asDiagonal()) - inst.Q;
  const auto check = sdp_certificate_check(inst, bad_l);
  EXPECT_FALSE(check.certified);
  EXPECT_FALSE(check.violations.empty());

  auto bad_p = bipartite_certificate(inst, 1);
  bad_p.P(0, 0) = 2;
  EXPECT_FALSE(sdp_certificate_check(inst, bad_p).certified);

  auto not_psd = bipartite_certificate(inst, 1);
  not_psd.P = -Matrix::Identity(6, 6);
  EXPECT_FALSE(sdp_certificate_check(inst, not_psd).certified);

  auto wrong_shape = bipartite_certificate(inst, 1);
  wrong_shape.P = Matrix::Ones(5, 5);
  EXPECT_FALSE(sdp_certificate_check(inst, wrong_shape).certified);
}

TEST(SdpCertificate, Scaling) {
  const auto inst = build_Q(vec({1, 1}), comparison_W());
  const auto cert = bipartite_certificate(inst, 1);
  for (double s : {0.5, -0.6, 3.0, -10.0}) {
    SdpInstance scaled = inst;
    scaled.Q *= s;
    const auto check = sdp_certificate_check(scaled, rescale_certificate(cert, s));
    EXPECT_TRUE(check.certified);
    EXPECT_NEAR(check.dual, 264.0 * std::abs(s), 1e-9);
  }
}

TEST(Demo, DirectionOne) {
  const auto r = incomparability_demo(0.5, 10, 2, 1, 1, SdpMode::max_over_k());
  EXPECT_NEAR(r.margin_f, 198.0, 1e-12);
  EXPECT_NEAR(r.margin_tf, 99.0, 1e-12);
  EXPECT_NEAR(r.sdp_term, 2640.0, 1e-9);
  EXPECT_EQ(r.loss_tf, 0.0);
  EXPECT_EQ(r.loss_hat, 1.0);
  ASSERT_EQ(r.sdp_per_class.size(), 3u);
  EXPECT_NEAR(r.sdp_per_class[0], 264.0, 1e-12);
  EXPECT_NEAR(r.sdp_per_class[1], 132.0, 1e-12);
}

TEST(Demo, DirectionTwoPerClass) {
  // eps < c and 0 <= 99c - 79.2 eps <= rho need eps < rho / 19.8.
  const double c = 0.041, eps = 0.04, rho = 1.0;
  const auto r = incomparability_demo(0.5, 0.6, c, eps, rho, SdpMode::class_k(2));
  EXPECT_NEAR(r.sdp_term, 158.4, 1e-12);
  EXPECT_NEAR(r.loss_hat, phi_rho(99 * c - 79.2 * eps, rho), 1e-12);
  EXPECT_NEAR(r.loss_tf, phi_rho(99 * c - 99 * eps, rho), 1e-12);
  EXPECT_LT(r.loss_hat, r.loss_tf);
}

TEST(Demo, MaxOverClassesNeverBeatsTreeTransform) {
  for (double a : {0.1, 0.5, 0.9, 2.0}) {
    for (double b : {0.2, 0.6, 1.5}) {
      for (double c : {0.5, 0.805, 2.0}) {
        const auto r = incomparability_demo(a, b, c, 0.4, 1.0, SdpMode::max_over_k());
        EXPECT_GE(r.loss_hat, r.loss_tf) << a << " " << b << " " << c;
      }
    }
  }
}

TEST(Demo, SmallRadiusLimit) {
  const auto r = incomparability_demo(0.5, 0.6, 0.01, 1e-9, 1.0, SdpMode::max_over_k());
  EXPECT_NEAR(r.loss_hat, phi_rho(66 * 0.01 * 1.5, 1.0), 1e-6);
  EXPECT_NEAR(r.loss_tf, phi_rho(66 * 0.01 * 1.5, 1.0), 1e-6);
}

TEST(Demo, RejectsBadParameters) {
  EXPECT_THROW(incomparability_demo(0.5, 0.6, 1, 2, 1, SdpMode::max_over_k()), ValidationError);
  EXPECT_THROW(incomparability_demo(-0.5, 0.6, 1, 0.5, 1, SdpMode::max_over_k()), ValidationError);
  EXPECT_THROW(incomparability_demo(0.5, 0.6, 1, 0.5, 1, SdpMode::class_k(3)), ValidationError);
}

TEST(Suites, AllPass) {
  for (const std::string name : {"linear", "tree", "sdp"}) {
    const auto rows = run_suite(name, 1);
    EXPECT_FALSE(rows.empty());
    for (const auto& row : rows) EXPECT_TRUE(row.pass) << row.name << " " << row.max_violation;
  }
  EXPECT_THROW(run_suite("nope", 1), ValidationError);
}

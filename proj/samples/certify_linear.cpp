// Train a robust linear classifier on two Gaussian blobs and print its certificate.
#include "advcert/advcert.hpp"

#include <cstdio>

int main() {
  using namespace advcert;
  const Dataset data = generate_gaussians(200, 2, 2, 6.0, 1.0, 7);
  const PerturbationBall ball(NormExp::Inf, 0.25);

  TrainOptions opts;
  opts.iters = 2000;
  const auto fit = train_convex(data, ball, opts);

  const auto report = certify_linear(fit.model, data, ball, loss::Hinge{}, 0.05);
  std::printf("theta = (%.4f, %.4f), b = %.4f\n", fit.model.theta(0), fit.model.theta(1), fit.model.b);
  std::printf("robust hinge objective %.4f\n", fit.objective);
  std::printf("certified adversarial risk <= %.4f  (empirical %.4f, perturbation %.4f, complexity %.4f, "
              "confidence %.4f)\n",
              report.total, report.empirical, report.perturbation, report.complexity, report.confidence);
}

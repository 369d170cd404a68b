// advcert: generate data, train, certify, attack and run the property suites.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 a property check failed.

#include "advcert/advcert.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace advcert;

constexpr int kExitValidation = 1;
constexpr int kExitPropertyFailure = 2;

struct RunConfig {
  std::string data_path;
  std::string model_path;
  std::string out_path;
  std::string log_path;
  std::string labels = "auto";
  std::string p = "inf";
  double epsilon = 0.0;
  std::string loss;
  double delta = 0.05;
  double rho = 1.0;
  double r = 2.0;
  double B = 1.0;
  std::size_t iters = 5000;
  double step = 1.0;
  std::uint64_t seed = 0;
  std::size_t grid = 0;

  PerturbationBall ball() const { return PerturbationBall(parse_norm_exp(p), epsilon); }
};

void add_ball_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--p", cfg.p, "norm of the perturbation ball: 1, 2 or inf")->capture_default_str();
  cmd->add_option("--epsilon", cfg.epsilon, "perturbation radius, in input-feature units")->capture_default_str();
}

void add_loss_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--loss", cfg.loss,
                  "hinge, hinge-truncated, zero-one, hinge-indicator, xe, margin or regression "
                  "(default: hinge, margin or regression by label kind)");
  cmd->add_option("--rho", cfg.rho, "margin-loss width")->capture_default_str();
  cmd->add_option("--r", cfg.r, "regression loss exponent")->capture_default_str();
  cmd->add_option("--B", cfg.B, "regression loss truncation level")->capture_default_str();
}

LossSpec resolve_loss(const RunConfig& cfg, LabelKind kind) {
  std::string name = cfg.loss;
  if (name.empty()) name = kind == LabelKind::Binary ? "hinge" : (kind == LabelKind::Class ? "margin" : "regression");
  return parse_loss(name, cfg.rho, cfg.r, cfg.B);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out.good()) throw ValidationError("cannot write '" + path + "'");
  return out;
}

void print_report(const BoundReport& r) {
  std::printf("certificate (%s, loss %s, n=%zu, epsilon=%g, delta=%g)\n", r.form.c_str(), r.loss.c_str(), r.n,
              r.epsilon, r.delta);
  std::printf("  empirical     %.12g\n", r.empirical);
  std::printf("  perturbation  %.12g\n", r.perturbation);
  std::printf("  complexity    %.12g\n", r.complexity);
  std::printf("  confidence    %.12g\n", r.confidence);
  std::printf("  total         %.12g\n", r.total);
}

// --- gen -------------------------------------------------------------------

struct GenConfig {
  std::string kind = "gaussians";
  std::size_t n = 100, m = 2, K = 2;
  double gap = 4.0, noise = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen(const GenConfig& g) {
  if (g.out.empty()) throw ValidationError("gen needs --out");
  Dataset data = g.kind == "gaussians"         ? generate_gaussians(g.n, g.m, g.K, g.gap, g.noise, g.seed)
                 : g.kind == "regression-line" ? generate_regression_line(g.n, g.m, g.noise, g.seed)
                                               : throw ValidationError("unknown --kind '" + g.kind +
                                                                       "': expected gaussians or regression-line");
  write_dataset_csv(g.out, data);
  std::printf("wrote %zu samples with %zu features (%s labels) to %s\n", data.n(), data.m(),
              to_string(data.kind()).c_str(), g.out.c_str());
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainConfig {
  std::string alg = "convex";
  std::string hidden = "8";
  std::string activation = "relu";
};

int cmd_train(const RunConfig& cfg, const TrainConfig& t) {
  if (cfg.data_path.empty() || cfg.out_path.empty()) throw ValidationError("train needs --data and --out");
  const Dataset data = read_dataset_csv(cfg.data_path, parse_label_mode(cfg.labels));
  const auto ball = cfg.ball();
  TrainOptions opts;
  opts.iters = cfg.iters;
  opts.step = StepSchedule{cfg.step};
  opts.seed = cfg.seed;
  opts.grid = cfg.grid;

  AnyModel model;
  std::vector<TrainLogRow> log;
  double objective = 0.0;
  if (t.alg == "convex" || t.alg == "reg-grid") {
    if (data.kind() != LabelKind::Binary) throw ValidationError("--alg " + t.alg + " needs binary (+1/-1) labels");
    if (t.alg == "convex") {
      auto fit = train_convex(data, ball, opts);
      model = fit.model;
      log = std::move(fit.log);
      objective = fit.objective;
    } else {
      auto fit = train_regularized_grid(data, ball, opts);
      model = fit.model;
      log = std::move(fit.log);
      objective = fit.objective;
      std::printf("selected gamma = %.12g of %zu grid points\n", fit.candidates[fit.selected].gamma,
                  fit.candidates.size());
    }
  } else if (t.alg == "tree") {
    Architecture arch;
    for (const auto& w : split_list(t.hidden)) {
      const long v = std::stol(w);
      if (v < 1) throw ValidationError("hidden widths must be positive");
      arch.hidden_widths.push_back(static_cast<std::size_t>(v));
    }
    auto acts = split_list(t.activation);
    if (acts.size() == 1) acts.assign(arch.hidden_widths.size(), acts.front());
    if (acts.size() != arch.hidden_widths.size()) throw ValidationError("give one activation or one per hidden layer");
    for (const auto& a : acts) arch.activations.push_back(parse_activation(a));
    auto fit = train_tree(data, ball, arch, resolve_loss(cfg, data.kind()), opts);
    model = fit.net;
    log = std::move(fit.log);
    objective = fit.objective;
  } else {
    throw ValidationError("unknown --alg '" + t.alg + "': expected convex, reg-grid or tree");
  }
  write_model_json(cfg.out_path, model);
  if (!cfg.log_path.empty()) {
    auto out = open_output(cfg.log_path);
    write_training_log_csv(out, log);
  }
  std::printf("objective %.12g after %zu logged iterations; model written to %s\n", objective, log.size(),
              cfg.out_path.c_str());
  return 0;
}

// --- certify ---------------------------------------------------------------

BoundReport certify_any(const AnyModel& model, const Dataset& data, const RunConfig& cfg, const std::string& form) {
  const auto ball = cfg.ball();
  if (const auto* lin = std::get_if<LinearModel>(&model)) {
    if (data.kind() == LabelKind::Real) return certify_linear_regression(*lin, data, ball, cfg.r, cfg.B, cfg.delta);
    if (data.kind() != LabelKind::Binary) throw ValidationError("a binary linear model needs +1/-1 or real labels");
    LinearBoundForm f = LinearBoundForm::Transformed;
    if (form == "regularized") f = LinearBoundForm::Regularized;
    else if (!form.empty() && form != "transformed") throw ValidationError("linear --form is transformed or regularized");
    return certify_linear(*lin, data, ball, resolve_loss(cfg, data.kind()), cfg.delta, f);
  }
  if (const auto* mc = std::get_if<MulticlassLinearModel>(&model)) {
    if (data.kind() != LabelKind::Class) throw ValidationError("a multiclass linear model needs class labels");
    return certify_multiclass_linear(*mc, data, ball, cfg.rho, cfg.delta);
  }
  const auto& net = std::get<NeuralNet>(model);
  switch (data.kind()) {
    case LabelKind::Binary: {
      NnBoundForm f = NnBoundForm::Generic;
      if (form == "xe") f = NnBoundForm::CrossEntropy;
      else if (!form.empty() && form != "generic") throw ValidationError("network --form is generic or xe");
      LossSpec loss = resolve_loss(cfg, data.kind());
      if (f == NnBoundForm::CrossEntropy && cfg.loss.empty()) loss = loss::CrossEntropy{};
      return certify_nn(net, data, ball, loss, cfg.delta, f);
    }
    case LabelKind::Class: return certify_multiclass_nn(net, data, ball, cfg.rho, cfg.delta);
    case LabelKind::Real: return certify_nn_regression(net, data, ball, cfg.r, cfg.B, cfg.delta);
  }
  throw ValidationError("unsupported model and label combination");
}

int cmd_certify(const RunConfig& cfg, const std::string& form) {
  if (cfg.data_path.empty() || cfg.model_path.empty()) throw ValidationError("certify needs --data and --model");
  const Dataset data = read_dataset_csv(cfg.data_path, parse_label_mode(cfg.labels));
  const AnyModel model = read_model_json(cfg.model_path);
  const auto report = certify_any(model, data, cfg, form);
  print_report(report);
  if (!cfg.out_path.empty()) {
    auto out = open_output(cfg.out_path);
    write_report_csv(out, report);
  }
  return 0;
}

// --- attack ----------------------------------------------------------------

/// Loss of the transformed model at sample i (exact for linear models, an
/// upper bound for networks).
double transformed_loss(const AnyModel& model, const Dataset& data, const PerturbationBall& ball,
                        const LossSpec& loss, std::size_t i) {
  const Vector x = data.x(i);
  if (const auto* lin = std::get_if<LinearModel>(&model)) {
    if (const auto* reg = std::get_if<loss::RegressionPower>(&loss)) {
      const auto env = psi_plus_minus_linear(*lin, ball, x);
      return regression_envelope_loss(env.upper, env.lower, data.real()[i], reg->r, reg->B);
    }
    const int y = data.binary()[i];
    return binary_loss(loss, sup_transform_linear(*lin, ball, x, y), y);
  }
  if (const auto* mc = std::get_if<MulticlassLinearModel>(&model)) {
    const auto cls = data.classes().values[i];
    return margin_loss(sup_transform_multiclass(*mc, ball, x, cls), cls, std::get<loss::Margin>(loss).rho);
  }
  const auto& net = std::get<NeuralNet>(model);
  if (const auto* reg = std::get_if<loss::RegressionPower>(&loss)) {
    const auto env = tree_envelope(net, ball, x);
    return regression_envelope_loss(env.upper, env.lower, data.real()[i], reg->r, reg->B);
  }
  if (const auto* m = std::get_if<loss::Margin>(&loss)) {
    const auto cls = data.classes().values[i];
    return margin_loss(tree_transform_multiclass(net, ball, x, cls), cls, m->rho);
  }
  const int y = data.binary()[i];
  return binary_loss(loss, tree_transform_binary(net, ball, x, y), y);
}

int cmd_attack(const RunConfig& cfg, const PgdOptions& pgd_base) {
  if (cfg.data_path.empty() || cfg.model_path.empty()) throw ValidationError("attack needs --data and --model");
  const Dataset data = read_dataset_csv(cfg.data_path, parse_label_mode(cfg.labels));
  const AnyModel model = read_model_json(cfg.model_path);
  const auto ball = cfg.ball();
  const LossSpec loss = resolve_loss(cfg, data.kind());
  std::optional<std::ofstream> out;
  if (!cfg.out_path.empty()) {
    out = open_output(cfg.out_path);
    *out << "sample,method,attack_loss,transformed_loss\n";
  }
  double attack_sum = 0.0, transformed_sum = 0.0;
  std::size_t violations = 0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const Vector x = data.x(i);
    AttackReport rep;
    const auto* lin = std::get_if<LinearModel>(&model);
    if (lin && ball.p() == NormExp::Inf && data.m() <= kCornerDimLimit && is_binary_loss(loss)) {
      rep = corner_adversary_linear(*lin, ball, x, data.binary()[i], loss);
    } else {
      PgdOptions pgd = pgd_base;
      pgd.seed = cfg.seed + i;
      rep = std::visit([&](const auto& m) { return pgd_attack(m, ball, x, data.label(i), loss, pgd); }, model);
    }
    const double bound = transformed_loss(model, data, ball, loss, i);
    if (rep.achieved_loss > bound + 1e-9) ++violations;
    attack_sum += rep.achieved_loss;
    transformed_sum += bound;
    if (out) {
      *out << i << ',' << rep.method << ',' << format_double(rep.achieved_loss) << ',' << format_double(bound) << '\n';
    }
  }
  const double n = static_cast<double>(data.n());
  std::printf("attacked empirical risk     %.12g\n", attack_sum / n);
  std::printf("transformed empirical risk  %.12g\n", transformed_sum / n);
  if (violations > 0) {
    std::fprintf(stderr, "%zu samples where the attack exceeded the transformed loss\n", violations);
    return kExitPropertyFailure;
  }
  return 0;
}

// --- verify ----------------------------------------------------------------

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out_path) {
  const auto rows = run_suite(suite, seed);
  write_checks_csv(std::cout, rows);
  if (!out_path.empty()) {
    auto out = open_output(out_path);
    write_checks_csv(out, rows);
  }
  for (const auto& r : rows) {
    if (!r.pass) return kExitPropertyFailure;
  }
  return 0;
}

// --- demo ------------------------------------------------------------------

struct DemoConfig {
  double a = 0.5, b = 10.0, c = 2.0, epsilon = 1.0, rho = 1.0;
  std::string mode = "max";
  std::size_t cls = 2;
  std::string out;
};

int cmd_demo(const DemoConfig& d) {
  SdpMode mode;
  if (d.mode == "max") mode = SdpMode::max_over_k();
  else if (d.mode == "class") mode = SdpMode::class_k(d.cls);
  else throw ValidationError("unknown --sdp-mode '" + d.mode + "': expected max or class");
  const auto r = incomparability_demo(d.a, d.b, d.c, d.epsilon, d.rho, mode);
  std::printf("margin of f        %.12g\n", r.margin_f);
  std::printf("margin of Tf       %.12g\n", r.margin_tf);
  for (std::size_t k = 0; k < r.sdp_per_class.size(); ++k) std::printf("SDP value row %zu    %.12g\n", k, r.sdp_per_class[k]);
  std::printf("SDP term used      %.12g\n", r.sdp_term);
  std::printf("relaxation loss    %.12g\n", r.loss_hat);
  std::printf("tree loss          %.12g\n", r.loss_tf);
  if (d.mode == "max" && r.loss_hat >= r.loss_tf) {
    std::printf("note: with the max over rows the SDP term is at least the margin gap, "
                "so the relaxation loss cannot fall below the tree loss here\n");
  }
  if (!d.out.empty()) {
    auto out = open_output(d.out);
    out << "a,b,c,epsilon,rho,mode,margin_f,margin_tf,sdp_term,loss_hat,loss_tf\n";
    out << format_double(d.a) << ',' << format_double(d.b) << ',' << format_double(d.c) << ','
        << format_double(d.epsilon) << ',' << format_double(d.rho) << ','
        << (d.mode == "max" ? std::string("max") : "class" + std::to_string(d.cls)) << ','
        << format_double(r.margin_f) << ',' << format_double(r.margin_tf) << ',' << format_double(r.sdp_term) << ','
        << format_double(r.loss_hat) << ',' << format_double(r.loss_tf) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial risk certificates for linear models and feed-forward networks"};
  app.require_subcommand(1);

  RunConfig cfg;

  GenConfig gen;
  auto* gen_cmd = app.add_subcommand("gen", "write a synthetic dataset CSV");
  gen_cmd->add_option("--kind", gen.kind, "gaussians or regression-line")->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "number of samples")->capture_default_str();
  gen_cmd->add_option("--m", gen.m, "number of features")->capture_default_str();
  gen_cmd->add_option("--K", gen.K, "number of classes")->capture_default_str();
  gen_cmd->add_option("--gap", gen.gap, "distance between adjacent class means")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "noise standard deviation")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "random seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output CSV path");

  TrainConfig train;
  auto* train_cmd = app.add_subcommand("train", "fit a model by minimizing a robust objective");
  train_cmd->add_option("--data", cfg.data_path, "dataset CSV");
  train_cmd->add_option("--labels", cfg.labels, "label kind: auto, binary, class or real")->capture_default_str();
  train_cmd->add_option("--alg", train.alg, "convex, reg-grid or tree")->capture_default_str();
  add_ball_options(train_cmd, cfg);
  add_loss_options(train_cmd, cfg);
  train_cmd->add_option("--iters", cfg.iters, "iterations (per grid point for reg-grid)")->capture_default_str();
  train_cmd->add_option("--step", cfg.step, "step constant c in c/sqrt(t)")->capture_default_str();
  train_cmd->add_option("--seed", cfg.seed, "initialization seed")->capture_default_str();
  train_cmd->add_option("--grid", cfg.grid, "regularization grid intervals for reg-grid (0 = all i/n)")
      ->capture_default_str();
  train_cmd->add_option("--hidden", train.hidden, "comma-separated hidden widths for tree")->capture_default_str();
  train_cmd->add_option("--activation", train.activation, "relu or tanh, one or per hidden layer")
      ->capture_default_str();
  train_cmd->add_option("--out", cfg.out_path, "model JSON path");
  train_cmd->add_option("--log", cfg.log_path, "training log CSV path");

  std::string form;
  auto* cert_cmd = app.add_subcommand("certify", "print a decomposed adversarial risk certificate");
  cert_cmd->add_option("--data", cfg.data_path, "dataset CSV");
  cert_cmd->add_option("--labels", cfg.labels, "label kind: auto, binary, class or real")->capture_default_str();
  cert_cmd->add_option("--model", cfg.model_path, "model JSON");
  add_ball_options(cert_cmd, cfg);
  add_loss_options(cert_cmd, cfg);
  cert_cmd->add_option("--delta", cfg.delta, "failure probability")->capture_default_str();
  cert_cmd->add_option("--form", form, "transformed|regularized (linear) or generic|xe (network)");
  cert_cmd->add_option("--out", cfg.out_path, "report CSV path");

  PgdOptions pgd;
  auto* atk_cmd = app.add_subcommand("attack", "attack every sample and compare with the transformed loss");
  atk_cmd->add_option("--data", cfg.data_path, "dataset CSV");
  atk_cmd->add_option("--labels", cfg.labels, "label kind: auto, binary, class or real")->capture_default_str();
  atk_cmd->add_option("--model", cfg.model_path, "model JSON");
  add_ball_options(atk_cmd, cfg);
  add_loss_options(atk_cmd, cfg);
  atk_cmd->add_option("--steps", pgd.steps, "PGD steps per restart")->capture_default_str();
  atk_cmd->add_option("--restarts", pgd.restarts, "PGD restarts")->capture_default_str();
  atk_cmd->add_option("--seed", cfg.seed, "attack seed")->capture_default_str();
  atk_cmd->add_option("--out", cfg.out_path, "per-sample CSV path");

  std::string suite = "all";
  auto* ver_cmd = app.add_subcommand("verify", "run the property suites");
  ver_cmd->add_option("--suite", suite, "all, linear, tree or sdp")->capture_default_str();
  ver_cmd->add_option("--seed", cfg.seed, "suite seed")->capture_default_str();
  ver_cmd->add_option("--out", cfg.out_path, "report CSV path");

  DemoConfig demo;
  auto* demo_cmd = app.add_subcommand("demo", "compare the tree loss with the SDP relaxation loss");
  demo_cmd->add_option("--a", demo.a)->capture_default_str();
  demo_cmd->add_option("--b", demo.b)->capture_default_str();
  demo_cmd->add_option("--c", demo.c)->capture_default_str();
  demo_cmd->add_option("--epsilon", demo.epsilon)->capture_default_str();
  demo_cmd->add_option("--rho", demo.rho)->capture_default_str();
  demo_cmd->add_option("--sdp-mode", demo.mode, "max (over output rows) or class")->capture_default_str();
  demo_cmd->add_option("--sdp-class", demo.cls, "output row used by --sdp-mode class (0-based)")
      ->capture_default_str();
  demo_cmd->add_option("--out", demo.out, "CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*train_cmd) return cmd_train(cfg, train);
    if (*cert_cmd) return cmd_certify(cfg, form);
    if (*atk_cmd) return cmd_attack(cfg, pgd);
    if (*ver_cmd) return cmd_verify(suite, cfg.seed, cfg.out_path);
    if (*demo_cmd) return cmd_demo(demo);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::out_of_range& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}

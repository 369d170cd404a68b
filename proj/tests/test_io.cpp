#include "advcert/data.hpp"
#include "advcert/io.hpp"
#include "advcert/verify.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace advcert;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("advcert_test_" + name)).string();
}

void expect_close(const Matrix& a, const Matrix& b) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    EXPECT_LE(std::abs(a.data()[i] - b.data()[i]), 1e-15 * std::max(1.0, std::abs(a.data()[i])));
  }
}

}  // namespace

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-2.0), "-2");
  Rng rng(1);
  std::normal_distribution<double> g(0.0, 1e3);
  for (int t = 0; t < 1000; ++t) {
    const double v = g(rng);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(DatasetCsv, RoundTripsEveryLabelKind) {
  for (const auto& data : {generate_gaussians(40, 3, 2, 2.0, 1.0, 1), generate_gaussians(40, 3, 4, 2.0, 1.0, 2),
                           generate_regression_line(40, 3, 0.3, 3)}) {
    std::stringstream ss;
    write_dataset_csv(ss, data);
    const auto back = parse_dataset_csv(ss);
    EXPECT_EQ(back.kind(), data.kind());
    expect_close(back.features(), data.features());
    for (std::size_t i = 0; i < data.n(); ++i) {
      switch (data.kind()) {
        case LabelKind::Binary: EXPECT_EQ(back.binary()[i], data.binary()[i]); break;
        case LabelKind::Class: EXPECT_EQ(back.classes().values[i], data.classes().values[i]); break;
        case LabelKind::Real: EXPECT_EQ(back.real()[i], data.real()[i]); break;
      }
    }
  }
}

TEST(DatasetCsv, LabelInferenceAndOverride) {
  std::stringstream a("x0,label\n1,1\n2,-1\n");
  EXPECT_EQ(parse_dataset_csv(a).kind(), LabelKind::Binary);
  std::stringstream b("x0,label\n1,0\n2,2\n");
  const auto cls = parse_dataset_csv(b);
  EXPECT_EQ(cls.kind(), LabelKind::Class);
  EXPECT_EQ(cls.classes().num_classes, 3u);
  std::stringstream c("x0,label\n1,0.5\n2,2\n");
  EXPECT_EQ(parse_dataset_csv(c).kind(), LabelKind::Real);
  std::stringstream d("x0,label\n1,1\n2,-1\n");
  EXPECT_EQ(parse_dataset_csv(d, LabelMode::Real).kind(), LabelKind::Real);
  std::stringstream e("x0,label\n1,0.5\n");
  EXPECT_THROW(parse_dataset_csv(e, LabelMode::Binary), ValidationError);
}

TEST(DatasetCsv, Errors) {
  const char* bad[] = {"", "x0,y\n1,1\n", "x1,label\n1,1\n", "x0,label\n", "x0,label\n1\n", "x0,label\nabc,1\n",
                       "x0,label\n1,1,1\n", "x0,label\nnan,1\n"};
  for (const char* text : bad) {
    std::stringstream ss(text);
    EXPECT_THROW(parse_dataset_csv(ss), ValidationError) << text;
  }
  EXPECT_THROW(read_dataset_csv("/nonexistent/file.csv"), ValidationError);
}

TEST(ModelJson, RoundTrips) {
  Rng rng(4);
  const AnyModel models[] = {random_linear_model(5, rng),
                             MulticlassLinearModel{random_gaussian(3, 4, rng), random_gaussian(3, rng)},
                             random_net(4, {5, 3}, 2, {Activation::ReLU, Activation::Tanh}, rng)};
  for (const auto& model : models) {
    const std::string path = temp_path("model.json");
    write_model_json(path, model);
    const auto back = read_model_json(path);
    ASSERT_EQ(back.index(), model.index());
    if (const auto* m = std::get_if<LinearModel>(&model)) {
      expect_close(std::get<LinearModel>(back).theta, m->theta);
      EXPECT_EQ(std::get<LinearModel>(back).b, m->b);
    } else if (const auto* mc = std::get_if<MulticlassLinearModel>(&model)) {
      expect_close(std::get<MulticlassLinearModel>(back).Theta, mc->Theta);
      expect_close(std::get<MulticlassLinearModel>(back).b, mc->b);
    } else {
      const auto& net = std::get<NeuralNet>(model);
      const auto& got = std::get<NeuralNet>(back);
      ASSERT_EQ(got.layers.size(), net.layers.size());
      for (std::size_t k = 0; k < net.layers.size(); ++k) expect_close(got.layers[k], net.layers[k]);
      EXPECT_EQ(got.activations, net.activations);
    }
    std::filesystem::remove(path);
  }
}

TEST(ModelJson, SchemaAndErrors) {
  const auto j = model_to_json(LinearModel{Vector::Ones(2), 0.5});
  EXPECT_EQ(j["kind"], "linear");
  EXPECT_EQ(j["theta"].size(), 2u);
  EXPECT_EQ(j["b"], 0.5);
  using nlohmann::json;
  const json bad[] = {json::object(),
                      {{"kind", "svm"}},
                      {{"kind", "linear"}, {"theta", {1, 2}}},
                      {{"kind", "linear"}, {"theta", {1, "x"}}, {"b", 0}},
                      {{"kind", "multiclass_linear"}, {"Theta", {{1, 2}, {3}}}, {"b", {0, 0}}},
                      {{"kind", "multiclass_linear"}, {"Theta", {{1, 2}, {3, 4}}}, {"b", {0}}},
                      {{"kind", "nn"}, {"layers", {{{1, 2}}, {{1, 1}}}}, {"activations", {"relu"}}},
                      {{"kind", "nn"}, {"layers", {{{1, 2}}, {{1}}}}, {"activations", {"sigmoid"}}}};
  for (const auto& b : bad) EXPECT_THROW(model_from_json(b), ValidationError) << b.dump();
  const std::string path = temp_path("broken.json");
  {
    std::ofstream out(path);
    out << "{not json";
  }
  EXPECT_THROW(read_model_json(path), ValidationError);
  std::filesystem::remove(path);
}

TEST(ReportCsv, Layouts) {
  BoundReport r;
  r.form = "transformed";
  r.loss = "hinge";
  r.n = 10;
  r.empirical = 0.25;
  r.total = 1.5;
  std::stringstream ss;
  write_report_csv(ss, r);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "form,loss,n,epsilon,delta,empirical,perturbation,complexity,confidence,total");

  std::stringstream log;
  write_training_log_csv(log, {{1, 0.5, 2.0}});
  EXPECT_EQ(log.str(), "iter,objective,grad_norm\n1,0.5,2\n");

  std::stringstream checks;
  write_checks_csv(checks, {{"a", 3, 0.0, true}, {"b", 1, 0.5, false}});
  EXPECT_EQ(checks.str(), "check_name,instances,max_violation,pass\na,3,0,true\nb,1,0.5,false\n");
}

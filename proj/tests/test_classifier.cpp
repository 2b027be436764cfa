#include <doctest.h>

#include <cmath>
#include <random>

#include "focal/classifier.hpp"

using namespace focal;

namespace {

std::vector<LabeledSample> separable_2d(std::uint64_t seed, int per_class = 50) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<LabeledSample> out;
  for (int i = 0; i < per_class; ++i) {
    out.push_back({{1.5 + n(rng), 1.0 + n(rng)}, "pos"});
    out.push_back({{-1.5 + n(rng), -1.0 + n(rng)}, "neg"});
  }
  return out;
}

// Perceptron on the same data; convergence certifies linear separability.
bool perceptron_separates(const std::vector<LabeledSample>& data) {
  double w0 = 0, w1 = 0, b = 0;
  for (int epoch = 0; epoch < 1000; ++epoch) {
    int mistakes = 0;
    for (const auto& s : data) {
      const double y = s.label == "pos" ? 1 : -1;
      if (y * (w0 * s.features[0] + w1 * s.features[1] + b) <= 0) {
        w0 += y * s.features[0];
        w1 += y * s.features[1];
        b += y;
        ++mistakes;
      }
    }
    if (mistakes == 0) return true;
  }
  return false;
}

double training_accuracy(const ClassifierHead& head, const std::vector<LabeledSample>& data) {
  int ok = 0;
  for (const auto& s : data) ok += predict(head, s.features).label == s.label;
  return static_cast<double>(ok) / data.size();
}

} // namespace

TEST_CASE("expand appends zero rows and never touches existing ones") {
  ClassifierHead head(3);
  std::vector<std::string> three{"a", "b", "c"};
  head.expand(three);
  CHECK(head.size() == 3);
  CHECK(head.weights() == std::vector<double>(9, 0.0));
  CHECK(head.biases() == std::vector<double>(3, 0.0));

  head.weights()[4] = 1.25;
  head.biases()[1] = -0.5;
  const auto before_w = head.weights();
  const auto before_b = head.biases();
  std::vector<std::string> one{"d"};
  head.expand(one);
  CHECK(head.size() == 4);
  CHECK(std::equal(before_w.begin(), before_w.end(), head.weights().begin()));
  CHECK(std::equal(before_b.begin(), before_b.end(), head.biases().begin()));
  CHECK(head.labels().back() == "d");

  std::vector<std::string> known{"b"};
  CHECK_THROWS_AS(head.expand(known), std::invalid_argument);
  std::vector<std::string> dup{"e", "e"};
  CHECK_THROWS_AS(head.expand(dup), std::invalid_argument);
  CHECK(head.size() == 4);
}

TEST_CASE("softmax") {
  std::vector<double> z{2.0, 0.0};
  auto p = softmax(z);
  CHECK(p[0] == doctest::Approx(std::exp(2.0) / (std::exp(2.0) + 1)).epsilon(1e-14));
  CHECK(p[0] == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.1192).epsilon(1e-3));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> logits(6);
    for (auto& v : logits) v = n(rng);
    auto a = softmax(logits);
    double s = 0;
    for (double v : a) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-12);
    const double shift = n(rng) * 100;
    for (auto& v : logits) v += shift;
    auto b = softmax(logits);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
  }
  std::vector<double> huge{1000.0, 999.0};
  CHECK(std::isfinite(softmax(huge)[0]));
}

TEST_CASE("predict") {
  ClassifierHead head(2);
  CHECK_THROWS_AS(predict(head, FeatureVector{0, 0}), std::invalid_argument);

  std::vector<std::string> one{"only"};
  head.expand(one);
  auto p1 = predict(head, FeatureVector{3, 4});
  CHECK(p1.label == "only");
  CHECK(p1.probabilities == std::vector<double>{1.0});

  ClassifierHead four(2);
  std::vector<std::string> labels{"w", "x", "y", "z"};
  four.expand(labels);
  auto p4 = predict(four, FeatureVector{1, -1});
  CHECK(p4.label == "w");
  CHECK(p4.row == 0);
  for (double v : p4.probabilities) CHECK(v == 0.25);
  CHECK_THROWS_AS(predict(four, FeatureVector{1}), std::invalid_argument);
}

TEST_CASE("analytic gradient matches central finite differences") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto dim = std::uniform_int_distribution<std::uint32_t>(1, 5)(rng);
    const int classes = std::uniform_int_distribution<int>(1, 4)(rng);
    ClassifierHead head(dim);
    std::vector<std::string> labels;
    for (int c = 0; c < classes; ++c) labels.push_back("c" + std::to_string(c));
    head.expand(labels);
    for (auto& w : head.weights()) w = n(rng);
    for (auto& b : head.biases()) b = n(rng);

    std::vector<LabeledSample> data;
    for (int i = 0; i < 7; ++i) {
      FeatureVector x(dim);
      for (auto& v : x) v = n(rng);
      data.push_back({x, labels[std::uniform_int_distribution<int>(0, classes - 1)(rng)]});
    }
    const auto batch = encode_labels(head, data);
    const auto grad = cross_entropy_gradient(head, batch);

    auto check_param = [&](double& param, double analytic) {
      const double h = 1e-5;
      const double saved = param;
      param = saved + h;
      const double up = cross_entropy_loss(head, batch);
      param = saved - h;
      const double down = cross_entropy_loss(head, batch);
      param = saved;
      const double numeric = (up - down) / (2 * h);
      CHECK(std::abs(numeric - analytic) <= 1e-4 * std::max(1.0, std::abs(numeric)));
    };
    for (std::size_t k = 0; k < head.weights().size(); ++k) check_param(head.weights()[k], grad.weights[k]);
    for (std::size_t k = 0; k < head.biases().size(); ++k) check_param(head.biases()[k], grad.biases[k]);
  }
}

TEST_CASE("training") {
  const auto data = separable_2d(5);
  REQUIRE(perceptron_separates(data));

  SUBCASE("separable data is fit perfectly under default config") {
    ClassifierHead head(2);
    std::vector<std::string> labels{"pos", "neg"};
    head.expand(labels);
    auto report = train(head, data, TrainConfig{});
    CHECK(report.epoch_loss.size() == 25);
    CHECK(report.steps == 25 * 2);
    CHECK(training_accuracy(head, data) == 1.0);
    CHECK(report.epoch_loss.back() <= report.epoch_loss.front());
  }
  SUBCASE("zero epochs leaves the head unchanged") {
    ClassifierHead head(2);
    std::vector<std::string> labels{"pos", "neg"};
    head.expand(labels);
    head.weights()[0] = 0.5;
    const auto before = head.weights();
    TrainConfig cfg;
    cfg.epochs = 0;
    train(head, data, cfg);
    CHECK(head.weights() == before);
  }
  SUBCASE("deterministic under the shuffle seed") {
    std::vector<std::string> labels{"pos", "neg"};
    ClassifierHead a(2), b(2);
    a.expand(labels);
    b.expand(labels);
    TrainConfig cfg;
    cfg.shuffle_seed = 77;
    train(a, data, cfg);
    train(b, data, cfg);
    CHECK(a.weights() == b.weights());
    CHECK(a.biases() == b.biases());
  }
  SUBCASE("errors") {
    ClassifierHead head(2);
    std::vector<std::string> labels{"pos"};
    head.expand(labels);
    CHECK_THROWS_AS(train(head, data, TrainConfig{}), std::invalid_argument);
    CHECK_THROWS_AS(train(head, std::vector<LabeledSample>{}, TrainConfig{}), std::invalid_argument);
    TrainConfig bad;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}

TEST_CASE("evaluate") {
  std::vector<FeatureVector> storage;
  for (int i = 0; i < 10; ++i) storage.push_back({double(i)});
  std::vector<EvalObject> test;
  for (int c = 0; c < 10; ++c) test.push_back({{FeatureView(storage[c])}, "c" + std::to_string(c)});

  SUBCASE("always-majority head on a balanced ten-way set") {
    ClassifierHead head(1);
    std::vector<std::string> labels;
    for (int c = 0; c < 10; ++c) labels.push_back("c" + std::to_string(c));
    head.expand(labels);
    head.biases()[3] = 1.0;
    auto acc = evaluate(head, test);
    CHECK(acc.image == doctest::Approx(0.1));
    CHECK(acc.object_majority == doctest::Approx(0.1));
  }
  SUBCASE("disjoint labels score zero") {
    ClassifierHead head(1);
    std::vector<std::string> labels{"other"};
    head.expand(labels);
    CHECK(evaluate(head, test).image == 0.0);
  }
  SUBCASE("a perfect head scores one, in parallel too") {
    const auto data = separable_2d(8, 20);
    ClassifierHead head(2);
    std::vector<std::string> labels{"pos", "neg"};
    head.expand(labels);
    train(head, data, TrainConfig{});
    std::vector<EvalObject> objs;
    for (std::size_t i = 0; i + 1 < data.size(); i += 2) {
      objs.push_back({{FeatureView(data[i].features)}, data[i].label});
      objs.push_back({{FeatureView(data[i + 1].features)}, data[i + 1].label});
    }
    CHECK(evaluate(head, objs).image == 1.0);
    CHECK(evaluate(head, objs, 4).image == 1.0);
  }
  SUBCASE("majority vote per object") {
    ClassifierHead head(1);
    std::vector<std::string> labels{"neg", "pos"};
    head.expand(labels);
    head.weights()[1] = 1.0; // x > 0 -> pos
    std::vector<FeatureVector> views{{1.0}, {2.0}, {-1.0}};
    std::vector<EvalObject> obj{{{FeatureView(views[0]), FeatureView(views[1]), FeatureView(views[2])}, "pos"}};
    auto acc = evaluate(head, obj);
    CHECK(acc.image == doctest::Approx(2.0 / 3.0));
    CHECK(acc.object_majority == 1.0);
  }
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "geoloc/discretise.hpp"
#include "geoloc/error.hpp"
#include "geoloc/neuralnet.hpp"
#include "geoloc/random.hpp"
#include "support/synthetic.hpp"
#include "support/toy_model.hpp"

using namespace geoloc;
using geoloc::testing::toy_model;
using geoloc::testing::toy_row;

namespace {

FeatureMatrix random_features(Rng& rng, std::size_t rows, std::size_t cols) {
  FeatureMatrix x;
  x.cols = cols;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::pair<std::uint32_t, double>> entries;
    for (std::size_t c = 0; c < cols; ++c) {
      if (uniform01(rng) < 0.4) entries.emplace_back(static_cast<std::uint32_t>(c), 1.0 + uniform_index(rng, 3));
    }
    if (entries.empty()) entries.emplace_back(0, 1.0);
    x.append_row(std::move(entries));
  }
  return x;
}

std::vector<double*> all_params(MlpParams& p) {
  std::vector<double*> out;
  for (auto* block : {&p.w1, &p.w2}) {
    for (Eigen::Index i = 0; i < block->size(); ++i) out.push_back(block->data() + i);
  }
  for (auto* block : {&p.b1, &p.b2}) {
    for (Eigen::Index i = 0; i < block->size(); ++i) out.push_back(block->data() + i);
  }
  return out;
}

struct SyntheticSetup {
  testing::SyntheticCorpus corpus;
  Vocabulary vocab;
  FeatureMatrix x_train, x_dev, x_test;
  Discretiser discretiser;
  std::vector<std::uint32_t> y_train;
  std::vector<GeoPoint> dev_gold, test_gold;
};

SyntheticSetup synthetic_setup() {
  SyntheticSetup s;
  s.corpus = testing::make_synthetic();
  s.vocab = fit_vocabulary(s.corpus.train, 2, default_stopwords());
  s.x_train = featurize(s.corpus.train, s.vocab).matrix;
  s.x_dev = featurize(s.corpus.dev, s.vocab).matrix;
  s.x_test = featurize(s.corpus.test, s.vocab).matrix;
  std::vector<GeoPoint> train_points;
  for (const auto& r : s.corpus.train) train_points.emplace_back(r.lat, r.lon);
  s.discretiser = fit_kmeans(train_points, 4, {.seed = 1});
  s.y_train = s.discretiser.assignments();
  for (const auto& r : s.corpus.dev) s.dev_gold.emplace_back(r.lat, r.lon);
  for (const auto& r : s.corpus.test) s.test_gold.emplace_back(r.lat, r.lon);
  return s;
}

TrainConfig small_config() {
  TrainConfig c;
  c.hidden_size = 16;
  c.batch_size = 20;
  c.max_epochs = 30;
  c.patience = 5;
  c.optimizer.learn_rate = 0.01;
  return c;
}

}  // namespace

TEST_CASE("init_model: Glorot bounds, zero biases, seeded") {
  const auto a = init_model(40, 12, 6, Activation::relu, 5);
  const auto b = init_model(40, 12, 6, Activation::relu, 5);
  const auto c = init_model(40, 12, 6, Activation::relu, 6);
  CHECK(a.params == b.params);
  CHECK_FALSE(a.params == c.params);
  const double l1 = std::sqrt(6.0 / (40 + 12));
  const double l2 = std::sqrt(6.0 / (12 + 6));
  CHECK(a.params.w1.cwiseAbs().maxCoeff() <= l1);
  CHECK(a.params.w2.cwiseAbs().maxCoeff() <= l2);
  CHECK(a.params.b1.isZero());
  CHECK(a.params.b2.isZero());
  CHECK(a.input_size() == 40);
  CHECK(a.hidden_size() == 12);
  CHECK(a.num_classes() == 6);
}

TEST_CASE("forward pass matches the oracle on the toy network") {
  const auto x = toy_row();
  SUBCASE("relu") {
    const auto pass = forward(toy_model(Activation::relu), x);
    CHECK(pass.hidden(0, 0) == doctest::Approx(0.2957738033247041).epsilon(1e-12));
    CHECK(pass.hidden(0, 1) == doctest::Approx(0.26577380332470409).epsilon(1e-12));
    CHECK(pass.hidden(0, 2) == doctest::Approx(0.23412414523193151).epsilon(1e-12));
    CHECK(pass.probs(0, 0) == doctest::Approx(0.56530528581293309).epsilon(1e-12));
    CHECK(pass.probs(0, 1) == doctest::Approx(0.43469471418706691).epsilon(1e-12));
  }
  SUBCASE("tanh") {
    const auto pass = forward(toy_model(Activation::tanh), x);
    CHECK(pass.hidden(0, 0) == doctest::Approx(0.28744031936813342).epsilon(1e-12));
    CHECK(pass.hidden(0, 1) == doctest::Approx(0.25968798851856447).epsilon(1e-12));
    CHECK(pass.hidden(0, 2) == doctest::Approx(0.22993813305196799).epsilon(1e-12));
    CHECK(pass.probs(0, 0) == doctest::Approx(0.5639962043445971).epsilon(1e-12));
    CHECK(pass.probs(0, 1) == doctest::Approx(0.4360037956554029).epsilon(1e-12));
  }
}

TEST_CASE("softmax rows are distributions even for huge logits") {
  auto m = toy_model();
  m.params.b2 << 800.0, -800.0;
  const auto pass = forward(m, toy_row());
  CHECK(std::isfinite(pass.probs(0, 0)));
  CHECK(pass.probs.row(0).sum() == doctest::Approx(1.0));

  Rng rng(3);
  const auto model = init_model(30, 8, 5, Activation::tanh, 1);
  const auto x = random_features(rng, 50, 30);
  const auto many = forward(model, x);
  for (Eigen::Index r = 0; r < many.probs.rows(); ++r) {
    CHECK(many.probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(many.probs.row(r).minCoeff() >= 0.0);
  }
}

TEST_CASE("uniform output gives loss ln C") {
  auto model = init_model(10, 4, 7, Activation::relu, 2);
  model.params.w2.setZero();
  Rng rng(1);
  const auto x = random_features(rng, 6, 10);
  std::vector<std::size_t> rows(6);
  std::iota(rows.begin(), rows.end(), 0);
  const std::vector<std::uint32_t> labels{0, 1, 2, 3, 4, 5};
  const auto out = loss_and_grads(model, x, rows, labels, 0.0);
  CHECK(out.loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central differences") {
  for (const auto act : {Activation::relu, Activation::tanh}) {
    Rng rng(11);
    auto model = init_model(8, 5, 4, act, 9);
    // Keep relu inputs away from the kink.
    model.params.b1.setConstant(0.3);
    const auto x = random_features(rng, 7, 8);
    std::vector<std::size_t> rows{0, 2, 3, 6};
    const std::vector<std::uint32_t> labels{1, 0, 3, 3};
    const double l2 = 0.05;
    auto analytic = loss_and_grads(model, x, rows, labels, l2).grads;

    auto probe = model;
    const auto ptrs = all_params(probe.params);
    const auto grads = all_params(analytic);
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
      const double saved = *ptrs[i];
      *ptrs[i] = saved + h;
      const double up = loss_and_grads(probe, x, rows, labels, l2).loss;
      *ptrs[i] = saved - h;
      const double down = loss_and_grads(probe, x, rows, labels, l2).loss;
      *ptrs[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max(1e-8, std::abs(numeric) + std::abs(*grads[i]));
      worst = std::max(worst, std::abs(numeric - *grads[i]) / denom);
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("loss is linear in the l2 coefficient") {
  const auto model = init_model(6, 3, 3, Activation::relu, 4);
  Rng rng(2);
  const auto x = random_features(rng, 4, 6);
  const std::vector<std::size_t> rows{0, 1, 2, 3};
  const std::vector<std::uint32_t> labels{0, 1, 2, 0};
  const double base = loss_and_grads(model, x, rows, labels, 0.0).loss;
  const double norms = model.params.w1.squaredNorm() + model.params.w2.squaredNorm();
  for (const double l2 : {1e-5, 0.1, 2.0}) {
    CHECK(loss_and_grads(model, x, rows, labels, l2).loss == doctest::Approx(base + 0.5 * l2 * norms).epsilon(1e-12));
  }
}

TEST_CASE("non-finite parameters raise E_NUMERIC") {
  auto model = toy_model();
  model.params.w2(0, 0) = std::nan("");
  const std::vector<std::size_t> rows{0};
  const std::vector<std::uint32_t> labels{0};
  try {
    loss_and_grads(model, toy_row(), rows, labels, 0.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::numeric);
  }
  CHECK_THROWS_AS(model.check_finite(), Error);
}

TEST_CASE("Adam: the first step moves each weight by the learning rate") {
  OptimizerConfig cfg;
  cfg.learn_rate = 0.01;
  std::vector<double> theta{0.5, -1.5, 3.0};
  const std::vector<double> grad{0.2, -0.1, 1e-3};
  std::vector<double> m(3, 0.0), v(3, 0.0);
  adam_update_block(theta, grad, m, v, 1, cfg);
  CHECK(theta[0] == doctest::Approx(0.49).epsilon(1e-6));
  CHECK(theta[1] == doctest::Approx(-1.49).epsilon(1e-6));
  CHECK(theta[2] == doctest::Approx(2.99).epsilon(1e-4));
}

TEST_CASE("Adam: three steps match the oracle") {
  OptimizerConfig cfg;
  cfg.learn_rate = 0.01;
  std::vector<double> theta{0.5, -1.5};
  std::vector<double> m(2, 0.0), v(2, 0.0);
  const std::vector<std::vector<double>> grads{{0.2, -0.1}, {-0.4, 0.3}, {0.1, 0.05}};
  const std::vector<std::vector<double>> expected{{0.49000000049999997, -1.4900000009999999},
                                                  {0.4936610356546037, -1.4949418991120066},
                                                  {0.49502794223344404, -1.4997132706742121}};
  for (std::size_t t = 0; t < 3; ++t) {
    adam_update_block(theta, grads[t], m, v, t + 1, cfg);
    CHECK(theta[0] == doctest::Approx(expected[t][0]).epsilon(1e-14));
    CHECK(theta[1] == doctest::Approx(expected[t][1]).epsilon(1e-14));
  }
}

TEST_CASE("AdaMax first step also has magnitude lr") {
  OptimizerConfig cfg;
  cfg.kind = Optimizer::adamax;
  cfg.learn_rate = 0.002;
  std::vector<double> theta{1.0, 1.0};
  const std::vector<double> grad{0.5, -2.0};
  std::vector<double> m(2, 0.0), v(2, 0.0);
  adam_update_block(theta, grad, m, v, 1, cfg);
  CHECK(theta[0] == doctest::Approx(0.998).epsilon(1e-7));
  CHECK(theta[1] == doctest::Approx(1.002).epsilon(1e-7));
}

TEST_CASE("argmax and most_frequent_class take the lowest index on ties") {
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  CHECK(argmax(std::vector<double>{0.5}) == 0);
  CHECK(most_frequent_class(std::vector<std::uint32_t>{2, 1, 2, 1}, 3) == 1);
}

TEST_CASE("predict maps the argmax to its representative") {
  std::vector<GeoPoint> points{{0, 0}, {0, 0.1}, {10, 10}, {10, 10.1}};
  const auto d = fit_kdtree(points, 2);
  REQUIRE(d.num_classes() == 2);
  auto model = toy_model();
  model.meta.fallback_class = 1;
  FeatureMatrix x = toy_row();
  x.append_row({});
  const auto pred = predict(model, x, d);
  REQUIRE(pred.classes.size() == 2);
  CHECK(pred.classes[0] == 0);
  CHECK(pred.points[0] == d.representative(0));
  CHECK(pred.classes[1] == 1);
  CHECK(pred.points[1] == d.representative(1));

  const auto three = fit_kdtree(std::vector<GeoPoint>{{0, 0}, {5, 5}, {9, 9}}, 3);
  CHECK_THROWS_AS(predict(model, x, three), Error);
}

TEST_CASE("argmax is invariant under positive scaling and shifts of the logits") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(1 + uniform_index(rng, 12));
    for (auto& z : logits) z = -5 + 10 * uniform01(rng);
    const auto base = argmax(logits);
    const double a = 0.1 + 5 * uniform01(rng);
    const double b = -3 + 6 * uniform01(rng);
    auto moved = logits;
    for (auto& z : moved) z = a * z + b;
    CHECK(argmax(moved) == base);
  }
}

TEST_CASE("training configuration validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate(1000));
  CHECK_THROWS_AS(c.validate(10), Error);
  c.l2 = -1;
  CHECK_THROWS_AS(c.validate(1000), Error);
}

TEST_CASE("training on the synthetic corpus") {
  const auto s = synthetic_setup();
  const auto config = small_config();
  std::vector<EpochStats> seen;
  const auto result = train(s.x_train, s.y_train, s.x_dev, s.dev_gold, s.discretiser, config,
                            [&](const EpochStats& e) { seen.push_back(e); });

  SUBCASE("callbacks mirror the curve") {
    REQUIRE(seen.size() == result.curve.size());
    for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i].epoch == i + 1);
  }
  SUBCASE("the returned snapshot has the lowest dev median") {
    double best = result.curve.front().dev_median_km;
    for (const auto& e : result.curve) best = std::min(best, e.dev_median_km);
    CHECK(result.curve[result.best_epoch - 1].dev_median_km == best);
    const auto dev = evaluate(predict(result.model, s.x_dev, s.discretiser).points, s.dev_gold);
    CHECK(dev.median_km == best);
  }
  SUBCASE("training loss falls") {
    CHECK(result.curve.back().train_loss < result.curve.front().train_loss);
  }
  SUBCASE("test users land near their region") {
    const auto report = evaluate(predict(result.model, s.x_test, s.discretiser).points, s.test_gold);
    CHECK(report.acc_at_161 >= 90.0);
  }
  SUBCASE("same seed, same model") {
    const auto again = train(s.x_train, s.y_train, s.x_dev, s.dev_gold, s.discretiser, config);
    CHECK(again.model.params == result.model.params);
    CHECK(again.best_epoch == result.best_epoch);
  }
  SUBCASE("snapshot weights are exactly representable as float32") {
    auto copy = result.model.params;
    round_to_float(copy);
    CHECK(copy == result.model.params);
  }
}

TEST_CASE("patience 0 runs exactly one epoch") {
  const auto s = synthetic_setup();
  auto config = small_config();
  config.patience = 0;
  const auto result = train(s.x_train, s.y_train, s.x_dev, s.dev_gold, s.discretiser, config);
  CHECK(result.curve.size() == 1);
  CHECK(result.best_epoch == 1);
}

TEST_CASE("early stopping halts once patience runs out") {
  const auto s = synthetic_setup();
  auto config = small_config();
  config.max_epochs = 200;
  config.patience = 2;
  const auto result = train(s.x_train, s.y_train, s.x_dev, s.dev_gold, s.discretiser, config);
  CHECK(result.curve.size() <= result.best_epoch + 2);
  if (result.curve.size() < config.max_epochs) CHECK(result.curve.size() == result.best_epoch + 2);
}

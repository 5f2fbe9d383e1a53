#include "geoloc/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "geoloc/error.hpp"
#include "geoloc/random.hpp"

namespace geoloc {

std::string_view activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw Error(ErrorCode::config, "unknown activation '" + std::string(name) + "'");
}

std::string_view optimizer_name(Optimizer o) { return o == Optimizer::adam ? "adam" : "adamax"; }

Optimizer parse_optimizer(std::string_view name) {
  if (name == "adam") return Optimizer::adam;
  if (name == "adamax") return Optimizer::adamax;
  throw Error(ErrorCode::config, "unknown optimizer '" + std::string(name) + "'");
}

MlpParams MlpParams::zeros(std::size_t inputs, std::size_t hidden, std::size_t classes) {
  const auto v = static_cast<Eigen::Index>(inputs);
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto c = static_cast<Eigen::Index>(classes);
  return MlpParams{Matrix::Zero(v, h), Vector::Zero(h), Matrix::Zero(h, c), Vector::Zero(c)};
}

bool operator==(const MlpParams& a, const MlpParams& b) {
  const auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           std::equal(x.data(), x.data() + x.size(), y.data());
  };
  return same(a.w1, b.w1) && same(a.b1, b.b1) && same(a.w2, b.w2) && same(a.b2, b.b2);
}

void MlpModel::check_finite() const {
  if (!params.w1.allFinite()) throw Error(ErrorCode::numeric, "non-finite value in W1");
  if (!params.b1.allFinite()) throw Error(ErrorCode::numeric, "non-finite value in b1");
  if (!params.w2.allFinite()) throw Error(ErrorCode::numeric, "non-finite value in W2");
  if (!params.b2.allFinite()) throw Error(ErrorCode::numeric, "non-finite value in b2");
}

MlpModel init_model(std::size_t inputs, std::size_t hidden, std::size_t classes,
                    Activation activation, std::uint64_t seed) {
  if (inputs < 1 || hidden < 1 || classes < 1) {
    throw Error(ErrorCode::config, "model dimensions must all be >= 1");
  }
  MlpModel model;
  model.activation = activation;
  model.params = MlpParams::zeros(inputs, hidden, classes);
  Rng rng(seed);
  const auto glorot = [&rng](Matrix& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * uniform01(rng) - 1.0) * limit;
  };
  glorot(model.params.w1);
  glorot(model.params.w2);
  return model;
}

double activate(Activation a, double z) {
  return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

namespace {

void check_input(const MlpModel& model, const FeatureMatrix& x) {
  if (x.cols != model.input_size()) {
    throw Error(ErrorCode::dimension, "feature matrix has " + std::to_string(x.cols) +
                                          " columns, model expects " +
                                          std::to_string(model.input_size()));
  }
}

void softmax_rows(Matrix& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

}  // namespace

ForwardPass forward(const MlpModel& model, const FeatureMatrix& x,
                    std::span<const std::size_t> rows) {
  check_input(model, x);
  const auto& p = model.params;
  const auto batch = static_cast<Eigen::Index>(rows.size());
  ForwardPass out;
  out.pre_hidden.resize(batch, p.w1.cols());
  for (Eigen::Index r = 0; r < batch; ++r) {
    const std::size_t row = rows[static_cast<std::size_t>(r)];
    if (row >= x.rows()) throw Error(ErrorCode::dimension, "row index out of range");
    auto z = out.pre_hidden.row(r);
    z = p.b1.transpose();
    const auto cols = x.row_cols(row);
    const auto vals = x.row_values(row);
    for (std::size_t k = 0; k < cols.size(); ++k) z += vals[k] * p.w1.row(cols[k]);
  }
  out.hidden = out.pre_hidden.unaryExpr([a = model.activation](double z) { return activate(a, z); });
  out.probs = out.hidden * p.w2;
  out.probs.rowwise() += p.b2.transpose();
  softmax_rows(out.probs);
  return out;
}

ForwardPass forward(const MlpModel& model, const FeatureMatrix& x) {
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return forward(model, x, rows);
}

LossAndGrads loss_and_grads(const MlpModel& model, const FeatureMatrix& x,
                            std::span<const std::size_t> rows,
                            std::span<const std::uint32_t> labels, double l2) {
  if (rows.size() != labels.size()) {
    throw Error(ErrorCode::dimension, "batch rows and labels differ in length");
  }
  if (rows.empty()) throw Error(ErrorCode::data, "empty batch");
  const auto& p = model.params;
  const auto classes = model.num_classes();
  for (const auto label : labels) {
    if (label >= classes) {
      throw Error(ErrorCode::data, "label " + std::to_string(label) + " outside 0.." +
                                       std::to_string(classes - 1));
    }
  }

  check_input(model, x);
  const auto batch = static_cast<Eigen::Index>(rows.size());
  Matrix pre(batch, p.w1.cols());
  for (Eigen::Index r = 0; r < batch; ++r) {
    const std::size_t row = rows[static_cast<std::size_t>(r)];
    auto z = pre.row(r);
    z = p.b1.transpose();
    const auto cols = x.row_cols(row);
    const auto vals = x.row_values(row);
    for (std::size_t k = 0; k < cols.size(); ++k) z += vals[k] * p.w1.row(cols[k]);
  }
  const Matrix hidden = pre.unaryExpr([a = model.activation](double z) { return activate(a, z); });
  Matrix logits = hidden * p.w2;
  logits.rowwise() += p.b2.transpose();

  LossAndGrads out;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Matrix dlogits(batch, logits.cols());
  double ce = 0.0;
  for (Eigen::Index r = 0; r < batch; ++r) {
    const auto row = logits.row(r);
    const double max = row.maxCoeff();
    const double lse = max + std::log((row.array() - max).exp().sum());
    const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(r)]);
    ce += lse - row(label);
    dlogits.row(r) = (row.array() - lse).exp().matrix();
    dlogits(r, label) -= 1.0;
  }
  dlogits *= inv_batch;
  const double penalty = 0.5 * l2 * (p.w1.squaredNorm() + p.w2.squaredNorm());
  out.loss = ce * inv_batch + penalty;

  out.grads.w2.noalias() = hidden.transpose() * dlogits;
  out.grads.w2 += l2 * p.w2;
  out.grads.b2 = dlogits.colwise().sum().transpose();

  Matrix dhidden = dlogits * p.w2.transpose();
  if (model.activation == Activation::relu) {
    dhidden.array() *= (pre.array() > 0.0).cast<double>();
  } else {
    dhidden.array() *= 1.0 - hidden.array().square();
  }
  out.grads.b1 = dhidden.colwise().sum().transpose();
  out.grads.w1 = l2 * p.w1;
  for (Eigen::Index r = 0; r < batch; ++r) {
    const std::size_t row = rows[static_cast<std::size_t>(r)];
    const auto cols = x.row_cols(row);
    const auto vals = x.row_values(row);
    for (std::size_t k = 0; k < cols.size(); ++k) out.grads.w1.row(cols[k]) += vals[k] * dhidden.row(r);
  }

  if (!std::isfinite(out.loss)) throw Error(ErrorCode::numeric, "loss is not finite");
  if (!out.grads.w1.allFinite()) throw Error(ErrorCode::numeric, "non-finite gradient in W1");
  if (!out.grads.b1.allFinite()) throw Error(ErrorCode::numeric, "non-finite gradient in b1");
  if (!out.grads.w2.allFinite()) throw Error(ErrorCode::numeric, "non-finite gradient in W2");
  if (!out.grads.b2.allFinite()) throw Error(ErrorCode::numeric, "non-finite gradient in b2");
  return out;
}

AdamState AdamState::zeros_like(const MlpParams& params) {
  const auto zero = MlpParams::zeros(static_cast<std::size_t>(params.w1.rows()),
                                     static_cast<std::size_t>(params.w1.cols()),
                                     static_cast<std::size_t>(params.w2.cols()));
  return AdamState{zero, zero, 0};
}

void adam_update_block(std::span<double> param, std::span<const double> grad,
                       std::span<double> m, std::span<double> v, std::uint64_t t,
                       const OptimizerConfig& config) {
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t));
  if (config.kind == Optimizer::adam) {
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      param[i] -= config.learn_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  } else {
    const double step = config.learn_rate / correction1;
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = std::max(b2 * v[i], std::abs(grad[i]));
      param[i] -= step * m[i] / (v[i] + config.epsilon);
    }
  }
}

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads,
               const OptimizerConfig& config) {
  ++state.t;
  const auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
      throw Error(ErrorCode::dimension, "optimizer state shape mismatch");
    }
    const auto n = static_cast<std::size_t>(p.size());
    adam_update_block({p.data(), n}, {g.data(), n}, {m.data(), n}, {v.data(), n}, state.t, config);
  };
  update(params.w1, grads.w1, state.m.w1, state.v.w1);
  update(params.b1, grads.b1, state.m.b1, state.v.b1);
  update(params.w2, grads.w2, state.m.w2, state.v.w2);
  update(params.b2, grads.b2, state.m.b2, state.v.b2);
}

void TrainConfig::validate(std::size_t n_train) const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::config, what); };
  if (hidden_size < 1) fail("hidden_size must be >= 1");
  if (!(l2 >= 0.0)) fail("l2 must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (batch_size > n_train) {
    fail("batch_size " + std::to_string(batch_size) + " exceeds " + std::to_string(n_train) +
         " training users");
  }
  if (!(optimizer.learn_rate > 0.0)) fail("learn_rate must be > 0");
  if (!(optimizer.beta1 > 0.0 && optimizer.beta1 < 1.0)) fail("beta1 must lie in (0,1)");
  if (!(optimizer.beta2 > 0.0 && optimizer.beta2 < 1.0)) fail("beta2 must lie in (0,1)");
  if (!(optimizer.epsilon > 0.0)) fail("epsilon must be > 0");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
}

void round_to_float(MlpParams& params) {
  const auto round = [](auto& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      block.data()[i] = static_cast<double>(static_cast<float>(block.data()[i]));
    }
  };
  round(params.w1);
  round(params.b1);
  round(params.w2);
  round(params.b2);
}

std::uint32_t argmax(std::span<const double> row) {
  std::uint32_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = static_cast<std::uint32_t>(i);
  }
  return best;
}

std::uint32_t most_frequent_class(std::span<const std::uint32_t> labels, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (const auto label : labels) {
    if (label < classes) ++counts[label];
  }
  return static_cast<std::uint32_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

Predictions predict(const MlpModel& model, const FeatureMatrix& x, const Discretiser& discretiser) {
  if (discretiser.num_classes() != model.num_classes()) {
    throw Error(ErrorCode::dimension, "model has " + std::to_string(model.num_classes()) +
                                          " classes, discretiser " +
                                          std::to_string(discretiser.num_classes()));
  }
  check_input(model, x);
  Predictions out;
  out.probs.resize(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(model.num_classes()));
  out.classes.reserve(x.rows());
  out.points.reserve(x.rows());
  constexpr std::size_t kChunk = 2048;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < x.rows(); start += kChunk) {
    const std::size_t end = std::min(x.rows(), start + kChunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const auto pass = forward(model, x, rows);
    out.probs.middleRows(static_cast<Eigen::Index>(start), pass.probs.rows()) = pass.probs;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto row = pass.probs.row(static_cast<Eigen::Index>(r));
      const std::uint32_t cls = x.row_empty(start + r)
                                    ? model.meta.fallback_class
                                    : argmax({row.data(), static_cast<std::size_t>(row.size())});
      out.classes.push_back(cls);
      out.points.push_back(discretiser.representative(cls));
    }
  }
  return out;
}

TrainResult train(const FeatureMatrix& x_train, std::span<const std::uint32_t> y_train,
                  const FeatureMatrix& x_dev, std::span<const GeoPoint> dev_gold,
                  const Discretiser& discretiser, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  const std::size_t n = x_train.rows();
  if (y_train.size() != n) throw Error(ErrorCode::dimension, "training labels differ from rows");
  if (x_dev.rows() == 0 || x_dev.rows() != dev_gold.size()) {
    throw Error(ErrorCode::dimension, "dev features and gold points must be nonempty and aligned");
  }
  if (x_dev.cols != x_train.cols) throw Error(ErrorCode::dimension, "dev/train column mismatch");
  config.validate(n);

  const std::size_t classes = discretiser.num_classes();
  MlpModel model = init_model(x_train.cols, config.hidden_size, classes, config.activation, config.seed);
  model.meta.fallback_class = most_frequent_class(y_train, classes);
  AdamState state = AdamState::zeros_like(model.params);

  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::uint32_t> batch_labels;

  TrainResult result;
  result.model = model;
  double best_median = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::span<const std::size_t> rows(order.data() + start,
                                              std::min(config.batch_size, n - start));
      batch_labels.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) batch_labels[i] = y_train[rows[i]];
      const auto where = " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ")";
      try {
        const auto step = loss_and_grads(model, x_train, rows, batch_labels, config.l2);
        loss_sum += step.loss * static_cast<double>(rows.size());
        adam_step(state, model.params, step.grads, config.optimizer);
        model.check_finite();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::numeric) throw;
        throw Error(ErrorCode::numeric, std::string("training diverged: ") + e.what() + where);
      }
    }

    MlpModel candidate = model;
    round_to_float(candidate.params);
    const auto dev_pred = predict(candidate, x_dev, discretiser);
    const auto report = evaluate(dev_pred.points, dev_gold);
    const EpochStats stats{epoch, loss_sum / static_cast<double>(n), report.median_km, report.acc_at_161};
    result.curve.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (report.median_km < best_median) {
      best_median = report.median_km;
      result.model = std::move(candidate);
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= config.patience) break;
  }
  return result;
}

}  // namespace geoloc

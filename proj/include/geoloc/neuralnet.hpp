#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoloc/corpus.hpp"
#include "geoloc/discretise.hpp"
#include "geoloc/geodesy.hpp"

namespace geoloc {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh };
enum class Optimizer { adam, adamax };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);
std::string_view optimizer_name(Optimizer o);
Optimizer parse_optimizer(std::string_view name);

/// Parameter blocks of the network; gradients and optimiser moments use the
/// same shape.
struct MlpParams {
  Matrix w1;  // V x H
  Vector b1;  // H
  Matrix w2;  // H x C
  Vector b2;  // C

  static MlpParams zeros(std::size_t inputs, std::size_t hidden, std::size_t classes);
  friend bool operator==(const MlpParams& a, const MlpParams& b);
};

struct ModelMeta {
  std::uint64_t vocab_hash = 0;
  std::uint64_t discretiser_hash = 0;
  std::uint32_t fallback_class = 0;  // most frequent training class
  std::map<std::string, std::string> config;
};

struct MlpModel {
  MlpParams params;
  Activation activation = Activation::relu;
  ModelMeta meta;

  std::size_t input_size() const { return static_cast<std::size_t>(params.w1.rows()); }
  std::size_t hidden_size() const { return static_cast<std::size_t>(params.w1.cols()); }
  std::size_t num_classes() const { return static_cast<std::size_t>(params.w2.cols()); }

  /// Throws E_NUMERIC naming the first block holding NaN or Inf.
  void check_finite() const;
};

/// Glorot-uniform weights, zero biases.
MlpModel init_model(std::size_t inputs, std::size_t hidden, std::size_t classes,
                    Activation activation, std::uint64_t seed);

double activate(Activation a, double z);

struct ForwardPass {
  Matrix pre_hidden;  // X W1 + b1
  Matrix hidden;      // act(pre_hidden)
  Matrix probs;       // softmax(hidden W2 + b2)
};

/// Forward pass over the listed rows of X.
ForwardPass forward(const MlpModel& model, const FeatureMatrix& x,
                    std::span<const std::size_t> rows);
ForwardPass forward(const MlpModel& model, const FeatureMatrix& x);

struct LossAndGrads {
  double loss = 0.0;
  MlpParams grads;
};

/// Mean cross-entropy plus (l2/2)(|W1|^2 + |W2|^2); biases are unpenalised.
LossAndGrads loss_and_grads(const MlpModel& model, const FeatureMatrix& x,
                            std::span<const std::size_t> rows,
                            std::span<const std::uint32_t> labels, double l2);

struct OptimizerConfig {
  Optimizer kind = Optimizer::adam;
  double learn_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  MlpParams m;
  MlpParams v;  // second moment (Adam) or infinity norm (AdaMax)
  std::uint64_t t = 0;

  static AdamState zeros_like(const MlpParams& params);
};

/// One update of a flat parameter block at (already incremented) step t.
void adam_update_block(std::span<double> param, std::span<const double> grad,
                       std::span<double> m, std::span<double> v, std::uint64_t t,
                       const OptimizerConfig& config);

/// Increments t, then updates every block.
void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads,
               const OptimizerConfig& config);

struct TrainConfig {
  std::size_t hidden_size = 896;
  double l2 = 1e-5;
  std::size_t batch_size = 100;
  OptimizerConfig optimizer;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  Activation activation = Activation::relu;

  void validate(std::size_t n_train) const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_median_km = 0.0;
  double dev_acc161 = 0.0;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochStats> curve;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Minibatch training with dev-median model selection and early stopping.
/// The returned snapshot is rounded to float32 so it survives persistence
/// unchanged.
TrainResult train(const FeatureMatrix& x_train, std::span<const std::uint32_t> y_train,
                  const FeatureMatrix& x_dev, std::span<const GeoPoint> dev_gold,
                  const Discretiser& discretiser, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct Predictions {
  std::vector<std::uint32_t> classes;
  std::vector<GeoPoint> points;
  Matrix probs;
};

/// Argmax class per row (ties to the lowest id) mapped to its representative
/// point. Rows without features fall back to the model's most frequent class.
Predictions predict(const MlpModel& model, const FeatureMatrix& x, const Discretiser& discretiser);

/// Lowest index of the maximum entry.
std::uint32_t argmax(std::span<const double> row);

std::uint32_t most_frequent_class(std::span<const std::uint32_t> labels, std::size_t classes);

void round_to_float(MlpParams& params);

}  // namespace geoloc

#pragma once

#include "geoloc/commands.hpp"
#include "support/synthetic.hpp"

namespace geoloc::testing {

/// Small, quick settings for the synthetic corpus.
inline RunConfig small_run_config() {
  RunConfig c;
  c.k = 4;
  c.min_df = 2;
  c.train.hidden_size = 16;
  c.train.batch_size = 20;
  c.train.max_epochs = 20;
  c.train.patience = 4;
  c.train.optimizer.learn_rate = 0.01;
  return c;
}

/// One trained container shared by the tests of a binary.
inline const TrainOutcome& trained_synthetic() {
  static const TrainOutcome outcome = [] {
    const auto corpus = make_synthetic();
    return train_pipeline(corpus.train, corpus.dev, small_run_config());
  }();
  return outcome;
}

}  // namespace geoloc::testing

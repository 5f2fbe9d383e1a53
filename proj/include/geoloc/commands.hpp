#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geoloc/container.hpp"
#include "geoloc/corpus.hpp"
#include "geoloc/discretise.hpp"
#include "geoloc/embeddings.hpp"
#include "geoloc/geodesy.hpp"
#include "geoloc/neuralnet.hpp"

namespace geoloc {

/// Flat key=value run configuration. A `dataset` key selects the tuned
/// defaults of a named corpus (see the presets in commands.cpp) before other
/// keys apply.
struct RunConfig {
  std::string dataset = "custom";
  std::filesystem::path train_path;
  std::filesystem::path dev_path;
  std::filesystem::path model_path;
  std::filesystem::path curve_path;
  std::filesystem::path stopwords_path;  // empty: built-in list
  DiscretiserKind discretiser = DiscretiserKind::kmeans;
  std::size_t k = 32;
  std::size_t kmeans_max_iter = 100;
  bool kmeans_haversine = false;
  std::size_t min_df = 10;
  TermWeighting weighting = TermWeighting::counts;
  TrainConfig train;

  static RunConfig from_pairs(const std::map<std::string, std::string>& pairs);
  /// File pairs first, then `overrides` on top.
  static RunConfig from_file(const std::filesystem::path& path,
                             const std::map<std::string, std::string>& overrides = {});

  /// Training hyperparameters as persisted in the model manifest.
  std::map<std::string, std::string> snapshot() const;
};

std::map<std::string, std::string> parse_key_values(std::string_view text);

struct TrainOutcome {
  ModelContainer container;
  std::vector<EpochStats> curve;
  std::size_t best_epoch = 0;
  GeoEvalReport dev_report;
};

/// Corpus -> vocabulary -> discretiser -> MLP. Writes the model and curve
/// files when their paths are set. Errors carry the failing stage name.
TrainOutcome cmd_train(const RunConfig& config, std::ostream& log);

/// Same pipeline over in-memory records; nothing is written.
TrainOutcome train_pipeline(const std::vector<UserRecord>& train_records,
                            const std::vector<UserRecord>& dev_records, const RunConfig& config,
                            std::ostream* log = nullptr);

/// `epoch \t train_loss \t dev_median_km \t dev_acc161` lines.
std::string curve_tsv(const std::vector<EpochStats>& curve);

struct EvaluateOptions {
  std::filesystem::path model_path;
  std::filesystem::path test_path;
  std::optional<std::filesystem::path> groups_path;   // user_id \t group
  std::optional<std::filesystem::path> group_tsv_path;
  std::optional<std::filesystem::path> geojson_path;  // per-user error map
  std::optional<std::filesystem::path> report_path;   // metric \t value
};

struct UserPrediction {
  std::string user_id;
  GeoPoint gold;
  GeoPoint predicted;
  std::uint32_t cls = 0;
};

struct EvaluateOutcome {
  GeoEvalReport report;
  std::vector<UserPrediction> users;
};

EvaluateOutcome cmd_evaluate(const EvaluateOptions& options);
EvaluateOutcome evaluate_records(const ModelContainer& container,
                                 const std::vector<UserRecord>& records,
                                 const std::map<std::string, std::string>* groups = nullptr);

struct NnOptions {
  std::size_t n = 10;
  bool include_query = false;
  bool pre_activation = false;
  Similarity similarity = Similarity::cosine;
};

struct NnOutcome {
  std::vector<Neighbour> neighbours;
  bool all_oov = false;
};

/// Query terms are tokenised; they are excluded from the results unless
/// include_query is set.
NnOutcome nearest_for_query(const ModelContainer& container, const std::vector<std::string>& query,
                            const NnOptions& options);

struct DialectEvalOptions {
  std::filesystem::path model_path;
  std::filesystem::path dareds_path;
  std::filesystem::path city_map_path;
  std::filesystem::path freq_path;
  std::size_t cutoff = 50000;
  std::vector<double> k_percents = default_recall_grid();
  bool pre_activation = false;
  Similarity similarity = Similarity::cosine;
  std::optional<std::filesystem::path> table_path;  // external term->vector table instead of the model
};

std::vector<RecallPoint> cmd_dialect_eval(const DialectEvalOptions& options);

/// Class hulls and representative points as a GeoJSON FeatureCollection.
std::string discretiser_geojson(const Discretiser& discretiser);
/// One point per user, bucketed by error.
std::string error_map_geojson(const std::vector<UserPrediction>& users);

/// `user_id \t class:prob,...` with the `top` most probable classes.
std::string priors_tsv(const ModelContainer& container, const std::vector<UserRecord>& records,
                       std::size_t top = 10);

}  // namespace geoloc

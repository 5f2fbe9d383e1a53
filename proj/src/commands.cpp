#include "geoloc/commands.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "geoloc/error.hpp"
#include "geoloc/text_io.hpp"

namespace geoloc {

namespace {

Error with_stage(std::string_view stage, const Error& e) {
  return Error(e.code(), std::string(stage) + ": " + e.what());
}

template <typename Fn>
auto staged(std::string_view stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw with_stage(stage, e);
  }
}

std::size_t config_size(const std::string& key, const std::string& value) {
  const auto v = parse_int(value);
  if (!v || *v < 0) throw Error(ErrorCode::config, key + ": expected a nonnegative integer, got '" + value + "'");
  return static_cast<std::size_t>(*v);
}

double config_real(const std::string& key, const std::string& value) {
  const auto v = parse_double(value);
  if (!v) throw Error(ErrorCode::config, key + ": expected a number, got '" + value + "'");
  return *v;
}

bool config_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw Error(ErrorCode::config, key + ": expected true/false, got '" + value + "'");
}

void apply_dataset_preset(RunConfig& config, const std::string& dataset) {
  struct Preset {
    std::size_t k;
    double l2;
    std::size_t hidden;
    std::size_t batch;
  };
  static const std::map<std::string, Preset> presets{
      {"geotext", {32, 1e-5, 896, 100}},
      {"twitter-us", {256, 1e-6, 2048, 10000}},
      {"twitter-world", {930, 1e-6, 3720, 10000}},
  };
  config.dataset = dataset;
  const auto it = presets.find(dataset);
  if (it == presets.end()) {
    if (dataset != "custom") throw Error(ErrorCode::config, "unknown dataset preset '" + dataset + "'");
    return;
  }
  config.k = it->second.k;
  config.train.l2 = it->second.l2;
  config.train.hidden_size = it->second.hidden;
  config.train.batch_size = it->second.batch;
}

std::vector<GeoPoint> gold_points(const std::vector<UserRecord>& records) {
  std::vector<GeoPoint> points;
  points.reserve(records.size());
  for (const auto& r : records) points.emplace_back(r.lat, r.lon);
  return points;
}

TermWeighting model_weighting(const ModelContainer& container) {
  const auto& config = container.model.meta.config;
  const auto it = config.find("weighting");
  return it != config.end() && it->second == "binary" ? TermWeighting::binary : TermWeighting::counts;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> pairs;
  std::size_t line_no = 0;
  for (const std::string_view raw : split_lines(text)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::config, "config line " + std::to_string(line_no) + ": expected key=value");
    }
    pairs[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return pairs;
}

RunConfig RunConfig::from_pairs(const std::map<std::string, std::string>& pairs) {
  RunConfig config;
  if (const auto it = pairs.find("dataset"); it != pairs.end()) apply_dataset_preset(config, it->second);
  for (const auto& [key, value] : pairs) {
    auto& t = config.train;
    if (key == "dataset") continue;
    else if (key == "train") config.train_path = value;
    else if (key == "dev") config.dev_path = value;
    else if (key == "model") config.model_path = value;
    else if (key == "curve") config.curve_path = value;
    else if (key == "stopwords") config.stopwords_path = value;
    else if (key == "discretiser") config.discretiser = parse_discretiser_kind(value);
    else if (key == "k") config.k = config_size(key, value);
    else if (key == "kmeans_max_iter") config.kmeans_max_iter = config_size(key, value);
    else if (key == "kmeans_haversine") config.kmeans_haversine = config_bool(key, value);
    else if (key == "min_df") config.min_df = config_size(key, value);
    else if (key == "weighting") {
      if (value != "counts" && value != "binary") throw Error(ErrorCode::config, "weighting: counts or binary");
      config.weighting = value == "binary" ? TermWeighting::binary : TermWeighting::counts;
    }
    else if (key == "hidden_size") t.hidden_size = config_size(key, value);
    else if (key == "l2") t.l2 = config_real(key, value);
    else if (key == "batch_size") t.batch_size = config_size(key, value);
    else if (key == "learn_rate") t.optimizer.learn_rate = config_real(key, value);
    else if (key == "beta1") t.optimizer.beta1 = config_real(key, value);
    else if (key == "beta2") t.optimizer.beta2 = config_real(key, value);
    else if (key == "epsilon") t.optimizer.epsilon = config_real(key, value);
    else if (key == "optimizer") t.optimizer.kind = parse_optimizer(value);
    else if (key == "max_epochs") t.max_epochs = config_size(key, value);
    else if (key == "patience") t.patience = config_size(key, value);
    else if (key == "seed") t.seed = config_size(key, value);
    else if (key == "activation") t.activation = parse_activation(value);
    else throw Error(ErrorCode::config, "unknown config key '" + key + "'");
  }
  if (config.k < 1) throw Error(ErrorCode::config, "k must be >= 1");
  if (config.min_df < 1) throw Error(ErrorCode::config, "min_df must be >= 1");
  return config;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path,
                               const std::map<std::string, std::string>& overrides) {
  auto pairs = parse_key_values(read_file(path));
  // Paths in the file are relative to the file itself.
  const auto base = path.parent_path();
  for (const char* key : {"train", "dev", "model", "curve", "stopwords"}) {
    if (const auto it = pairs.find(key); it != pairs.end() && !it->second.empty()) {
      const std::filesystem::path p = it->second;
      if (p.is_relative()) it->second = (base / p).lexically_normal().string();
    }
  }
  for (const auto& [key, value] : overrides) pairs[key] = value;
  return from_pairs(pairs);
}

std::map<std::string, std::string> RunConfig::snapshot() const {
  const auto& t = train;
  return {
      {"dataset", dataset},
      {"discretiser", std::string(discretiser_kind_name(discretiser))},
      {"k", std::to_string(k)},
      {"kmeans_max_iter", std::to_string(kmeans_max_iter)},
      {"kmeans_haversine", kmeans_haversine ? "true" : "false"},
      {"min_df", std::to_string(min_df)},
      {"weighting", weighting == TermWeighting::binary ? "binary" : "counts"},
      {"stopwords", stopwords_path.empty() ? "builtin" : stopwords_path.filename().string()},
      {"hidden_size", std::to_string(t.hidden_size)},
      {"l2", format_exact(t.l2)},
      {"batch_size", std::to_string(t.batch_size)},
      {"learn_rate", format_exact(t.optimizer.learn_rate)},
      {"beta1", format_exact(t.optimizer.beta1)},
      {"beta2", format_exact(t.optimizer.beta2)},
      {"epsilon", format_exact(t.optimizer.epsilon)},
      {"optimizer", std::string(optimizer_name(t.optimizer.kind))},
      {"max_epochs", std::to_string(t.max_epochs)},
      {"patience", std::to_string(t.patience)},
      {"seed", std::to_string(t.seed)},
      {"activation", std::string(activation_name(t.activation))},
  };
}

TrainOutcome train_pipeline(const std::vector<UserRecord>& train_records,
                            const std::vector<UserRecord>& dev_records, const RunConfig& config,
                            std::ostream* log) {
  if (dev_records.empty()) throw Error(ErrorCode::data, "dev: corpus is empty");
  const auto stopwords = staged("vocabulary", [&] {
    return config.stopwords_path.empty() ? default_stopwords() : load_stopwords(config.stopwords_path);
  });
  const auto vocab = staged("vocabulary", [&] { return fit_vocabulary(train_records, config.min_df, stopwords); });
  const auto train_x = featurize(train_records, vocab, config.weighting);
  const auto dev_x = featurize(dev_records, vocab, config.weighting);
  if (log) {
    *log << "vocabulary: " << vocab.size() << " terms; featureless users: train "
         << train_x.featureless.size() << ", dev " << dev_x.featureless.size() << '\n';
  }

  const auto train_points = gold_points(train_records);
  const auto discretiser = staged("discretise", [&] {
    if (config.discretiser == DiscretiserKind::kdtree) return fit_kdtree(train_points, config.k);
    return fit_kmeans(train_points, config.k,
                      KMeansOptions{config.train.seed, config.kmeans_max_iter, config.kmeans_haversine});
  });
  if (log) *log << "discretiser: " << discretiser_kind_name(discretiser.kind()) << ", "
                << discretiser.num_classes() << " classes\n";

  const auto dev_gold = gold_points(dev_records);
  EpochCallback on_epoch;
  if (log) {
    on_epoch = [log](const EpochStats& s) {
      *log << "epoch " << s.epoch << " loss=" << format_g6(s.train_loss)
           << " dev_median_km=" << format_g6(s.dev_median_km)
           << " dev_acc161=" << format_g6(s.dev_acc161) << '\n';
    };
  }
  auto result = staged("train", [&] {
    return train(train_x.matrix, discretiser.assignments(), dev_x.matrix, dev_gold, discretiser,
                 config.train, on_epoch);
  });

  TrainOutcome outcome;
  outcome.curve = std::move(result.curve);
  outcome.best_epoch = result.best_epoch;
  auto& c = outcome.container;
  c.model = std::move(result.model);
  c.model.meta.config = config.snapshot();
  c.model.meta.vocab_hash = vocab.hash();
  c.model.meta.discretiser_hash = discretiser.hash();
  c.vocab = vocab;
  c.discretiser = discretiser;

  const auto dev_pred = predict(c.model, dev_x.matrix, c.discretiser);
  outcome.dev_report = evaluate(dev_pred.points, dev_gold);
  c.manifest["dataset"] = config.dataset;
  c.manifest["metric.best_epoch"] = std::to_string(outcome.best_epoch);
  c.manifest["metric.dev_acc161"] = format_g6(outcome.dev_report.acc_at_161);
  c.manifest["metric.dev_mean_km"] = format_g6(outcome.dev_report.mean_km);
  c.manifest["metric.dev_median_km"] = format_g6(outcome.dev_report.median_km);
  return outcome;
}

TrainOutcome cmd_train(const RunConfig& config, std::ostream& log) {
  if (config.train_path.empty()) throw Error(ErrorCode::config, "no train corpus configured");
  if (config.dev_path.empty()) throw Error(ErrorCode::config, "no dev corpus configured");
  const auto train_corpus = staged("load", [&] { return load_corpus(config.train_path, Split::train); });
  const auto dev_corpus = staged("load", [&] { return load_corpus(config.dev_path, Split::dev); });
  log << "train: " << train_corpus.records.size() << " users (" << train_corpus.malformed_lines
      << " malformed lines skipped); dev: " << dev_corpus.records.size() << " users ("
      << dev_corpus.malformed_lines << " skipped)\n";
  if (train_corpus.records.empty()) throw Error(ErrorCode::data, "load: train corpus is empty");

  auto outcome = train_pipeline(train_corpus.records, dev_corpus.records, config, &log);
  staged("save", [&] {
    if (!config.model_path.empty()) save_model(outcome.container, config.model_path);
    if (!config.curve_path.empty()) write_file(config.curve_path, curve_tsv(outcome.curve));
    return 0;
  });
  return outcome;
}

std::string curve_tsv(const std::vector<EpochStats>& curve) {
  std::ostringstream out;
  for (const auto& s : curve) {
    out << s.epoch << '\t' << format_g6(s.train_loss) << '\t' << format_g6(s.dev_median_km) << '\t'
        << format_g6(s.dev_acc161) << '\n';
  }
  return out.str();
}

EvaluateOutcome evaluate_records(const ModelContainer& container,
                                 const std::vector<UserRecord>& records,
                                 const std::map<std::string, std::string>* groups) {
  if (records.empty()) throw Error(ErrorCode::data, "evaluation corpus is empty");
  const auto x = featurize(records, container.vocab, model_weighting(container));
  const auto pred = predict(container.model, x.matrix, container.discretiser);
  const auto gold = gold_points(records);

  EvaluateOutcome outcome;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < records.size(); ++i) {
    outcome.users.push_back({records[i].user_id, gold[i], pred.points[i], pred.classes[i]});
    if (groups) {
      const auto it = groups->find(records[i].user_id);
      labels.push_back(it == groups->end() ? "(none)" : it->second);
    }
  }
  outcome.report = groups ? evaluate(pred.points, gold, std::span<const std::string>(labels))
                          : evaluate(pred.points, gold);
  return outcome;
}

EvaluateOutcome cmd_evaluate(const EvaluateOptions& options) {
  const auto container = staged("load model", [&] { return load_model(options.model_path); });
  const auto corpus = staged("load", [&] { return load_corpus(options.test_path, Split::test); });
  if (corpus.records.empty()) {
    throw Error(ErrorCode::data, "load: test corpus '" + options.test_path.string() + "' is empty");
  }
  std::optional<std::map<std::string, std::string>> groups;
  if (options.groups_path) {
    groups.emplace();
    std::size_t line_no = 0;
    const std::string contents = read_file(*options.groups_path);
    for (const std::string_view line : split_lines(contents)) {
      ++line_no;
      if (trim(line).empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string_view::npos) {
        throw Error(ErrorCode::format, options.groups_path->string() + ":" + std::to_string(line_no) +
                                           ": expected 'user_id<TAB>group'");
      }
      (*groups)[std::string(trim(line.substr(0, tab)))] = std::string(trim(line.substr(tab + 1)));
    }
  }
  auto outcome = evaluate_records(container, corpus.records, groups ? &*groups : nullptr);
  if (options.report_path) write_file(*options.report_path, report_tsv(outcome.report));
  if (options.group_tsv_path) write_file(*options.group_tsv_path, group_tsv(outcome.report));
  if (options.geojson_path) write_file(*options.geojson_path, error_map_geojson(outcome.users));
  return outcome;
}

NnOutcome nearest_for_query(const ModelContainer& container, const std::vector<std::string>& query,
                            const NnOptions& options) {
  std::vector<std::string> tokens;
  for (const auto& q : query) {
    for (auto& token : tokenize(q)) tokens.push_back(std::move(token));
  }
  const auto embedded = embed_bow(container.model, container.vocab, tokens, options.pre_activation);
  const auto index = build_index(container.model, container.vocab, options.pre_activation);
  std::set<std::string> exclude;
  if (!options.include_query) exclude.insert(tokens.begin(), tokens.end());
  return NnOutcome{nearest_terms(index, embedded.vector, options.n, exclude, options.similarity),
                   embedded.all_oov};
}

std::vector<RecallPoint> cmd_dialect_eval(const DialectEvalOptions& options) {
  const auto entries = staged("dialect data", [&] { return load_dialect_entries(options.dareds_path); });
  const auto cities = staged("dialect data", [&] { return load_city_map(options.city_map_path); });
  const auto freq = staged("dialect data", [&] { return load_frequency_list(options.freq_path); });
  const auto dataset = staged("dialect data", [&] {
    return prepare_dialect_dataset(entries, freq, cities, options.cutoff);
  });
  if (options.table_path) {
    const auto table = EmbeddingIndex::load_table(*options.table_path);
    return staged("recall", [&] {
      return recall_at_k_table(table, dataset, options.k_percents, options.similarity);
    });
  }
  const auto container = staged("load model", [&] { return load_model(options.model_path); });
  return staged("recall", [&] {
    return recall_at_k(container.model, container.vocab, dataset, options.k_percents,
                       options.pre_activation, options.similarity);
  });
}

namespace {

nlohmann::json position(const GeoPoint& p) { return nlohmann::json::array({p.lon(), p.lat()}); }

}  // namespace

std::string discretiser_geojson(const Discretiser& discretiser) {
  using nlohmann::json;
  json features = json::array();
  for (std::size_t c = 0; c < discretiser.num_classes(); ++c) {
    const auto hull = discretiser.hull(c);
    json geometry;
    if (hull.size() >= 3) {
      json ring = json::array();
      for (const auto& p : hull) ring.push_back(position(p));
      ring.push_back(position(hull.front()));
      geometry = {{"type", "Polygon"}, {"coordinates", json::array({ring})}};
    } else if (hull.size() == 2) {
      geometry = {{"type", "LineString"}, {"coordinates", {position(hull[0]), position(hull[1])}}};
    } else {
      geometry = {{"type", "Point"}, {"coordinates", position(hull.front())}};
    }
    const auto props = [&](const char* role) {
      return json{{"class", c}, {"users", discretiser.class_size(c)}, {"role", role}};
    };
    features.push_back(json{{"type", "Feature"}, {"geometry", geometry}, {"properties", props("hull")}});
    const json point = {{"type", "Point"}, {"coordinates", position(discretiser.representative(c))}};
    features.push_back(
        json{{"type", "Feature"}, {"geometry", point}, {"properties", props("representative")}});
  }
  return json({{"type", "FeatureCollection"}, {"features", features}}).dump(1) + "\n";
}

std::string error_map_geojson(const std::vector<UserPrediction>& users) {
  using nlohmann::json;
  struct Bucket {
    double upper;
    const char* label;
    const char* colour;
  };
  static constexpr Bucket buckets[] = {
      {161.0, "0-161", "#1a9850"},
      {500.0, "161-500", "#fee08b"},
      {1000.0, "500-1000", "#fc8d59"},
      {1e300, ">1000", "#d73027"},
  };
  json features = json::array();
  for (const auto& u : users) {
    const double error = haversine_km(u.predicted, u.gold);
    const auto& bucket = *std::find_if(std::begin(buckets), std::end(buckets),
                                       [error](const Bucket& b) { return error <= b.upper; });
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", position(u.gold)}}},
                        {"properties",
                         {{"user_id", u.user_id},
                          {"error_km", error},
                          {"bucket", bucket.label},
                          {"marker-color", bucket.colour},
                          {"predicted", position(u.predicted)},
                          {"class", u.cls}}}});
  }
  return json({{"type", "FeatureCollection"}, {"features", features}}).dump(1) + "\n";
}

std::string priors_tsv(const ModelContainer& container, const std::vector<UserRecord>& records,
                       std::size_t top) {
  const auto x = featurize(records, container.vocab, model_weighting(container));
  const auto pass = forward(container.model, x.matrix);
  std::ostringstream out;
  std::vector<std::uint32_t> order(container.model.num_classes());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto row = pass.probs.row(static_cast<Eigen::Index>(i));
    std::iota(order.begin(), order.end(), 0u);
    const std::size_t take = std::min(top, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                        return row(a) != row(b) ? row(a) > row(b) : a < b;
                      });
    out << records[i].user_id << '\t';
    for (std::size_t j = 0; j < take; ++j) {
      out << (j ? "," : "") << order[j] << ':' << format_g6(row(order[j]));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace geoloc

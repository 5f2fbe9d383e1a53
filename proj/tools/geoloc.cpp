// geoloc: text-based user geolocation and hidden-layer dialect retrieval.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geoloc/commands.hpp"
#include "geoloc/error.hpp"
#include "geoloc/text_io.hpp"

using namespace geoloc;

namespace {

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> pairs;
  for (const auto& item : sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::config, "--set expects key=value, got '" + item + "'");
    pairs[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return pairs;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-based user geolocation with a one-hidden-layer MLP"};
  app.require_subcommand(1);

  // train
  std::string config_path;
  std::vector<std::string> sets;
  std::string train_path, dev_path, model_out, curve_out;
  auto* train_cmd = app.add_subcommand("train", "Fit vocabulary, discretiser and MLP");
  train_cmd->add_option("-c,--config", config_path, "key=value config file");
  train_cmd->add_option("--train", train_path, "training corpus (TSV)");
  train_cmd->add_option("--dev", dev_path, "development corpus (TSV)");
  train_cmd->add_option("-o,--model", model_out, "output model container");
  train_cmd->add_option("--curve", curve_out, "training curve TSV");
  train_cmd->add_option("--set", sets, "override a config key (key=value)")->take_all();

  // evaluate
  std::string model_path, test_path, groups_path, group_tsv_out, geojson_out, report_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "Acc@161, mean and median error on a corpus");
  eval_cmd->add_option("-m,--model", model_path, "model container")->required();
  eval_cmd->add_option("--test", test_path, "evaluation corpus (TSV)")->required();
  eval_cmd->add_option("--groups", groups_path, "user_id<TAB>group file");
  eval_cmd->add_option("--group-tsv", group_tsv_out, "per-group median output");
  eval_cmd->add_option("--geojson", geojson_out, "per-user error map");
  eval_cmd->add_option("--report", report_out, "metric<TAB>value output");

  // nn
  std::vector<std::string> query;
  NnOptions nn;
  std::string similarity = "cosine";
  auto* nn_cmd = app.add_subcommand("nn", "Nearest vocabulary terms to a bag of query terms");
  nn_cmd->add_option("-m,--model", model_path, "model container")->required();
  nn_cmd->add_option("terms", query, "query terms")->required();
  nn_cmd->add_option("-n", nn.n, "number of neighbours")->capture_default_str();
  nn_cmd->add_flag("--include-query", nn.include_query, "do not exclude the query terms");
  nn_cmd->add_flag("--pre-activation", nn.pre_activation, "use hidden pre-activations");
  nn_cmd->add_option("--similarity", similarity, "cosine or dot")->capture_default_str();

  // dialect-eval
  DialectEvalOptions dialect;
  std::string dareds, city_map, freq, table, recall_out;
  auto* dialect_cmd = app.add_subcommand("dialect-eval", "Micro-averaged Recall@k of dialect terms");
  dialect_cmd->add_option("-m,--model", model_path, "model container");
  dialect_cmd->add_option("--dareds", dareds, "region<TAB>term file")->required();
  dialect_cmd->add_option("--city-map", city_map, "region<TAB>city,... file")->required();
  dialect_cmd->add_option("--freq", freq, "ranked word frequency list")->required();
  dialect_cmd->add_option("--cutoff", dialect.cutoff, "drop the N most frequent words")->capture_default_str();
  dialect_cmd->add_option("--k", dialect.k_percents, "k as percent of vocabulary")->capture_default_str();
  dialect_cmd->add_option("--table", table, "term->vector table to evaluate instead of the model");
  dialect_cmd->add_flag("--pre-activation", dialect.pre_activation, "use hidden pre-activations");
  dialect_cmd->add_option("--similarity", similarity, "cosine or dot")->capture_default_str();
  dialect_cmd->add_option("-o,--out", recall_out, "recall TSV (default stdout)");

  // export-geojson
  std::string out_path;
  auto* geojson_cmd = app.add_subcommand("export-geojson", "Class hulls and representative points");
  geojson_cmd->add_option("-m,--model", model_path, "model container")->required();
  geojson_cmd->add_option("-o,--out", out_path, "output file (default stdout)");

  // export-priors
  std::string corpus_path;
  std::size_t top = 10;
  auto* priors_cmd = app.add_subcommand("export-priors", "Per-user class distributions");
  priors_cmd->add_option("-m,--model", model_path, "model container")->required();
  priors_cmd->add_option("--corpus", corpus_path, "corpus (TSV)")->required();
  priors_cmd->add_option("--top", top, "classes per user")->capture_default_str();
  priors_cmd->add_option("-o,--out", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "E_USAGE: " << e.what() << '\n';
    return 2;
  }

  try {
    if (train_cmd->parsed()) {
      auto overrides = parse_overrides(sets);
      if (!train_path.empty()) overrides["train"] = train_path;
      if (!dev_path.empty()) overrides["dev"] = dev_path;
      if (!model_out.empty()) overrides["model"] = model_out;
      if (!curve_out.empty()) overrides["curve"] = curve_out;
      const auto config = config_path.empty() ? RunConfig::from_pairs(overrides)
                                              : RunConfig::from_file(config_path, overrides);
      const auto outcome = cmd_train(config, std::cerr);
      std::cout << "best_epoch: " << outcome.best_epoch << '\n' << format_report(outcome.dev_report);
    } else if (eval_cmd->parsed()) {
      EvaluateOptions options{model_path, test_path, {}, {}, {}, {}};
      if (!groups_path.empty()) options.groups_path = groups_path;
      if (!group_tsv_out.empty()) options.group_tsv_path = group_tsv_out;
      if (!geojson_out.empty()) options.geojson_path = geojson_out;
      if (!report_out.empty()) options.report_path = report_out;
      const auto outcome = cmd_evaluate(options);
      std::cout << format_report(outcome.report);
      if (options.groups_path && !options.group_tsv_path) std::cout << group_tsv(outcome.report);
    } else if (nn_cmd->parsed()) {
      nn.similarity = parse_similarity(similarity);
      const auto container = load_model(model_path);
      const auto outcome = nearest_for_query(container, query, nn);
      if (outcome.all_oov) {
        std::cerr << "warning: no query term is in the vocabulary; ranking against act(b1)\n";
      }
      for (const auto& n : outcome.neighbours) std::cout << n.term << '\t' << format_g6(n.score) << '\n';
    } else if (dialect_cmd->parsed()) {
      dialect.model_path = model_path;
      dialect.dareds_path = dareds;
      dialect.city_map_path = city_map;
      dialect.freq_path = freq;
      dialect.similarity = parse_similarity(similarity);
      if (!table.empty()) dialect.table_path = table;
      if (table.empty() && model_path.empty()) {
        throw Error(ErrorCode::config, "dialect-eval needs --model or --table");
      }
      emit(recall_out, recall_tsv(cmd_dialect_eval(dialect)));
    } else if (geojson_cmd->parsed()) {
      emit(out_path, discretiser_geojson(load_model(model_path).discretiser));
    } else if (priors_cmd->parsed()) {
      const auto container = load_model(model_path);
      const auto corpus = load_corpus(corpus_path, Split::test);
      emit(out_path, priors_tsv(container, corpus.records, top));
    }
  } catch (const Error& e) {
    std::cerr << e.formatted() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "E_INTERNAL: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

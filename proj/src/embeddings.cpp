#include "geoloc/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "geoloc/error.hpp"
#include "geoloc/text_io.hpp"

namespace geoloc {

Similarity parse_similarity(std::string_view name) {
  if (name == "cosine") return Similarity::cosine;
  if (name == "dot") return Similarity::dot;
  throw Error(ErrorCode::config, "unknown similarity '" + std::string(name) + "'");
}

BowEmbedding embed_bow(const MlpModel& model, const Vocabulary& vocab,
                       std::span<const std::string> terms, bool pre_activation) {
  if (vocab.size() != model.input_size()) {
    throw Error(ErrorCode::dimension, "vocabulary size differs from model input size");
  }
  FeatureMatrix x;
  x.cols = vocab.size();
  auto entries = bag_of_words(terms, vocab, TermWeighting::counts);
  BowEmbedding out;
  for (const auto& [col, count] : entries) out.in_vocab += static_cast<std::size_t>(count);
  out.all_oov = entries.empty();
  x.append_row(std::move(entries));
  const std::size_t row = 0;
  const auto pass = forward(model, x, std::span<const std::size_t>(&row, 1));
  out.vector = (pre_activation ? pass.pre_hidden : pass.hidden).row(0).transpose();
  return out;
}

EmbeddingIndex::EmbeddingIndex(std::vector<std::string> terms, Matrix vectors)
    : terms_(std::move(terms)), vectors_(std::move(vectors)) {
  if (static_cast<Eigen::Index>(terms_.size()) != vectors_.rows()) {
    throw Error(ErrorCode::dimension, "embedding index: term count differs from vector count");
  }
  norms_.resize(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    norms_[i] = vectors_.row(static_cast<Eigen::Index>(i)).norm();
    if (!lookup_.emplace(terms_[i], i).second) {
      throw Error(ErrorCode::data, "embedding index: duplicate term '" + terms_[i] + "'");
    }
  }
}

EmbeddingIndex EmbeddingIndex::load_table(const std::filesystem::path& path) {
  std::vector<std::string> terms;
  std::vector<double> flat;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  const std::string contents = read_file(path);
  for (const std::string_view raw : split_lines(contents)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    std::istringstream fields{std::string(line)};
    std::string term;
    fields >> term;
    std::vector<double> values;
    std::string token;
    while (fields >> token) {
      const auto v = parse_double(token);
      if (!v) throw Error(ErrorCode::format, path.string() + ":" + std::to_string(line_no) + ": bad component");
      values.push_back(*v);
    }
    if (values.empty() || (dim != 0 && values.size() != dim)) {
      throw Error(ErrorCode::format, path.string() + ":" + std::to_string(line_no) +
                                         ": inconsistent vector length");
    }
    dim = values.size();
    terms.push_back(std::move(term));
    flat.insert(flat.end(), values.begin(), values.end());
  }
  if (terms.empty()) throw Error(ErrorCode::format, path.string() + ": empty embedding table");
  Matrix vectors = Eigen::Map<Matrix>(flat.data(), static_cast<Eigen::Index>(terms.size()),
                                      static_cast<Eigen::Index>(dim));
  return EmbeddingIndex(std::move(terms), std::move(vectors));
}

std::size_t EmbeddingIndex::zero_count() const {
  return static_cast<std::size_t>(std::count(norms_.begin(), norms_.end(), 0.0));
}

std::optional<std::size_t> EmbeddingIndex::find(const std::string& term) const {
  const auto it = lookup_.find(term);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

EmbeddingIndex build_index(const MlpModel& model, const Vocabulary& vocab, bool pre_activation) {
  if (vocab.size() != model.input_size()) {
    throw Error(ErrorCode::dimension, "vocabulary size differs from model input size");
  }
  // A one-hot row has unit norm, so term j embeds as act(W1[j] + b1).
  Matrix vectors = model.params.w1;
  vectors.rowwise() += model.params.b1.transpose();
  if (!pre_activation) {
    vectors = vectors.unaryExpr([a = model.activation](double z) { return activate(a, z); });
  }
  return EmbeddingIndex(vocab.terms(), std::move(vectors));
}

namespace {

std::vector<double> scores(const EmbeddingIndex& index, const Vector& query, Similarity similarity) {
  if (static_cast<std::size_t>(query.size()) != index.dim()) {
    throw Error(ErrorCode::dimension, "query has dimension " + std::to_string(query.size()) +
                                          ", index " + std::to_string(index.dim()));
  }
  const double qnorm = query.norm();
  std::vector<double> out(index.size(), 0.0);
  if (qnorm == 0.0) return out;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index.is_zero(i)) continue;
    const double dot = index.vectors().row(static_cast<Eigen::Index>(i)).dot(query);
    out[i] = similarity == Similarity::cosine ? dot / (qnorm * index.norm(i)) : dot;
  }
  return out;
}

}  // namespace

std::vector<std::size_t> rank_all(const EmbeddingIndex& index, const Vector& query,
                                  Similarity similarity) {
  const auto score = scores(index, query, similarity);
  std::vector<std::size_t> ranked, zeros;
  for (std::size_t i = 0; i < index.size(); ++i) (index.is_zero(i) ? zeros : ranked).push_back(i);
  const auto& terms = index.terms();
  std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return terms[a] < terms[b];
  });
  std::sort(zeros.begin(), zeros.end(), [&](std::size_t a, std::size_t b) { return terms[a] < terms[b]; });
  ranked.insert(ranked.end(), zeros.begin(), zeros.end());
  return ranked;
}

std::vector<Neighbour> nearest_terms(const EmbeddingIndex& index, const Vector& query,
                                     std::size_t n, const std::set<std::string>& exclude,
                                     Similarity similarity) {
  if (query.norm() == 0.0) throw Error(ErrorCode::data, "nearest_terms: zero query vector");
  const auto score = scores(index, query, similarity);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (!index.is_zero(i) && !exclude.contains(index.terms()[i])) candidates.push_back(i);
  }
  const auto& terms = index.terms();
  const auto better = [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return terms[a] < terms[b];
  };
  const std::size_t take = std::min(n, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), better);
  std::vector<Neighbour> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back({terms[candidates[i]], score[candidates[i]]});
  return out;
}

namespace {

std::string lowercase(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool has_whitespace(std::string_view text) {
  return std::any_of(text.begin(), text.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  });
}

}  // namespace

std::vector<DialectEntry> load_dialect_entries(const std::filesystem::path& path) {
  std::vector<DialectEntry> entries;
  std::size_t line_no = 0;
  const std::string contents = read_file(path);
  for (const std::string_view line : split_lines(contents)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw Error(ErrorCode::format, path.string() + ":" + std::to_string(line_no) +
                                         ": expected 'region<TAB>term'");
    }
    entries.push_back({std::string(trim(line.substr(0, tab))), std::string(line.substr(tab + 1))});
  }
  return entries;
}

CityMap load_city_map(const std::filesystem::path& path) {
  CityMap map;
  std::size_t line_no = 0;
  const std::string contents = read_file(path);
  for (const std::string_view line : split_lines(contents)) {
    ++line_no;
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw Error(ErrorCode::format, path.string() + ":" + std::to_string(line_no) +
                                         ": expected 'region<TAB>city[,city...]'");
    }
    auto& cities = map[lowercase(trim(line.substr(0, tab)))];
    for (const auto city : split(line.substr(tab + 1), ',')) {
      for (auto& token : tokenize(city)) cities.push_back(std::move(token));
    }
  }
  return map;
}

std::vector<std::string> load_frequency_list(const std::filesystem::path& path) {
  std::vector<std::string> words;
  const std::string contents = read_file(path);
  for (const std::string_view line : split_lines(contents)) {
    const auto field = trim(line);
    if (field.empty()) continue;
    const auto end = field.find_first_of(" \t");
    words.push_back(lowercase(field.substr(0, end)));
  }
  return words;
}

DialectDataset prepare_dialect_dataset(std::span<const DialectEntry> entries,
                                       std::span<const std::string> frequency_list,
                                       const CityMap& city_map, std::size_t cutoff) {
  if (frequency_list.size() < cutoff) {
    throw Error(ErrorCode::data, "frequency list has " + std::to_string(frequency_list.size()) +
                                     " entries, cutoff needs " + std::to_string(cutoff));
  }
  std::set<std::string, std::less<>> frequent;
  for (std::size_t i = 0; i < cutoff; ++i) frequent.insert(lowercase(frequency_list[i]));

  std::map<std::string, DialectRegion> regions;
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& entry : entries) {
    const auto key = lowercase(trim(entry.region));
    if (key.empty()) continue;
    auto& region = regions[key];
    if (region.name.empty()) region.name = std::string(trim(entry.region));
    const auto raw = trim(entry.term);
    if (raw.empty() || has_whitespace(raw)) continue;
    auto term = lowercase(raw);
    if (frequent.contains(term)) continue;
    if (seen[key].insert(term).second) region.gold_terms.push_back(std::move(term));
  }

  DialectDataset dataset;
  for (auto& [key, region] : regions) {
    if (region.gold_terms.empty()) continue;
    const auto cities = city_map.find(key);
    region.city_terms = cities != city_map.end() ? cities->second : tokenize(region.name);
    dataset.regions.push_back(std::move(region));
  }
  if (dataset.regions.empty()) throw Error(ErrorCode::data, "no dialect region survived filtering");
  return dataset;
}

std::size_t retrieval_count(double percent, std::size_t vocab_size) {
  if (!(percent >= 0.0)) throw Error(ErrorCode::config, "k percent must be >= 0");
  // The epsilon absorbs representation error such as 0.1 * 1000 / 100.
  const double exact = percent * static_cast<double>(vocab_size) / 100.0;
  const auto count = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::min(count, vocab_size);
}

std::vector<RecallPoint> recall_at_k(const EmbeddingIndex& index, const DialectDataset& dataset,
                                     std::span<const double> k_percents, const RegionQuery& query,
                                     Similarity similarity) {
  std::vector<RecallPoint> points(k_percents.size());
  for (std::size_t i = 0; i < k_percents.size(); ++i) {
    points[i].k_percent = k_percents[i];
    points[i].retrieved = retrieval_count(k_percents[i], index.size());
  }
  std::vector<std::size_t> rank_of(index.size());
  std::size_t usable = 0;
  for (const auto& region : dataset.regions) {
    std::vector<std::size_t> gold;
    for (const auto& term : region.gold_terms) {
      if (const auto i = index.find(term)) gold.push_back(*i);
    }
    if (gold.empty()) continue;
    ++usable;
    const auto ranking = rank_all(index, query(region), similarity);
    for (std::size_t r = 0; r < ranking.size(); ++r) rank_of[ranking[r]] = r;
    for (auto& point : points) {
      ++point.n_regions;
      point.n_gold += gold.size();
      for (const auto g : gold) point.hits += rank_of[g] < point.retrieved ? 1 : 0;
    }
  }
  if (usable == 0) throw Error(ErrorCode::data, "no dialect region has a gold term in the vocabulary");
  for (auto& point : points) {
    point.recall = static_cast<double>(point.hits) / static_cast<double>(point.n_gold);
  }
  return points;
}

std::vector<RecallPoint> recall_at_k(const MlpModel& model, const Vocabulary& vocab,
                                     const DialectDataset& dataset,
                                     std::span<const double> k_percents, bool pre_activation,
                                     Similarity similarity) {
  const auto index = build_index(model, vocab, pre_activation);
  return recall_at_k(
      index, dataset, k_percents,
      [&](const DialectRegion& region) {
        return embed_bow(model, vocab, region.city_terms, pre_activation).vector;
      },
      similarity);
}

std::vector<RecallPoint> recall_at_k_table(const EmbeddingIndex& table,
                                           const DialectDataset& dataset,
                                           std::span<const double> k_percents,
                                           Similarity similarity) {
  return recall_at_k(
      table, dataset, k_percents,
      [&](const DialectRegion& region) {
        Vector mean = Vector::Zero(static_cast<Eigen::Index>(table.dim()));
        std::size_t found = 0;
        for (const auto& term : region.city_terms) {
          if (const auto i = table.find(term)) {
            mean += table.vectors().row(static_cast<Eigen::Index>(*i)).transpose();
            ++found;
          }
        }
        if (found > 0) mean /= static_cast<double>(found);
        return mean;
      },
      similarity);
}

std::string recall_tsv(std::span<const RecallPoint> points) {
  std::ostringstream out;
  for (const auto& p : points) {
    out << format_g6(p.k_percent) << '\t' << format_g6(p.recall) << '\t' << p.n_regions << '\t'
        << p.n_gold << '\n';
  }
  return out.str();
}

}  // namespace geoloc

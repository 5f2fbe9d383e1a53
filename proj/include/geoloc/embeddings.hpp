#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "geoloc/corpus.hpp"
#include "geoloc/neuralnet.hpp"

namespace geoloc {

enum class Similarity { cosine, dot };

Similarity parse_similarity(std::string_view name);

struct BowEmbedding {
  Vector vector;
  std::size_t in_vocab = 0;  // tokens that matched the vocabulary
  bool all_oov = false;
};

/// Hidden-layer output for the l2-normalised bag of `terms`. With no
/// in-vocabulary term this is act(b1) and `all_oov` is set.
BowEmbedding embed_bow(const MlpModel& model, const Vocabulary& vocab,
                       std::span<const std::string> terms, bool pre_activation = false);

/// Term vectors with cached norms. Zero vectors are kept but never ranked by
/// nearest_terms.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  EmbeddingIndex(std::vector<std::string> terms, Matrix vectors);

  /// `term` followed by whitespace-separated components, one term per line.
  static EmbeddingIndex load_table(const std::filesystem::path& path);

  std::size_t size() const { return terms_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  const std::vector<std::string>& terms() const { return terms_; }
  const Matrix& vectors() const { return vectors_; }
  double norm(std::size_t i) const { return norms_[i]; }
  bool is_zero(std::size_t i) const { return norms_[i] == 0.0; }
  std::size_t zero_count() const;
  std::optional<std::size_t> find(const std::string& term) const;

 private:
  std::vector<std::string> terms_;
  Matrix vectors_;
  std::vector<double> norms_;
  std::map<std::string, std::size_t, std::less<>> lookup_;
};

EmbeddingIndex build_index(const MlpModel& model, const Vocabulary& vocab,
                           bool pre_activation = false);

struct Neighbour {
  std::string term;
  double score = 0.0;
};

/// Top-n terms by similarity, descending; ties in lexicographic term order.
/// Throws E_DATA for a zero query.
std::vector<Neighbour> nearest_terms(const EmbeddingIndex& index, const Vector& query,
                                     std::size_t n, const std::set<std::string>& exclude = {},
                                     Similarity similarity = Similarity::cosine);

/// Every index row in retrieval order: nonzero vectors by similarity, then
/// zero vectors in term order. A zero query scores every row 0.
std::vector<std::size_t> rank_all(const EmbeddingIndex& index, const Vector& query,
                                  Similarity similarity = Similarity::cosine);

struct DialectEntry {
  std::string region;
  std::string term;
};

struct DialectRegion {
  std::string name;
  std::vector<std::string> city_terms;
  std::vector<std::string> gold_terms;
};

struct DialectDataset {
  std::vector<DialectRegion> regions;  // sorted by name
};

using CityMap = std::map<std::string, std::vector<std::string>>;

/// `region \t term` lines.
std::vector<DialectEntry> load_dialect_entries(const std::filesystem::path& path);
/// `region \t city[,city...]` lines; cities are tokenised, keys lowercased.
CityMap load_city_map(const std::filesystem::path& path);
/// Ranked word list; the first whitespace-separated field of each line.
std::vector<std::string> load_frequency_list(const std::filesystem::path& path);

/// Gold terms are lowercased and deduplicated per region. Multi-word terms
/// and the `cutoff` most frequent words are dropped. Query tokens come from
/// the city map, falling back to the region name's own tokens.
DialectDataset prepare_dialect_dataset(std::span<const DialectEntry> entries,
                                       std::span<const std::string> frequency_list,
                                       const CityMap& city_map, std::size_t cutoff = 50000);

inline const std::vector<double>& default_recall_grid() {
  static const std::vector<double> grid{0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0};
  return grid;
}

/// ceil(percent * vocab / 100), clamped to [0, vocab].
std::size_t retrieval_count(double percent, std::size_t vocab_size);

struct RecallPoint {
  double k_percent = 0.0;
  std::size_t retrieved = 0;
  double recall = 0.0;
  std::size_t hits = 0;
  std::size_t n_regions = 0;
  std::size_t n_gold = 0;
};

using RegionQuery = std::function<Vector(const DialectRegion&)>;

/// Micro-averaged recall of each region's in-index gold terms among its top
/// retrieval_count(k) neighbours. Regions without in-index gold terms are
/// left out of both sums.
std::vector<RecallPoint> recall_at_k(const EmbeddingIndex& index, const DialectDataset& dataset,
                                     std::span<const double> k_percents, const RegionQuery& query,
                                     Similarity similarity = Similarity::cosine);

/// Region query = embed_bow(city terms).
std::vector<RecallPoint> recall_at_k(const MlpModel& model, const Vocabulary& vocab,
                                     const DialectDataset& dataset,
                                     std::span<const double> k_percents,
                                     bool pre_activation = false,
                                     Similarity similarity = Similarity::cosine);

/// Region query = mean of the city-term vectors present in the table.
std::vector<RecallPoint> recall_at_k_table(const EmbeddingIndex& table,
                                           const DialectDataset& dataset,
                                           std::span<const double> k_percents,
                                           Similarity similarity = Similarity::cosine);

/// `k_percent \t recall \t n_regions \t n_gold` lines.
std::string recall_tsv(std::span<const RecallPoint> points);

}  // namespace geoloc

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace geoloc {

/// One user: gold coordinates and the concatenation of their tweets.
struct UserRecord {
  std::string user_id;
  double lat = 0.0;
  double lon = 0.0;
  std::string text;
};

enum class Split { train, dev, test };

std::string_view split_name(Split split);

struct LoadedCorpus {
  std::vector<UserRecord> records;
  std::size_t total_lines = 0;      // non-blank lines seen
  std::size_t malformed_lines = 0;  // skipped: bad fields, bad or out-of-range coordinates, duplicate ids
};

/// Reads `user_id \t lat \t lon \t text` lines. Malformed lines are skipped
/// and counted; more than 1% malformed is an E_FORMAT error naming the first
/// offending line.
LoadedCorpus load_corpus(const std::filesystem::path& path, Split split);

/// Lowercased maximal runs of letters, digits, '#', '@', '\'' and '_'.
/// Bytes >= 0x80 count as letters so UTF-8 words stay whole.
std::vector<std::string> tokenize(std::string_view text);

inline bool is_mention(std::string_view token) {
  return !token.empty() && token.front() == '@';
}

using StopwordSet = std::set<std::string, std::less<>>;

/// Built-in English stopword list.
const StopwordSet& default_stopwords();

/// One lowercased word per line; blank lines and '#'-comments ignored.
StopwordSet load_stopwords(const std::filesystem::path& path);

/// Term -> column map with training document frequencies. Immutable once
/// built; terms are in lexicographic order.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> terms, std::vector<std::uint32_t> doc_freq);

  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<std::uint32_t>& doc_freq() const { return doc_freq_; }
  const std::string& term(std::size_t column) const { return terms_.at(column); }

  std::optional<std::size_t> find(std::string_view term) const;

  /// FNV-1a over the persisted listing.
  std::uint64_t hash() const;

  /// `term \t doc_freq` lines in index order.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view listing);

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.terms_ == b.terms_ && a.doc_freq_ == b.doc_freq_;
  }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> terms_;
  std::vector<std::uint32_t> doc_freq_;
  std::unordered_map<std::string, std::size_t, Hash, std::equal_to<>> index_;
};

/// Document frequency is counted once per user. @-mentions, stopwords and
/// terms with doc_freq < min_df are dropped.
Vocabulary fit_vocabulary(std::span<const UserRecord> records, std::size_t min_df,
                          const StopwordSet& stopwords);

enum class TermWeighting { counts, binary };

/// Compressed sparse rows; every nonempty row has unit l2 norm.
struct FeatureMatrix {
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col_idx;
  std::vector<double> values;

  std::size_t rows() const { return row_ptr.size() - 1; }
  std::size_t nnz() const { return values.size(); }
  bool row_empty(std::size_t row) const { return row_ptr[row] == row_ptr[row + 1]; }

  std::span<const std::uint32_t> row_cols(std::size_t row) const {
    return {col_idx.data() + row_ptr[row], row_ptr[row + 1] - row_ptr[row]};
  }
  std::span<const double> row_values(std::size_t row) const {
    return {values.data() + row_ptr[row], row_ptr[row + 1] - row_ptr[row]};
  }

  /// Appends a row from (column, weight) pairs, sorting columns and
  /// l2-normalising. Zero weights are dropped.
  void append_row(std::vector<std::pair<std::uint32_t, double>> entries);

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

struct Featurized {
  FeatureMatrix matrix;
  std::vector<std::size_t> featureless;  // rows with no in-vocabulary token
};

Featurized featurize(std::span<const UserRecord> records, const Vocabulary& vocab,
                     TermWeighting weighting = TermWeighting::counts);

/// Bag-of-words row for an arbitrary token list (out-of-vocabulary ignored).
std::vector<std::pair<std::uint32_t, double>> bag_of_words(std::span<const std::string> tokens,
                                                           const Vocabulary& vocab,
                                                           TermWeighting weighting);

}  // namespace geoloc

#include "geoloc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "geoloc/error.hpp"
#include "geoloc/text_io.hpp"

namespace geoloc {

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "unknown";
}

namespace {

bool parse_record(std::string_view line, UserRecord& out) {
  std::size_t tabs[3];
  std::size_t pos = 0;
  for (auto& tab : tabs) {
    tab = line.find('\t', pos);
    if (tab == std::string_view::npos) return false;
    pos = tab + 1;
  }
  const std::string_view id = line.substr(0, tabs[0]);
  const auto lat = parse_double(line.substr(tabs[0] + 1, tabs[1] - tabs[0] - 1));
  const auto lon = parse_double(line.substr(tabs[1] + 1, tabs[2] - tabs[1] - 1));
  if (trim(id).empty() || !lat || !lon) return false;
  if (*lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0) return false;
  out.user_id = std::string(trim(id));
  out.lat = *lat;
  out.lon = *lon;
  out.text = std::string(line.substr(tabs[2] + 1));
  std::replace(out.text.begin(), out.text.end(), '\t', ' ');
  return true;
}

}  // namespace

LoadedCorpus load_corpus(const std::filesystem::path& path, Split split) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::io, std::string(split_name(split)) + " corpus '" + path.string() +
                                   "' does not exist");
  }
  const std::string contents = read_file(path);
  LoadedCorpus corpus;
  std::unordered_set<std::string> seen;
  std::size_t first_bad_line = 0;
  std::string first_bad_text;

  std::size_t line_no = 0;
  for (const std::string_view line : split_lines(contents)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++corpus.total_lines;
    UserRecord record;
    if (!parse_record(line, record) || !seen.insert(record.user_id).second) {
      if (corpus.malformed_lines++ == 0) {
        first_bad_line = line_no;
        first_bad_text = std::string(line.substr(0, 60));
      }
      continue;
    }
    corpus.records.push_back(std::move(record));
  }

  if (corpus.malformed_lines * 100 > corpus.total_lines) {
    throw Error(ErrorCode::format,
                path.string() + ": " + std::to_string(corpus.malformed_lines) + " of " +
                    std::to_string(corpus.total_lines) +
                    " lines malformed (limit 1%); first at line " +
                    std::to_string(first_bad_line) + ": '" + first_bad_text + "'");
  }
  return corpus;
}

std::vector<std::string> tokenize(std::string_view text) {
  const auto token_char = [](unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '#' || c == '@' || c == '\'' || c == '_' || c >= 0x80;
  };
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (token_char(c)) {
      current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  StopwordSet words;
  const std::string contents = read_file(path);
  for (std::string_view line : split_lines(contents)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    for (auto& token : tokenize(line)) words.insert(std::move(token));
  }
  return words;
}

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<std::uint32_t> doc_freq)
    : terms_(std::move(terms)), doc_freq_(std::move(doc_freq)) {
  if (terms_.size() != doc_freq_.size()) {
    throw Error(ErrorCode::dimension, "vocabulary terms and doc_freq differ in length");
  }
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (i > 0 && !(terms_[i - 1] < terms_[i])) {
      throw Error(ErrorCode::format, "vocabulary not strictly sorted at '" + terms_[i] + "'");
    }
    index_.emplace(terms_[i], i);
  }
}

std::optional<std::size_t> Vocabulary::find(std::string_view term) const {
  const auto it = index_.find(term);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::hash() const { return fnv1a(serialize()); }

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    out += terms_[i];
    out += '\t';
    out += std::to_string(doc_freq_[i]);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view listing) {
  std::vector<std::string> terms;
  std::vector<std::uint32_t> df;
  std::size_t line_no = 0;
  for (const std::string_view line : split_lines(listing)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    const auto count = tab == std::string_view::npos ? std::nullopt : parse_int(line.substr(tab + 1));
    if (!count || *count < 0 || tab == 0) {
      throw Error(ErrorCode::format, "vocabulary line " + std::to_string(line_no) + " malformed");
    }
    terms.emplace_back(line.substr(0, tab));
    df.push_back(static_cast<std::uint32_t>(*count));
  }
  return Vocabulary(std::move(terms), std::move(df));
}

void Vocabulary::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

Vocabulary fit_vocabulary(std::span<const UserRecord> records, std::size_t min_df,
                          const StopwordSet& stopwords) {
  if (min_df < 1) throw Error(ErrorCode::config, "min_df must be >= 1");
  if (records.empty()) throw Error(ErrorCode::data, "cannot fit a vocabulary on zero records");

  std::map<std::string, std::uint32_t, std::less<>> df;
  for (const auto& record : records) {
    auto tokens = tokenize(record.text);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& token : tokens) ++df[std::move(token)];
  }

  std::vector<std::string> terms;
  std::vector<std::uint32_t> counts;
  for (const auto& [term, count] : df) {
    if (is_mention(term) || stopwords.contains(term) || count < min_df) continue;
    terms.push_back(term);
    counts.push_back(count);
  }
  if (terms.empty()) {
    throw Error(ErrorCode::data, "vocabulary is empty after filtering (min_df=" +
                                     std::to_string(min_df) + ")");
  }
  return Vocabulary(std::move(terms), std::move(counts));
}

void FeatureMatrix::append_row(std::vector<std::pair<std::uint32_t, double>> entries) {
  std::sort(entries.begin(), entries.end());
  double norm_sq = 0.0;
  for (const auto& [col, value] : entries) norm_sq += value * value;
  const double norm = std::sqrt(norm_sq);
  for (const auto& [col, value] : entries) {
    if (value == 0.0) continue;
    col_idx.push_back(col);
    values.push_back(value / norm);
  }
  row_ptr.push_back(values.size());
}

std::vector<std::pair<std::uint32_t, double>> bag_of_words(std::span<const std::string> tokens,
                                                           const Vocabulary& vocab,
                                                           TermWeighting weighting) {
  std::vector<std::uint32_t> cols;
  cols.reserve(tokens.size());
  for (const auto& token : tokens) {
    if (const auto col = vocab.find(token)) cols.push_back(static_cast<std::uint32_t>(*col));
  }
  std::sort(cols.begin(), cols.end());
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (std::size_t i = 0; i < cols.size();) {
    std::size_t j = i;
    while (j < cols.size() && cols[j] == cols[i]) ++j;
    const double weight = weighting == TermWeighting::binary ? 1.0 : static_cast<double>(j - i);
    entries.emplace_back(cols[i], weight);
    i = j;
  }
  return entries;
}

Featurized featurize(std::span<const UserRecord> records, const Vocabulary& vocab,
                     TermWeighting weighting) {
  Featurized out;
  out.matrix.cols = vocab.size();
  out.matrix.row_ptr.reserve(records.size() + 1);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto tokens = tokenize(records[i].text);
    auto entries = bag_of_words(tokens, vocab, weighting);
    if (entries.empty()) out.featureless.push_back(i);
    out.matrix.append_row(std::move(entries));
  }
  return out;
}

}  // namespace geoloc

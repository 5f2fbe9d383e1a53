#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "geoloc/corpus.hpp"
#include "geoloc/error.hpp"
#include "geoloc/random.hpp"
#include "geoloc/text_io.hpp"
#include "support/synthetic.hpp"

using namespace geoloc;

namespace {

UserRecord user(std::string id, std::string text) { return {std::move(id), 40.0, -75.0, std::move(text)}; }

std::string corpus_lines(std::size_t good, const std::vector<std::string>& bad) {
  std::string out;
  for (std::size_t i = 0; i < good; ++i) out += "g" + std::to_string(i) + "\t10.5\t20.25\tsome text\n";
  for (const auto& line : bad) out += line + "\n";
  return out;
}

}  // namespace

TEST_CASE("load_corpus maps fields and skips malformed lines") {
  testing::TempDir dir;
  write_file(dir / "ok.tsv", "u1\t40.71\t-74.00\thello world\n" +
                                 corpus_lines(199, {"u2\t95.0\t0.0\tx"}));
  const auto corpus = load_corpus(dir / "ok.tsv", Split::train);
  REQUIRE(corpus.records.size() == 200);
  CHECK(corpus.malformed_lines == 1);
  CHECK(corpus.total_lines == 201);
  const auto& first = corpus.records.front();
  CHECK(first.user_id == "u1");
  CHECK(first.lat == 40.71);
  CHECK(first.lon == -74.00);
  CHECK(first.text == "hello world");
}

TEST_CASE("load_corpus keeps file order and tolerates CRLF and blank lines") {
  testing::TempDir dir;
  write_file(dir / "c.tsv", "b\t1\t2\tsecond\r\n\na\t3\t4\tfirst\r\n");
  const auto corpus = load_corpus(dir / "c.tsv", Split::dev);
  REQUIRE(corpus.records.size() == 2);
  CHECK(corpus.records[0].user_id == "b");
  CHECK(corpus.records[1].text == "first");
  CHECK(corpus.malformed_lines == 0);
}

TEST_CASE("load_corpus errors") {
  testing::TempDir dir;
  SUBCASE("missing file") {
    try {
      load_corpus(dir / "absent.tsv", Split::dev);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io);
      CHECK(std::string(e.what()).find("absent.tsv") != std::string::npos);
    }
  }
  SUBCASE("more than 1% malformed names the first offender") {
    write_file(dir / "bad.tsv", corpus_lines(98, {"x1\tnorth\t0\tt", "x2\t0\t200\tt"}));
    try {
      load_corpus(dir / "bad.tsv", Split::train);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::format);
      CHECK(std::string(e.what()).find("line 99") != std::string::npos);
    }
  }
  SUBCASE("exactly 1% malformed is tolerated") {
    write_file(dir / "edge.tsv", corpus_lines(99, {"only\tthree\tfields"}));
    CHECK(load_corpus(dir / "edge.tsv", Split::train).malformed_lines == 1);
  }
  SUBCASE("duplicate ids count as malformed") {
    write_file(dir / "dup.tsv", corpus_lines(150, {"g3\t1\t1\tagain"}));
    const auto corpus = load_corpus(dir / "dup.tsv", Split::train);
    CHECK(corpus.records.size() == 150);
    CHECK(corpus.malformed_lines == 1);
  }
}

TEST_CASE("tokenize") {
  using V = std::vector<std::string>;
  CHECK(tokenize("Hello @bob #NYC!!") == V{"hello", "@bob", "#nyc"});
  CHECK(tokenize("") == V{});
  CHECK(tokenize("y'all y'all") == V{"y'all", "y'all"});
  CHECK(tokenize("snake_case, 42nd-st") == V{"snake_case", "42nd", "st"});
  CHECK(tokenize("Caf\xc3\xa9 CLUB") == V{"caf\xc3\xa9", "club"});
  CHECK(is_mention("@bob"));
  CHECK_FALSE(is_mention("#bob"));
}

TEST_CASE("fit_vocabulary applies the document-frequency, mention and stopword filters") {
  std::vector<UserRecord> records;
  for (int i = 0; i < 10; ++i) {
    std::string text = "pizza pizza @bob the";
    if (i < 9) text += " rarewd";
    records.push_back(user("u" + std::to_string(i), text));
  }
  for (int i = 0; i < 490; ++i) records.push_back(user("m" + std::to_string(i), "@bob"));

  const auto vocab = fit_vocabulary(records, 10, default_stopwords());
  REQUIRE(vocab.size() == 1);
  CHECK(vocab.term(0) == "pizza");
  CHECK(vocab.doc_freq()[0] == 10);  // counted once per user
  CHECK_FALSE(vocab.find("rarewd"));
  CHECK_FALSE(vocab.find("@bob"));
  CHECK_FALSE(vocab.find("the"));

  CHECK(fit_vocabulary(records, 9, {}).find("rarewd").has_value());
  CHECK_THROWS_AS(fit_vocabulary(records, 11, {}), Error);
  CHECK_THROWS_AS(fit_vocabulary({}, 1, {}), Error);
}

TEST_CASE("vocabulary invariants hold on the synthetic corpus") {
  const auto corpus = testing::make_synthetic();
  const auto& stop = default_stopwords();
  const auto vocab = fit_vocabulary(corpus.train, 10, stop);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    CHECK(vocab.doc_freq()[i] >= 10);
    CHECK_FALSE(stop.contains(vocab.term(i)));
    CHECK_FALSE(is_mention(vocab.term(i)));
    CHECK(vocab.find(vocab.term(i)) == i);
    if (i > 0) CHECK(vocab.term(i - 1) < vocab.term(i));
  }
  // Refit is identical; featurizing other splits leaves the vocabulary alone.
  const auto again = fit_vocabulary(corpus.train, 10, stop);
  CHECK(again == vocab);
  CHECK(again.serialize() == vocab.serialize());
  const auto before = vocab.serialize();
  (void)featurize(corpus.dev, vocab);
  (void)featurize(corpus.test, vocab);
  CHECK(vocab.serialize() == before);
}

TEST_CASE("vocabulary listing round-trips through its file format") {
  const Vocabulary vocab({"alpha", "beta", "y'all"}, {12, 10, 40});
  CHECK(vocab.serialize() == "alpha\t12\nbeta\t10\ny'all\t40\n");
  testing::TempDir dir;
  vocab.save(dir / "vocab.tsv");
  const auto loaded = Vocabulary::load(dir / "vocab.tsv");
  CHECK(loaded == vocab);
  CHECK(loaded.hash() == vocab.hash());
  CHECK_THROWS_AS(Vocabulary({"b", "a"}, {1, 1}), Error);
  CHECK_THROWS_AS(Vocabulary::deserialize("alpha\tten\n"), Error);
}

TEST_CASE("featurize normalises counts") {
  const Vocabulary vocab({"a", "b"}, {10, 10});
  const std::vector<UserRecord> records{user("1", "a a b"), user("2", "zzz qqq"), user("3", "b")};
  const auto f = featurize(records, vocab);
  REQUIRE(f.matrix.rows() == 3);
  CHECK(f.matrix.cols == 2);
  const auto v0 = f.matrix.row_values(0);
  REQUIRE(v0.size() == 2);
  CHECK(v0[0] == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-15));
  CHECK(v0[1] == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-15));
  CHECK(v0[0] == doctest::Approx(0.8944).epsilon(1e-4));
  CHECK(f.matrix.row_empty(1));
  CHECK(f.featureless == std::vector<std::size_t>{1});
  CHECK(f.matrix.row_values(2)[0] == 1.0);

  const auto binary = featurize(records, vocab, TermWeighting::binary);
  CHECK(binary.matrix.row_values(0)[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("featurized rows are unit-norm and renormalise to themselves") {
  Rng rng(99);
  std::vector<std::string> terms;
  for (int i = 0; i < 40; ++i) terms.push_back("t" + std::to_string(100 + i));
  const Vocabulary vocab(terms, std::vector<std::uint32_t>(terms.size(), 10));
  std::vector<UserRecord> records;
  for (int u = 0; u < 300; ++u) {
    std::string text;
    const auto len = uniform_index(rng, 30);
    for (std::uint64_t t = 0; t < len; ++t) text += " t" + std::to_string(100 + uniform_index(rng, 50));
    records.push_back(user("u" + std::to_string(u), text));
  }
  const auto f = featurize(records, vocab);
  CHECK(featurize(records, vocab).matrix == f.matrix);
  for (std::size_t r = 0; r < f.matrix.rows(); ++r) {
    if (f.matrix.row_empty(r)) continue;
    const auto cols = f.matrix.row_cols(r);
    const auto vals = f.matrix.row_values(r);
    double norm_sq = 0.0;
    for (std::size_t k = 0; k < vals.size(); ++k) {
      CHECK(vals[k] > 0.0);
      if (k > 0) CHECK(cols[k - 1] < cols[k]);
      norm_sq += vals[k] * vals[k];
    }
    CHECK(std::sqrt(norm_sq) == doctest::Approx(1.0).epsilon(1e-6));

    FeatureMatrix again;
    std::vector<std::pair<std::uint32_t, double>> entries;
    for (std::size_t k = 0; k < vals.size(); ++k) entries.emplace_back(cols[k], vals[k]);
    again.append_row(entries);
    for (std::size_t k = 0; k < vals.size(); ++k) {
      CHECK(again.values[k] == doctest::Approx(vals[k]).epsilon(1e-12));
    }
  }
  // Featurizing twice is byte-identical.
  CHECK(featurize(records, vocab).matrix == f.matrix);
}

TEST_CASE("stopword files") {
  testing::TempDir dir;
  write_file(dir / "stop.txt", "# comment\nThe\n\nand\n");
  const auto words = load_stopwords(dir / "stop.txt");
  CHECK(words == StopwordSet{"and", "the"});
  CHECK(default_stopwords().size() > 300);
  CHECK(default_stopwords().contains("the"));
}

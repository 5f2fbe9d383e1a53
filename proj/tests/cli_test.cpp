#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include <json.hpp>

#include "geoloc/container.hpp"
#include "geoloc/text_io.hpp"
#include "support/fixtures.hpp"

using namespace geoloc;

namespace {

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

RunResult run(const testing::TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string command =
      std::string(GEOLOC_CLI_PATH) + " " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int raw = std::system(command.c_str());
  RunResult result;
  result.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  result.out = read_file(out);
  result.err = read_file(err);
  return result;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  testing::TempDir dir;
  const auto r = run(dir, "train --bogus");
  CHECK(r.status == 2);
  CHECK(r.err.starts_with("E_USAGE: "));
}

TEST_CASE("domain errors print a coded line and exit 1") {
  testing::TempDir dir;
  const auto missing = run(dir, "evaluate -m '" + (dir / "none.bin").string() + "' --test x.tsv");
  CHECK(missing.status == 1);
  CHECK(missing.err.starts_with("E_IO: "));

  write_file(dir / "bad.conf", "hiden_size=3\n");
  const auto config = run(dir, "train -c '" + (dir / "bad.conf").string() + "'");
  CHECK(config.status == 1);
  CHECK(config.err.starts_with("E_CONFIG: "));
}

TEST_CASE("train, evaluate, nn and export through the binary") {
  testing::TempDir dir;
  const auto corpus = testing::make_synthetic();
  testing::write_corpus(dir / "train.tsv", corpus.train);
  testing::write_corpus(dir / "dev.tsv", corpus.dev);
  testing::write_corpus(dir / "test.tsv", corpus.test);
  write_file(dir / "run.conf",
             "train=train.tsv\ndev=dev.tsv\nk=4\nmin_df=2\nhidden_size=16\nbatch_size=20\n"
             "max_epochs=10\npatience=3\nlearn_rate=0.01\n");
  const auto model = (dir / "m.bin").string();
  const auto train = run(dir, "train -c '" + (dir / "run.conf").string() + "' -o '" + model + "' --set seed=2");
  REQUIRE(train.status == 0);
  CHECK(load_model(model).model.meta.config.at("seed") == "2");

  const auto eval = run(dir, "evaluate -m '" + model + "' --test '" + (dir / "test.tsv").string() + "'");
  CHECK(eval.status == 0);
  CHECK(eval.out.find("acc@161:") != std::string::npos);
  CHECK(eval.out.find("median_km:") != std::string::npos);

  const auto nn = run(dir, "nn -m '" + model + "' regaw1 -n 3");
  CHECK(nn.status == 0);
  CHECK(split_lines(nn.out).size() >= 3);

  const auto geo = run(dir, "export-geojson -m '" + model + "' -o '" + (dir / "c.geojson").string() + "'");
  CHECK(geo.status == 0);
  CHECK(nlohmann::json::parse(read_file(dir / "c.geojson"))["type"] == "FeatureCollection");
}

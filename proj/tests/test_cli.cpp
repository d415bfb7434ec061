#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "stabilex/reportio.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "stabilex-test-cli";

int run(const std::string& args) {
  const std::string cmd = std::string(STABILEX_CLI) + " " + args + " >" + (kWork / "out.txt").string() +
                          " 2>" + (kWork / "err.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Workdir {
  Workdir() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  ~Workdir() { fs::remove_all(kWork); }
};

}  // namespace

TEST_CASE("help and usage errors") {
  Workdir w;
  CHECK(run("--help") == 0);
  CHECK(read(kWork / "out.txt").find("stability") != std::string::npos);
  CHECK(run("gen --variant bogus --out x.corpus") == 2);
  CHECK(run("gen --variant ordered") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("gen --variant ordered --count 7 --out " + (kWork / "c.corpus").string()) == 2);
}

TEST_CASE("missing inputs exit with 3") {
  Workdir w;
  CHECK(run("run --corpus " + (kWork / "none.corpus").string() + " --out " + (kWork / "r").string()) == 3);
  CHECK(read(kWork / "err.txt").find("error:") != std::string::npos);
  CHECK(run("stability --expl " + (kWork / "none.expl").string() + " --out " + (kWork / "s").string()) == 3);
}

TEST_CASE("gen writes a corpus and prints a manifest line") {
  Workdir w;
  const auto c = kWork / "c.corpus";
  REQUIRE(run("gen --variant ordered --count 40 --out " + c.string()) == 0);
  CHECK(fs::exists(c));
  CHECK(read(kWork / "out.txt").find("manifest: stabilex gen") != std::string::npos);
  const auto s = kWork / "s.corpus";
  CHECK(run("gen --variant shuffled --from " + c.string() + " --out " + s.string()) == 0);
  CHECK(run("gen --variant shuffled --out " + s.string()) == 2);
}

TEST_CASE("stability on a single matrix file") {
  Workdir w;
  stabilex::stability::ExplanationMatrix m;
  m.text_id = 6;
  m.tokens = {"a", "b", "c", "d"};
  m.model_ids = {"m0", "m1", "m2"};
  m.rows = {{1, 2, 3, 4}, {1, 2, 4, 3}, {2, 1, 3, 4}};
  stabilex::reportio::write_matrix(m, kWork / "6.expl");
  REQUIRE(run("stability --expl " + (kWork / "6.expl").string() + " --resamples 50 --out " +
              (kWork / "s").string()) == 0);
  const auto rows = stabilex::reportio::read_stability_csv(kWork / "s" / "stability.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].text_id == 6);
  CHECK(rows[0].models == 3);
  CHECK(rows[0].ci_low <= rows[0].mcwme);
  CHECK(rows[0].mcwme <= rows[0].ci_high);
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "adaor/cli.hpp"
#include "adaor/model.hpp"

using namespace adaor;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out, err;
};

RunResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "adaor");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("adaor_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const fs::path& tiny_ckpt() {
  static const fs::path p = [] {
    fs::path out = scratch_dir() / "tiny.ckpt";
    const auto r = run({"train", "--task", "vec", "--steps", "30", "--batch", "16", "--out", out.string()});
    REQUIRE(r.code == 0);
    return out;
  }();
  return p;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("alpha lists") {
    CHECK(cli::parse_alphas("0:1:5") == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    CHECK(cli::parse_alphas("0.5,0,1") == std::vector<double>{0.5, 0.0, 1.0});
    CHECK_THROWS_AS(cli::parse_alphas("0:1"), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_alphas("a,b"), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_alphas(""), std::invalid_argument);
  }

  TEST_CASE("variant lists") {
    const auto v = cli::parse_variant_list("cfg,adaor:linear");
    REQUIRE(v.size() == 2);
    CHECK(v[0].first == Variant::cfg_sweep);
    CHECK(v[1].first == Variant::adaor);
    CHECK(v[1].second == Scheduler::linear);
    CHECK_THROWS_AS(cli::parse_variant_list("bogus"), std::invalid_argument);
  }

  TEST_CASE("usage errors exit with code 1") {
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"serve"}).code == cli::kExitUsage);
    CHECK(run({"train", "--task", "img", "--out", "x"}).code == cli::kExitUsage);
    CHECK(run({"sweep", "--ckpt", tiny_ckpt().string(), "--instruction", "shift", "--alphas", "0,2"}).code ==
          cli::kExitUsage);
    CHECK(run({"serve", "--ckpt", "x", "--port", "70000"}).code == cli::kExitUsage);
    CHECK(run({"--help"}).code == cli::kExitOk);
  }

  TEST_CASE("runtime errors exit with code 2") {
    const auto r = run({"sweep", "--ckpt", (scratch_dir() / "missing.ckpt").string(), "--instruction", "shift"});
    CHECK(r.code == cli::kExitRuntime);
    CHECK_FALSE(r.err.empty());
  }

  TEST_CASE("training twice with one seed yields identical checkpoints") {
    const fs::path a = scratch_dir() / "a.ckpt", b = scratch_dir() / "b.ckpt";
    for (const auto& p : {a, b}) {
      REQUIRE(run({"train", "--task", "vec", "--steps", "10", "--batch", "8", "--seed", "5", "--out", p.string()})
                  .code == 0);
    }
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a.string() + ".loss.csv") == slurp(b.string() + ".loss.csv"));
    CHECK(load(a) == load(b));
  }

  TEST_CASE("sweep output is byte-identical across runs") {
    std::string csv[2], png[2];
    for (int i = 0; i < 2; ++i) {
      const fs::path c = scratch_dir() / ("s" + std::to_string(i) + ".csv");
      const fs::path g = scratch_dir() / ("s" + std::to_string(i) + ".png");
      const auto r = run({"sweep", "--ckpt", tiny_ckpt().string(), "--instruction", "scale", "--seed", "3",
                          "--csv", c.string(), "--png", g.string()});
      REQUIRE(r.code == 0);
      csv[i] = slurp(c);
      png[i] = slurp(g);
    }
    CHECK(csv[0] == csv[1]);
    CHECK(png[0] == png[1]);
    CHECK(csv[0].find("alpha,max_pred_norm") != std::string::npos);
    CHECK(png[0].substr(1, 3) == "PNG");
    const auto stdout_run = run({"sweep", "--ckpt", tiny_ckpt().string(), "--instruction", "scale", "--seed", "3"});
    CHECK(stdout_run.out == csv[0]);
  }

  TEST_CASE("eval report is byte-identical across runs") {
    std::string rep[2];
    for (int i = 0; i < 2; ++i) {
      const fs::path p = scratch_dir() / ("e" + std::to_string(i) + ".csv");
      const auto r = run({"eval", "--ckpt", tiny_ckpt().string(), "--n-cases", "2", "--variants", "cfg,adaor",
                          "--report", p.string()});
      REQUIRE(r.code == 0);
      rep[i] = slurp(p);
    }
    CHECK(rep[0] == rep[1]);
    CHECK(rep[0].find("# aggregate") != std::string::npos);
  }

  TEST_CASE("oracle-id report") {
    const fs::path p = scratch_dir() / "oracle.csv";
    const auto r = run({"oracle-id", "--ckpt", tiny_ckpt().string(), "--report", p.string(), "--t-grid", "0.5"});
    REQUIRE(r.code == 0);
    const std::string text = slurp(p);
    std::istringstream lines(text);
    std::vector<std::string> rows;
    for (std::string line; std::getline(lines, line);)
      if (line.rfind('#', 0) != 0) rows.push_back(line);
    REQUIRE(rows.size() == 65);
    CHECK(rows[0].rfind("t,case,cosine,", 0) == 0);
    CHECK(run({"oracle-id", "--ckpt", tiny_ckpt().string(), "--t-grid", "0"}).code == cli::kExitUsage);
  }
}

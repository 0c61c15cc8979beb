#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
};

// Runs the CLI with stderr discarded unless `keep_stderr`; stdout is captured.
Run cli(const std::string& args, bool keep_stderr = false, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" FDIV_CLI_PATH "\" " + args +
                          (keep_stderr ? " 2>&1" : " 2>/dev/null");
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fdiv_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path joint_file(const std::string& cells) {
  const fs::path p = fresh_dir("joint") / "joint.json";
  std::ofstream(p) << "{\"cells\": " << cells << "}";
  return p;
}

const std::string kSmall = " --samples 400 --epochs 3 ";

}  // namespace

TEST_CASE("catalog lists every divergence") {
  const auto r = cli("catalog");
  CHECK(r.code == 0);
  for (const char* tok : {"tv", "js", "sh", "pearson", "neyman", "kl", "rkl", "jeffrey"})
    CHECK_THAT(r.out, ContainsSubstring("(" + std::string(tok) + ")"));
}

TEST_CASE("catalog JSON satisfies the schema's required keys") {
  const auto r = cli("catalog --json");
  REQUIRE(r.code == 0);
  const json doc = json::parse(r.out);
  const json schema = json::parse(slurp(FDIV_CATALOG_SCHEMA));
  const auto& required = schema["properties"]["divergences"]["items"]["required"];
  REQUIRE(doc["divergences"].size() == 8);
  for (const auto& entry : doc["divergences"]) {
    for (const auto& key : required) CHECK(entry.contains(key.get<std::string>()));
    CHECK((entry["recession_slope"].is_number() || entry["recession_slope"] == "inf"));
  }
}

TEST_CASE("unknown divergence exits 2 and lists valid tokens") {
  const auto r = cli("train -d bogus" + kSmall, true);
  CHECK(r.code == 2);
  for (const char* tok : {"tv", "js", "sh", "pearson", "neyman", "kl", "rkl", "jeffrey"})
    CHECK_THAT(r.out, ContainsSubstring(tok));
}

TEST_CASE("noise rates summing to one are rejected before training") {
  const fs::path dir = fresh_dir("bad_noise");
  const auto r = cli("train --noise binary:0.6,0.5 --output-dir " + dir.string() + kSmall, true);
  CHECK(r.code == 2);
  CHECK_THAT(r.out, ContainsSubstring("< 1"));
  CHECK(fs::is_empty(dir));
  CHECK(cli("sweep-noise --rates 0,0.5 --noise-family binary" + kSmall).code == 2);
}

TEST_CASE("verify decoupling passes and an injected fault fails") {
  CHECK(cli("verify decoupling").code == 0);
  const auto bad = cli("verify decoupling --inject-fault bias-sign");
  CHECK(bad.code == 1);
  CHECK_FALSE(json::parse(bad.out)["passed"].get<bool>());
}

TEST_CASE("train is deterministic") {
  const std::string args = "train -d js --noise symmetric:0.2 --seed 9" + kSmall;
  const auto a = cli(args);
  const auto b = cli(args);
  REQUIRE(a.code == 0);
  CHECK(line_count(a.out) == 2);
  CHECK(a.out == b.out);
  CHECK(cli("train -d js --noise symmetric:0.2 --seed 10" + kSmall).out != a.out);
}

TEST_CASE("sweep has one row per cell and is deterministic") {
  const std::string args = "sweep-noise --rates 0,0.1,0.3 --divergences tv,kl --seeds 1,2" + kSmall;
  const auto a = cli(args);
  REQUIRE(a.code == 0);
  CHECK(line_count(a.out) == 1 + 3 * 2 * 2);
  CHECK(a.out == cli(args + " --threads 3").out);
}

TEST_CASE("sweep at rate zero reproduces train") {
  const auto sweep = lines(cli("sweep-noise --rates 0 --divergences tv,pearson --seeds 4" + kSmall).out);
  REQUIRE(sweep.size() == 3);
  const auto header = sweep[0];
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    const std::string tok = i == 1 ? "tv" : "pearson";
    const auto train = lines(cli("train --noise none --seed 4 -d " + tok + kSmall).out);
    REQUIRE(train.size() == 2);
    const json trow = [&] {
      json j;
      std::istringstream hs(train[0]), vs(train[1]);
      for (std::string k, v; std::getline(hs, k, ',') && std::getline(vs, v, ',');) j[k] = v;
      return j;
    }();
    std::istringstream hs(header), vs(sweep[i]);
    for (std::string k, v; std::getline(hs, k, ',') && std::getline(vs, v, ',');) {
      if (k == "accuracy" || k == "test_D_f" || k == "divergence") CHECK(trow[k] == v);
    }
  }
}

TEST_CASE("decouple reports zero TV bias and an exact identity") {
  const fs::path j = joint_file("[[0.3, 0.1], [0.2, 0.4]]");
  for (const char* src : {"optimal_clean", "optimal_noisy", "random"}) {
    const auto r = cli("decouple -d tv --noise binary:0.2,0.1 --g-source " + std::string(src) + " --joint " + j.string());
    REQUIRE(r.code == 0);
    const json out = json::parse(r.out);
    CHECK(out["bias"].get<double>() == 0.0);
    CHECK(out["shrink_factor"].get<double>() == Catch::Approx(0.7).margin(1e-15));
  }
  const json id = json::parse(cli("decouple -d kl --noise none --joint " + j.string()).out);
  CHECK(id["shrink_factor"].get<double>() == 1.0);
  CHECK(std::abs(id["residual"].get<double>()) <= 1e-12);
  const json kl = json::parse(cli("decouple -d kl --noise binary:0.2,0.1 --g-source optimal_clean --joint " + j.string()).out);
  CHECK(std::abs(kl["residual"].get<double>()) <= 1e-9);
  CHECK(kl["bias"].get<double>() != 0.0);
  CHECK(kl["config"]["divergence"] == "kl");
}

TEST_CASE("output directory from the environment receives artifacts") {
  const fs::path dir = fresh_dir("env_out");
  const auto r = cli("train -d tv --seed 2" + kSmall, false, "FDIV_OUTPUT_DIR=" + dir.string());
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "metrics.csv") == r.out);
  const json history = json::parse(slurp(dir / "history.json"));
  CHECK(history.contains("metadata"));
  CHECK(history["metadata"].contains("created_utc"));
  CHECK(r.out.find("created_utc") == std::string::npos);
}

TEST_CASE("artifacts differ only in metadata across runs") {
  const fs::path a = fresh_dir("rerun_a"), b = fresh_dir("rerun_b");
  const std::string args = "sweep-noise --rates 0,0.2 --divergences tv --seeds 1,2" + kSmall;
  REQUIRE(cli(args + "--output-dir " + a.string()).code == 0);
  REQUIRE(cli(args + "--output-dir " + b.string()).code == 0);
  CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));
  json ja = json::parse(slurp(a / "sweep.json")), jb = json::parse(slurp(b / "sweep.json"));
  ja.erase("metadata");
  jb.erase("metadata");
  CHECK(ja == jb);
}

TEST_CASE("missing subcommand and bad flags exit 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("train --epochs notanumber").code == 2);
  CHECK(cli("decouple").code == 2);
  CHECK(cli("verify nosuchsuite").code == 2);
}

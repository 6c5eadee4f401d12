#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "terl/cli.hpp"

using namespace terl;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
};

Invocation terl_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "terl");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream captured;
  auto* old = std::cout.rdbuf(captured.rdbuf());
  Invocation inv;
  inv.code = cli::run(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  inv.out = captured.str();
  return inv;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

fs::path scratch() {
  static const fs::path root = [] {
    auto p = fs::temp_directory_path() / "terl-cli-test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path tiny_config() {
  const auto p = scratch() / "tiny.json";
  if (!fs::exists(p)) {
    spit(p, R"({"hidden_dim": 8, "latent_dim": 4, "batch_size": 16, "initial_steps": 40, "total_steps": 80,
               "eval_every": 80, "eval_episodes": 1, "eval_trajectories": 3})");
  }
  return p;
}

/// One trained and evaluated run shared by the tests below.
fs::path trained_run() {
  const auto dir = scratch() / "run-a";
  if (!fs::exists(dir / "trajectories.trj")) {
    REQUIRE(terl_cli({"--config", tiny_config().string(), "--seed", "3", "train", "--alpha", "0", "--run-dir",
                      dir.string()}).code == 0);
    REQUIRE(terl_cli({"eval", dir.string()}).code == 0);
  }
  return dir;
}

}  // namespace

TEST_CASE("usage errors map to exit code 2") {
  CHECK(terl_cli({}).code == 2);
  CHECK(terl_cli({"fly"}).code == 2);
  CHECK(terl_cli({"--help"}).code == 0);
  CHECK(terl_cli({"--config", "/nonexistent/config.json", "train"}).code == 2);
  CHECK(terl_cli({"--threads", "0", "report", "x.csv"}).code == 2);
}

TEST_CASE("invalid configurations map to exit code 2") {
  const auto bad = scratch() / "bad.json";
  spit(bad, R"({"alpha": 0.1, "wings": 2})");
  CHECK(terl_cli({"--config", bad.string(), "train", "--run-dir", (scratch() / "never").string()}).code == 2);
  spit(bad, R"({"actor_entropy": "sometimes"})");
  CHECK(terl_cli({"--config", bad.string(), "train", "--run-dir", (scratch() / "never").string()}).code == 2);
  spit(bad, "{not json");
  CHECK(terl_cli({"--config", bad.string(), "train"}).code == 2);
  CHECK(terl_cli({"--config", tiny_config().string(), "train", "--sac-mode", "--alpha", "0.1", "--run-dir",
                  (scratch() / "never").string()}).code == 2);
  CHECK_FALSE(fs::exists(scratch() / "never" / "metrics.csv"));
}

TEST_CASE("alpha zero resolves to sac mode") {
  const auto dir = trained_run();
  const auto j = nlohmann::json::parse(slurp(dir / "resolved_config.json"));
  CHECK(j.at("alpha") == 0.0);
  CHECK(j.at("sac_mode") == true);
  CHECK(j.at("seed") == 3);
  CHECK(j.at("method") == "sac");
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "timing.csv"));
  CHECK(fs::exists(dir / "checkpoint.terl"));
}

TEST_CASE("resolved config round-trips") {
  const auto dir = trained_run();
  const auto text = slurp(dir / "resolved_config.json");
  auto cfg = config::load(dir / "resolved_config.json");
  CHECK(config::to_json(cfg).dump(2) + "\n" == text);
}

TEST_CASE("train prints its run directory and refuses to clobber") {
  const auto base = scratch() / "auto";
  auto inv = terl_cli({"--config", tiny_config().string(), "--seed", "4", "--out", base.string(), "train",
                       "--sac-mode"});
  REQUIRE(inv.code == 0);
  const fs::path dir = lines(inv.out).back();
  CHECK(dir.parent_path() == base);
  CHECK(dir.filename().string().rfind("run-4-", 0) == 0);
  CHECK(fs::exists(dir / "metrics.csv"));

  CHECK(terl_cli({"--config", tiny_config().string(), "train", "--run-dir", dir.string()}).code == 2);
  CHECK(terl_cli({"--config", tiny_config().string(), "--seed", "4", "train", "--sac-mode", "--run-dir",
                  dir.string(), "--overwrite"}).code == 0);
}

TEST_CASE("eval writes trajectories and returns") {
  const auto dir = trained_run();
  auto inv = terl_cli({"eval", dir.string(), "--episodes", "2", "--action-noise", "0.1"});
  REQUIRE(inv.code == 0);
  CHECK(inv.out.rfind("mean_return ", 0) == 0);
  CHECK(lines(slurp(dir / "eval.csv")).size() == 3);
  const auto settings = nlohmann::json::parse(slurp(dir / "eval_settings.json"));
  CHECK(settings.at("action_noise_sigma") == 0.1);
  CHECK(compress::parse_trajectories(slurp(dir / "trajectories.trj")).episodes == 2);
  REQUIRE(terl_cli({"eval", dir.string()}).code == 0);

  CHECK(terl_cli({"eval", (scratch() / "nowhere").string()}).code == 1);
  CHECK(terl_cli({"eval", dir.string(), "--mass-scale", "-1"}).code == 2);
}

TEST_CASE("sweep") {
  const auto dir = trained_run();
  const auto out = scratch() / "sweep";
  CHECK(terl_cli({"--out", out.string(), "sweep", dir.string(), "--levels", ""}).code == 2);
  CHECK(terl_cli({"--out", out.string(), "sweep", dir.string(), "--axis", "wind"}).code == 2);
  CHECK(terl_cli({"--out", out.string(), "sweep"}).code == 2);

  REQUIRE(terl_cli({"--out", out.string(), "sweep", dir.string(), "--axis", "mass", "--levels", "1.25", "--episodes",
                    "1"}).code == 0);
  const auto rows = lines(slurp(out / "robustness.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "method,seed,axis,level,raw,normalized,drop_pct");
  CHECK(rows[1].rfind("sac,3,mass,1.25,", 0) == 0);
  CHECK(lines(slurp(out / "robustness_aggregate.csv")).size() == 2);
  CHECK(fs::exists(out / "sweep_config.json"));

  const auto orphan = scratch() / "orphan";
  fs::create_directories(orphan);
  fs::copy_file(dir / "resolved_config.json", orphan / "resolved_config.json", fs::copy_options::overwrite_existing);
  CHECK(terl_cli({"--out", out.string(), "sweep", orphan.string(), "--levels", "1.25"}).code == 1);
}

TEST_CASE("compress") {
  const auto dir = trained_run();
  const auto out = scratch() / "comp";
  auto one = terl_cli({"--out", out.string(), "compress", dir.string()});
  REQUIRE(one.code == 0);
  const auto summary = lines(one.out);
  REQUIRE(summary.size() == 2);
  CHECK(summary[0] == "method,mean_compressed_bytes,normalized_bytes,compressor");
  CHECK(summary[1].find(",1.000000,") != std::string::npos);

  const auto twin = scratch() / "run-twin";
  fs::remove_all(twin);
  fs::copy(dir, twin);
  auto cfg = nlohmann::json::parse(slurp(twin / "resolved_config.json"));
  cfg["method"] = "twin";
  spit(twin / "resolved_config.json", cfg.dump(2));
  auto two = terl_cli({"--out", out.string(), "compress", dir.string(), twin.string()});
  REQUIRE(two.code == 0);
  const auto both = lines(two.out);
  REQUIRE(both.size() == 3);
  CHECK(both[1].find(",1.000000,") != std::string::npos);
  CHECK(both[2].find(",1.000000,") != std::string::npos);
  CHECK(lines(slurp(out / "compression.csv")).size() == 3);

  CHECK(terl_cli({"compress"}).code == 2);
  const auto bare = scratch() / "bare";
  fs::create_directories(bare);
  fs::copy_file(dir / "resolved_config.json", bare / "resolved_config.json", fs::copy_options::overwrite_existing);
  CHECK(terl_cli({"compress", bare.string()}).code == 1);
}

TEST_CASE("report over twenty pseudo-seeds") {
  const auto out = scratch() / "report";
  auto inv = terl_cli({"--out", out.string(), "report", TERL_FIXTURES "/report_20seeds.csv"});
  REQUIRE(inv.code == 0);
  CHECK(inv.out.rfind("# directional comparison", 0) == 0);
  const auto rows = lines(slurp(out / "summary.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "method,metric,n,mean,ci90,note");
  CHECK(rows[1] == "sac,return,20,2.775,1.30545983533,");
  CHECK(rows[2] == "sac,cost,20,-181.5,6.52781046002,");
  CHECK(fs::exists(out / "summary.txt"));
}

TEST_CASE("report flags single-seed groups and rejects bad input") {
  const auto out = scratch() / "report1";
  const auto csv = scratch() / "one.csv";
  spit(csv, "method,seed,return\nterl,1,-120.5\n");
  REQUIRE(terl_cli({"--out", out.string(), "report", csv.string()}).code == 0);
  CHECK(lines(slurp(out / "summary.csv"))[1] == "terl,return,1,-120.5,0,n=1");

  CHECK(terl_cli({"--out", out.string(), "report"}).code == 2);
  const auto broken = scratch() / "broken.csv";
  spit(broken, "method,seed,return\nterl,1,-120.5\nterl,2\n");
  CHECK(terl_cli({"--out", out.string(), "report", broken.string()}).code == 1);
  CHECK_THROWS_WITH(report::read_csv(broken), Catch::Matchers::ContainsSubstring("data row 2"));
  spit(broken, "method,seed,return\nterl,1,abc\n");
  CHECK(terl_cli({"--out", out.string(), "report", broken.string()}).code == 1);
  CHECK(terl_cli({"--out", out.string(), "report", (scratch() / "absent.csv").string()}).code == 1);
}

#include <catch_amalgamated.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "terl/evalharness.hpp"

using namespace terl;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

/// Short training runs stand in for real checkpoints.
fs::path tiny_checkpoint(const std::string& name, std::uint64_t seed) {
  const auto dir = fs::temp_directory_path() / ("terl-harness-" + name);
  const auto path = dir / "checkpoint.terl";
  if (fs::exists(path)) return path;
  trainer::TrainConfig cfg;
  cfg.seed = seed;
  cfg.total_steps = 80;
  cfg.initial_steps = 40;
  cfg.batch_size = 16;
  cfg.eval_every = 80;
  cfg.eval_episodes = 1;
  cfg.sac.hidden = 8;
  cfg.terl.latent_dim = 4;
  cfg.terl.sac_mode = true;
  cfg.terl.alpha = 0.0;
  trainer::train(cfg, dir);
  return path;
}

harness::SweepSpec small_sweep() {
  harness::SweepSpec spec;
  spec.checkpoints = {{"sac", 1, tiny_checkpoint("a", 1)}, {"other", 2, tiny_checkpoint("b", 2)}};
  spec.axis = harness::Axis::action_noise;
  spec.levels = {0.1, 0.3};
  spec.episodes = 2;
  spec.eval_seed = 11;
  return spec;
}

}  // namespace

TEST_CASE("drop percentage reproduces the reference table row") {
  const std::vector<std::pair<double, double>> cells{{755.0, 1000.0}, {935.0, 1000.0}, {967.0, 1000.0}, {803.0, 1000.0}};
  const std::vector<double> expected{75.5, 93.5, 96.7, 80.3};
  for (std::size_t i = 0; i < cells.size(); ++i) CHECK(harness::drop_percentage(cells[i].first, cells[i].second) == expected[i]);

  harness::RobustnessReport rep;
  const std::vector<double> levels{0.5, 0.75, 1.25, 1.5};
  for (std::size_t i = 0; i < 4; ++i) rep.cells.push_back({"terl", 1, levels[i], cells[i].first, 1000.0, {}, {}});
  harness::finalize_report(rep);
  REQUIRE(rep.aggregate.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rep.aggregate[i].level == levels[i]);
    CHECK(rep.aggregate[i].drop_pct.mean == expected[i]);
  }
}

TEST_CASE("drop percentage edge cases") {
  CHECK(harness::drop_percentage(1234.5, 1234.5) == 100.0);
  CHECK(harness::drop_percentage(-150.0, -150.0) == 100.0);
  CHECK(harness::drop_percentage(-300.0, -150.0) == 50.0);
  CHECK_FALSE(harness::drop_percentage(5.0, 0.0));
  CHECK_FALSE(harness::drop_percentage(0.0, -10.0));

  const std::vector<double> perturbed{812.25, 3.5, 1e4, 0.125, 77.0}, clean{900.0, 7.0, 2e4, 0.5, 11.0};
  for (std::size_t i = 0; i < perturbed.size(); ++i) {
    CHECK_THAT(*harness::drop_percentage(perturbed[i], clean[i]), WithinAbs(100.0 * perturbed[i] / clean[i], 1e-9));
  }
}

TEST_CASE("normalized scores") {
  auto single = harness::normalize_scores({{"t", {{"m", {3.0, 5.0, 4.0}}}}});
  CHECK(single.per_task["t"]["m"] == std::vector<double>{0.75, 1.25, 1.0});
  CHECK(single.aggregate["m"].mean == 1.0);

  auto two = harness::normalize_scores({{"t", {{"a", {100.0}}, {"b", {50.0}}}}});
  CHECK(two.per_task["t"]["a"][0] == 1.0);
  CHECK(two.per_task["t"]["b"][0] == 0.5);
}

TEST_CASE("normalized scores over three tasks match a hand calculation") {
  // A: best m1 mean 90; B: best m2 mean 20; C: tie at 4.
  // m1: (100/90 + 80/90 + 0.5 + 0.75 + 1.25) / 5 = 0.9
  // m2: (50/90 + 70/90 + 1 + 1 + 1) / 5 = 13/15
  harness::RawScores raw{{"A", {{"m1", {100.0, 80.0}}, {"m2", {50.0, 70.0}}}},
                         {"B", {{"m1", {10.0}}, {"m2", {20.0}}}},
                         {"C", {{"m1", {3.0, 5.0}}, {"m2", {4.0, 4.0}}}}};
  auto n = harness::normalize_scores(raw);
  CHECK_THAT(n.aggregate["m1"].mean, WithinAbs(0.9, 1e-9));
  CHECK_THAT(n.aggregate["m2"].mean, WithinAbs(13.0 / 15.0, 1e-9));
  CHECK_THAT(n.aggregate["m1"].ci90, WithinAbs(0.21749772006361803, 1e-9));
  CHECK_THAT(n.aggregate["m2"].ci90, WithinAbs(0.14620921128457526, 1e-9));
  CHECK(n.aggregate["m1"].n == 5);
}

TEST_CASE("normalization is scale equivariant per task") {
  harness::RawScores raw{{"A", {{"m1", {100.0, 80.0}}, {"m2", {50.0, 70.0}}}}, {"B", {{"m1", {10.0}}, {"m2", {20.0}}}}};
  auto base = harness::normalize_scores(raw);
  for (auto& [m, v] : raw["A"])
    for (auto& x : v) x *= 3.7;
  auto scaled = harness::normalize_scores(raw);
  for (const auto& m : {"m1", "m2"}) {
    for (std::size_t i = 0; i < base.per_task["A"][m].size(); ++i) {
      CHECK_THAT(scaled.per_task["A"][m][i], WithinAbs(base.per_task["A"][m][i], 1e-12));
    }
    CHECK(scaled.per_task["B"][m] == base.per_task["B"][m]);
  }
  CHECK_THROWS_AS(harness::normalize_scores({{"t", {}}}), std::invalid_argument);
  CHECK_THROWS_AS(harness::normalize_scores({{"t", {{"m", {}}}}}), std::invalid_argument);
}

TEST_CASE("mean and 90 percent interval") {
  auto a = harness::mean_ci90({1, 2, 3, 4, 5});
  CHECK(a.mean == 3.0);
  CHECK_THAT(a.ci90, WithinAbs(1.1630871536766736, 1e-9));
  auto b = harness::mean_ci90({-3.2, 7.7, 0.4, 12.9, -1.05, 6.0});
  CHECK_THAT(b.mean, WithinAbs(3.7916666666666665, 1e-9));
  CHECK_THAT(b.ci90, WithinAbs(4.106011567841553, 1e-9));
  auto one = harness::mean_ci90({2.5});
  CHECK(one.mean == 2.5);
  CHECK(one.ci90 == 0.0);
  CHECK(harness::mean_ci90({}).n == 0);
}

TEST_CASE("oracle controller fixed points") {
  CHECK(harness::oracle_pendulum_controller(0.0, 0.0) == 0.0);
  CHECK(std::abs(harness::oracle_pendulum_controller(1e-4, 0.0)) < 1e-2);
  const double hanging = harness::oracle_pendulum_controller(std::numbers::pi, 0.0);
  CHECK(hanging != 0.0);
  CHECK(std::abs(hanging) <= envs::PendulumEnv::kMaxTorque);
  // Moving away from the bottom with too little energy: torque follows the motion.
  CHECK(harness::oracle_pendulum_controller(std::numbers::pi - 0.5, 1.0) > 0.0);
  CHECK(harness::oracle_pendulum_controller(std::numbers::pi + 0.5, -1.0) < 0.0);
}

TEST_CASE("oracle constant recomputes from the fixture") {
  std::ifstream f(fs::path(TERL_FIXTURES) / "oracle_pendulum.json");
  REQUIRE(f);
  const auto j = nlohmann::json::parse(f);
  harness::OracleActor oracle;
  oracle.gains.k_energy = j.at("gains").at("k_energy");
  oracle.gains.k_p = j.at("gains").at("k_p");
  oracle.gains.k_d = j.at("gains").at("k_d");
  oracle.gains.switch_angle = j.at("gains").at("switch_angle");
  auto res = trainer::evaluate(oracle, j.at("env"), j.at("episodes"), envs::PerturbConfig{}, j.at("eval_seed"));
  CHECK_THAT(*res.mean_return(), WithinAbs(j.at("mean_return").get<double>(), 1e-9));
}

TEST_CASE("sweep shape and determinism") {
  auto spec = small_sweep();
  auto rep = harness::run_sweep(spec);
  CHECK(rep.cells.size() == 4);
  CHECK(rep.aggregate.size() == 4);
  auto again = harness::run_sweep(spec);
  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    CHECK(rep.cells[i].raw == again.cells[i].raw);
    CHECK(rep.cells[i].drop_pct == again.cells[i].drop_pct);
  }
  spec.threads = 3;
  auto threaded = harness::run_sweep(spec);
  for (std::size_t i = 0; i < rep.cells.size(); ++i) CHECK(rep.cells[i].raw == threaded.cells[i].raw);

  for (const auto& c : rep.cells) {
    REQUIRE(c.normalized);
    CHECK(*c.normalized <= 1.0);
    CHECK(*c.normalized >= 0.0);
  }
}

TEST_CASE("neutral level equals plain evaluation") {
  auto spec = small_sweep();
  spec.checkpoints.resize(1);
  spec.axis = harness::Axis::mass;
  spec.levels = {1.0};
  auto rep = harness::run_sweep(spec);
  REQUIRE(rep.cells.size() == 1);
  auto snap = trainer::PolicySnapshot<trainer::Real>::load(spec.checkpoints[0].path, 2.0);
  const double plain = *trainer::evaluate(snap, "pendulum", spec.episodes, envs::PerturbConfig{}, spec.eval_seed).mean_return();
  CHECK(rep.cells[0].raw == plain);
  CHECK(rep.cells[0].clean == plain);
  CHECK(*rep.cells[0].drop_pct == 100.0);
}

TEST_CASE("sweep validation") {
  auto spec = small_sweep();
  spec.levels.clear();
  CHECK_THROWS_AS(harness::run_sweep(spec), std::invalid_argument);
  spec = small_sweep();
  spec.levels = {-0.1};
  CHECK_THROWS(harness::run_sweep(spec));
  spec = small_sweep();
  spec.checkpoints.push_back({"missing", 3, "/nonexistent/checkpoint.terl"});
  CHECK_THROWS_WITH(harness::run_sweep(spec), Catch::Matchers::ContainsSubstring("missing"));
  CHECK(harness::parse_axis("obs_noise") == harness::Axis::obs_noise);
  CHECK_THROWS_AS(harness::parse_axis("wind"), std::invalid_argument);
  CHECK(harness::default_levels(harness::Axis::action_noise).size() == 6);
}

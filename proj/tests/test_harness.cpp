#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "irsdet/errors.hpp"
#include "irsdet/harness.hpp"

using namespace irsdet;

namespace {

// hand-built pooled results with known truth
std::vector<DetectionResult> toy_results() {
  std::vector<DetectionResult> out(2);
  out[0].a_hat = Eigen::Vector4d(0.9, 0.0, 0.4, 0.05);
  out[0].b_true = {1, 0, 1, 0};
  out[1].a_hat = Eigen::Vector4d(0.7, 0.2, 0.0, 0.0);
  out[1].b_true = {1, 0, 0, 1};
  return out;
}

ScenarioConfig quick_config() {
  ScenarioConfig cfg;
  cfg.devices = 10;
  cfg.antennas = 4;
  cfg.irs_elements = 8;
  cfg.signature_length = 5;
  cfg.noise_power = dbm_to_watts(-60.0);
  cfg.geometry.bs = {0.0, 0.0, 2.0};
  cfg.geometry.irs = {1.0, 3.0, 2.0};
  cfg.geometry.irs_area_center = {8.0, 0.0, 0.0};
  cfg.geometry.irs_area_radius = 1.5;
  cfg.geometry.direct_area_center = {0.0, 5.0, 0.0};
  cfg.geometry.direct_area_radius = 1.5;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("pm/pf boundaries") {
  const auto results = toy_results();
  const auto [pm0, pf0] = pm_pf(results, 0.0);
  CHECK(pf0 == 1.0);
  CHECK(pm0 == 0.0);
  const auto [pm_inf, pf_inf] =
      pm_pf(results, std::numeric_limits<double>::infinity());
  CHECK(pf_inf == 0.0);
  CHECK(pm_inf == 1.0);
}

TEST_CASE("a perfect detector scores zero on both metrics") {
  std::vector<DetectionResult> results(1);
  results[0].a_hat = Eigen::Vector4d(0.8, 0.0, 0.6, 0.0);
  results[0].b_true = {1, 0, 1, 0};
  const auto [pm, pf] = pm_pf(results, 0.3);  // half the smallest active gain
  CHECK(pm == 0.0);
  CHECK(pf == 0.0);
}

TEST_CASE("degenerate pools raise an undefined-metric error") {
  std::vector<DetectionResult> all_active(1);
  all_active[0].a_hat = Eigen::Vector2d(0.5, 0.6);
  all_active[0].b_true = {1, 1};
  CHECK_THROWS_WITH_AS(pm_pf(all_active, 0.1), doctest::Contains("inactive"), NumericalError);

  std::vector<DetectionResult> all_idle(1);
  all_idle[0].a_hat = Eigen::Vector2d(0.5, 0.6);
  all_idle[0].b_true = {0, 0};
  CHECK_THROWS_WITH_AS(pm_pf(all_idle, 0.1), doctest::Contains("no active"), NumericalError);
}

TEST_CASE("roc sweep endpoints and monotonicity") {
  const auto results = toy_results();
  const auto endpoints =
      roc_sweep(results, {0.0, std::numeric_limits<double>::infinity()});
  CHECK(endpoints.front().pf == 1.0);
  CHECK(endpoints.front().pm == 0.0);
  CHECK(endpoints.back().pf == 0.0);
  CHECK(endpoints.back().pm == 1.0);

  // random results: pf non-increasing, pm non-decreasing along the sweep
  Rng rng(8);
  std::vector<DetectionResult> random_results(20);
  for (auto& r : random_results) {
    r.a_hat.resize(30);
    r.b_true.resize(30);
    for (int k = 0; k < 30; ++k) {
      r.a_hat[k] = rng.uniform();
      r.b_true[k] = rng.uniform() < 0.4 ? 1 : 0;
    }
  }
  const auto grid = default_threshold_grid(random_results);
  CHECK(grid.size() == 50);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
  const auto curve = roc_sweep(random_results, grid);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].pf <= curve[i - 1].pf);
    CHECK(curve[i].pm >= curve[i - 1].pm);
  }
  CHECK_THROWS_AS(roc_sweep(random_results, {1.0, 0.5}), ConfigError);
}

TEST_CASE("equal error rate: perfect and chance-level detectors") {
  std::vector<DetectionResult> perfect(1);
  perfect[0].a_hat = Eigen::Vector4d(0.8, 0.0, 0.6, 0.0);
  perfect[0].b_true = {1, 0, 1, 0};
  const auto eer = equal_error_rate(perfect);
  CHECK(eer.rate == doctest::Approx(0.0));
  CHECK(eer.threshold > 0.0);
  CHECK(eer.threshold <= 0.8 * (1.0 + 1e-9) + 1e-300);

  Rng rng(9);
  std::vector<DetectionResult> chance(200);
  for (auto& r : chance) {
    r.a_hat.resize(50);
    r.b_true.resize(50);
    for (int k = 0; k < 50; ++k) {
      r.a_hat[k] = rng.uniform();
      r.b_true[k] = rng.uniform() < 0.5 ? 1 : 0;  // balanced pool
    }
  }
  const auto chance_eer = equal_error_rate(chance);
  CHECK(std::abs(chance_eer.rate - 0.5) < 0.05);
}

TEST_CASE("pooled metrics equal metrics of concatenated vectors") {
  const auto results = toy_results();
  DetectionResult merged;
  merged.a_hat.resize(8);
  merged.a_hat << 0.9, 0.0, 0.4, 0.05, 0.7, 0.2, 0.0, 0.0;
  merged.b_true = {1, 0, 1, 0, 1, 0, 0, 1};
  for (double t : {0.05, 0.3, 0.75}) {
    const auto split = pm_pf(results, t);
    const auto whole = pm_pf({merged}, t);
    CHECK(split.first == whole.first);
    CHECK(split.second == whole.second);
  }
}

TEST_CASE("detector ids parse to the right kinds") {
  CHECK(DetectorSpec::parse("cd").kind == DetectorKind::kCd);
  CHECK(DetectorSpec::parse("pgd-perfect").expert == ExpertKind::kPerfectGrouping);
  CHECK(DetectorSpec::parse("pgd-expert2").expert == ExpertKind::kExpert2);
  CHECK(DetectorSpec::parse("unfolded-expert3").kind == DetectorKind::kUnfolded);
  CHECK(DetectorSpec::parse("unfolded-moe").use_gate);
  CHECK_THROWS_AS(DetectorSpec::parse("volume-detector"), ConfigError);
}

TEST_CASE("monte carlo runs are scheduling-invariant") {
  const auto cfg = quick_config();
  const auto spec = DetectorSpec::parse("cd");
  const auto serial = run_monte_carlo(cfg, spec, 12, 99, 1);
  const auto threaded = run_monte_carlo(cfg, spec, 12, 99, 4);
  REQUIRE(serial.results.size() == threaded.results.size());
  for (std::size_t t = 0; t < serial.results.size(); ++t) {
    CHECK(serial.results[t].b_true == threaded.results[t].b_true);
    CHECK((serial.results[t].a_hat - threaded.results[t].a_hat).norm() == 0.0);
  }
  const auto eer1 = equal_error_rate(serial.results);
  const auto eer2 = equal_error_rate(threaded.results);
  CHECK(eer1.rate == eer2.rate);
}

TEST_CASE("single-trial run is deterministic and labeled") {
  const auto cfg = quick_config();
  const auto spec = DetectorSpec::parse("pgd-perfect");
  const auto once = run_monte_carlo(cfg, spec, 1, 5, 1);
  const auto again = run_monte_carlo(cfg, spec, 1, 5, 1);
  REQUIRE(once.results.size() == 1);
  CHECK(once.results[0].detector == "pgd-perfect");
  CHECK((once.results[0].a_hat - again.results[0].a_hat).norm() == 0.0);
  CHECK(once.results[0].a_hat.minCoeff() >= 0.0);
}

TEST_CASE("missing checkpoints are reported for learned detectors") {
  const auto cfg = quick_config();
  const auto spec = DetectorSpec::parse("unfolded-perfect");
  CHECK_THROWS_AS(run_monte_carlo(cfg, spec, 1, 5, 1), CheckpointError);
  const auto moe = DetectorSpec::parse("unfolded-moe", "nonexistent.ckpt", "");
  CHECK_THROWS_AS(run_monte_carlo(cfg, moe, 1, 5, 1), CheckpointError);
}

TEST_CASE("dataset generation is reproducible and rebuildable") {
  auto cfg = quick_config();
  const auto d1 = make_dataset(cfg, 6, 31, MixturePolicy::kSweepPrior);
  const auto d2 = make_dataset(cfg, 6, 31, MixturePolicy::kSweepPrior);
  REQUIRE(d1.size() == 6);
  for (std::size_t i = 0; i < d1.size(); ++i) {
    CHECK((d1[i].batch.Y - d2[i].batch.Y).norm() == 0.0);
    CHECK(d1[i].scenario_seed == d2[i].scenario_seed);
    const auto rebuilt = rebuild_scenario(cfg, d1[i]);
    CHECK(rebuilt.groups == d1[i].groups);
  }
  // mixtures vary across samples under the sweep prior
  bool mixtures_differ = false;
  for (std::size_t i = 1; i < d1.size(); ++i)
    if (d1[i].groups != d1[0].groups) mixtures_differ = true;
  CHECK(mixtures_differ);

  // write/read and reassemble as training samples
  const std::string path = "harness_test_dataset.bin";
  write_dataset(path, d1);
  const auto back = read_dataset(path);
  REQUIRE(back.size() == d1.size());
  const auto samples =
      assemble_train_samples(cfg, back, DetectorSpec::parse("unfolded-perfect", "x"), nullptr);
  CHECK(samples.size() == d1.size());
  CHECK(samples[0].model.noise_power == 1.0);
  std::remove(path.c_str());
}

TEST_CASE("mixture prior covers the sweep grid and stays on the simplex") {
  Rng rng(11);
  int grid_hits = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto rho = sample_mixture(rng);
    CHECK(std::abs(rho[0] + rho[1] + rho[2] - 1.0) < 1e-12);
    CHECK(rho[0] >= 0.0);
    if (rho[1] == rho[2] && rho[0] <= 0.8) ++grid_hits;
  }
  CHECK(grid_hits > 600);  // roughly half the draws come from the grid
}

TEST_CASE("csv emitters use stable formatting") {
  std::vector<MixSweepRow> rows{{"cd", 0.2, 0.125, 0.5}};
  CHECK(mix_csv(rows) == "detector,k1_fraction,eer,threshold\ncd,0.2,0.125,0.5\n");
  std::vector<std::pair<std::string, std::vector<RocPoint>>> tables;
  tables.emplace_back("cd", std::vector<RocPoint>{{0.5, 0.25, 0.1, 12}});
  CHECK(roc_csv(tables) == "detector,threshold,pf,pm,trials\ncd,0.5,0.25,0.1,12\n");
}

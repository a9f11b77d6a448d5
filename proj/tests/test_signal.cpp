#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "irsdet/errors.hpp"
#include "irsdet/signal.hpp"

using namespace irsdet;

namespace {

struct SmallWorld {
  ScenarioRealization scenario;
  LosComponents los;
  Eigen::VectorXcd theta;
  Eigen::MatrixXcd signatures;
};

SmallWorld make_world(int devices = 8, int antennas = 4, int elements = 8, int length = 4,
                      std::uint64_t seed = 21) {
  ScenarioConfig cfg;
  cfg.devices = devices;
  cfg.antennas = antennas;
  cfg.irs_elements = elements;
  cfg.signature_length = length;
  cfg.seed = seed;
  SmallWorld w;
  w.scenario = build_scenario(cfg);
  w.los = make_los(w.scenario);
  Rng trng = Rng::derive(seed, {stream::kPhaseShifts});
  w.theta = generate_phase_shifts(elements, trng);
  Rng srng = Rng::derive(seed, {stream::kSignatures});
  w.signatures = generate_signatures(devices, length, srng);
  return w;
}

}  // namespace

TEST_CASE("signature matrix shape, reproducibility and scale") {
  Rng a(17), b(17);
  const auto s1 = generate_signatures(100, 20, a);
  const auto s2 = generate_signatures(100, 20, b);
  CHECK(s1.rows() == 20);
  CHECK(s1.cols() == 100);
  CHECK((s1 - s2).norm() == 0.0);

  // columns are distinct
  for (int k = 1; k < 100; ++k) CHECK((s1.col(k) - s1.col(k - 1)).norm() > 1e-6);

  Rng c(18);
  const auto wide = generate_signatures(2000, 20, c);  // 40k entries
  CHECK(std::abs(wide.cwiseAbs2().mean() - 1.0) < 0.02);
}

TEST_CASE("noise-only frame matches the configured noise power") {
  auto w = make_world(6, 50, 8, 40);
  ActivityVector silent;
  silent.b.assign(6, 0);
  silent.a = Eigen::VectorXd::Zero(6);
  Rng chan_rng(22);
  const auto channels = sample_channels(w.scenario, w.los, w.theta, chan_rng);
  Rng noise_rng(23);
  const auto y = synthesize_received(w.scenario, channels, silent, w.signatures, noise_rng);
  const double empirical = y.cwiseAbs2().mean();
  CHECK(std::abs(empirical - w.scenario.config.noise_power) / w.scenario.config.noise_power <
        0.02);
}

TEST_CASE("single direct device without noise is an exact rank-one frame") {
  auto w = make_world(5, 4, 8, 4);
  w.scenario.config.noise_power = 0.0;  // bypass for the exactness check
  // force a direct-Rayleigh device
  int k3 = -1;
  for (int k = 0; k < 5; ++k)
    if (w.scenario.groups[k] == Group::kDirectRayleigh) k3 = k;
  REQUIRE(k3 >= 0);

  ActivityVector act;
  act.b.assign(5, 0);
  act.a = Eigen::VectorXd::Zero(5);
  act.b[k3] = 1;
  act.a[k3] = 0.37;

  Rng chan_rng(24);
  const auto channels = sample_channels(w.scenario, w.los, w.theta, chan_rng);
  Rng noise_rng(25);
  const auto y = synthesize_received(w.scenario, channels, act, w.signatures, noise_rng);
  const Eigen::MatrixXcd expected =
      0.37 * w.signatures.col(k3) * channels.f.col(k3).adjoint();
  CHECK((y - expected).norm() == 0.0);
}

TEST_CASE("received frame is linear in the activity amplitudes") {
  auto w = make_world();
  Rng act_rng(26);
  auto act = sample_activity(w.scenario, act_rng);
  if (act.a.maxCoeff() == 0.0) {
    act.b[0] = 1;
    act.a[0] = std::sqrt(w.scenario.config.tx_power * w.scenario.beta[0]);
  }
  ActivityVector doubled = act;
  doubled.a *= 2.0;
  ActivityVector silent;
  silent.b.assign(w.scenario.devices(), 0);
  silent.a = Eigen::VectorXd::Zero(w.scenario.devices());

  Rng c1(27), c2(27), c3(27);
  const auto ch = sample_channels(w.scenario, w.los, w.theta, c1);
  Rng n1(28), n2(28), n3(28);
  const auto y1 = synthesize_received(w.scenario, ch, act, w.signatures, n1);
  const auto y2 = synthesize_received(w.scenario, ch, doubled, w.signatures, n2);
  const auto noise = synthesize_received(w.scenario, ch, silent, w.signatures, n3);
  CHECK(((y2 - noise) - 2.0 * (y1 - noise)).norm() / (y1 - noise).norm() < 1e-12);
}

TEST_CASE("superposition over disjoint supports") {
  auto w = make_world();
  const int k_count = w.scenario.devices();
  ActivityVector left, right, both, silent;
  for (auto* act : {&left, &right, &both, &silent}) {
    act->b.assign(k_count, 0);
    act->a = Eigen::VectorXd::Zero(k_count);
  }
  for (int k = 0; k < k_count; ++k) {
    const double gain = std::sqrt(w.scenario.config.tx_power * w.scenario.beta[k]);
    auto* side = (k % 2 == 0) ? &left : &right;
    side->b[k] = 1;
    side->a[k] = gain;
    both.b[k] = 1;
    both.a[k] = gain;
  }

  Rng c(29);
  const auto ch = sample_channels(w.scenario, w.los, w.theta, c);
  Rng n1(30), n2(30), n3(30), n4(30);
  const auto y_left = synthesize_received(w.scenario, ch, left, w.signatures, n1);
  const auto y_right = synthesize_received(w.scenario, ch, right, w.signatures, n2);
  const auto y_both = synthesize_received(w.scenario, ch, both, w.signatures, n3);
  const auto noise = synthesize_received(w.scenario, ch, silent, w.signatures, n4);
  const auto lhs = y_both - noise;
  const auto rhs = (y_left - noise) + (y_right - noise);
  CHECK((lhs - rhs).norm() / lhs.norm() < 1e-12);
}

TEST_CASE("dataset records survive a write/read cycle") {
  auto w = make_world(6, 3, 8, 4);
  Rng act_rng(31), chan_rng(32), noise_rng(33);
  const auto act = sample_activity(w.scenario, act_rng);
  const auto ch = sample_channels(w.scenario, w.los, w.theta, chan_rng);

  SampleRecord rec;
  rec.batch.S = w.signatures;
  rec.batch.Y = synthesize_received(w.scenario, ch, act, w.signatures, noise_rng);
  rec.batch.noise_power = w.scenario.config.noise_power;
  rec.has_labels = true;
  rec.a_true = act.a;
  rec.b_true = act.b;
  rec.groups = w.scenario.groups;
  rec.scenario_seed = 9001;
  rec.seeded_mixture = true;
  rec.theta = w.theta;

  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  write_record(buf, rec);
  SampleRecord unlabeled = rec;
  unlabeled.has_labels = false;
  unlabeled.theta.resize(0);
  write_record(buf, unlabeled);

  SampleRecord back;
  REQUIRE(read_record(buf, back));
  CHECK((back.batch.S - rec.batch.S).norm() == 0.0);
  CHECK((back.batch.Y - rec.batch.Y).norm() == 0.0);
  CHECK(back.batch.noise_power == rec.batch.noise_power);
  CHECK(back.scenario_seed == 9001);
  CHECK(back.seeded_mixture);
  CHECK(back.a_true == rec.a_true);
  CHECK(back.b_true == rec.b_true);
  CHECK(back.groups == rec.groups);
  CHECK((back.theta - rec.theta).norm() == 0.0);

  SampleRecord back2;
  REQUIRE(read_record(buf, back2));
  CHECK_FALSE(back2.has_labels);
  CHECK(back2.theta.size() == 0);

  SampleRecord done;
  CHECK_FALSE(read_record(buf, done));
}

TEST_CASE("malformed container is rejected") {
  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  buf << "definitely not a container";
  SampleRecord rec;
  CHECK_THROWS_AS(read_record(buf, rec), DataError);
}

TEST_CASE("dimension mismatches are structural errors") {
  auto w = make_world(6, 3, 8, 4);
  Rng act_rng(34), chan_rng(35), noise_rng(36);
  const auto act = sample_activity(w.scenario, act_rng);
  const auto ch = sample_channels(w.scenario, w.los, w.theta, chan_rng);
  const Eigen::MatrixXcd bad = Eigen::MatrixXcd::Zero(4, 5);  // wrong K
  CHECK_THROWS_AS(synthesize_received(w.scenario, ch, act, bad, noise_rng), DataError);
}

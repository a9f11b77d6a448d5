#include <doctest.h>

#include <Eigen/LU>
#include <cmath>

#include "irsdet/covstats.hpp"
#include "irsdet/errors.hpp"
#include "irsdet/signal.hpp"
#include "irsdet/solvers.hpp"
#include "irsdet/unfolding.hpp"

using namespace irsdet;

namespace {

struct Instance {
  ModelContext model;
  Eigen::MatrixXcd y;
};

Instance random_instance(std::uint64_t seed, ExpertKind kind, int devices = 6, int antennas = 2,
                         int length = 4) {
  ScenarioConfig cfg;
  cfg.devices = devices;
  cfg.antennas = antennas;
  cfg.irs_elements = 8;
  cfg.signature_length = length;
  cfg.seed = seed;
  const auto scenario = build_scenario(cfg);
  const auto los = make_los(scenario);
  Rng trng = Rng::derive(seed, {stream::kPhaseShifts});
  const auto theta = generate_phase_shifts(cfg.irs_elements, trng);
  Rng srng = Rng::derive(seed, {stream::kSignatures});
  const auto signatures = generate_signatures(devices, length, srng);

  Instance inst;
  inst.model = noise_normalized(make_model(scenario, los, theta, signatures, kind));
  Rng yrng = Rng::derive(seed, {stream::kNoise});
  inst.y.resize(length, antennas);
  for (int m = 0; m < antennas; ++m)
    for (int l = 0; l < length; ++l) inst.y(l, m) = 1.5 * yrng.cgaussian();
  return inst;
}

TrainSample make_sample(std::uint64_t seed, ExpertKind kind) {
  const auto inst = random_instance(seed, kind);
  TrainSample s;
  s.model = inst.model;
  s.y = inst.y;
  Rng trng = Rng::derive(seed, {stream::kActivity});
  s.target.resize(inst.model.devices());
  for (int k = 0; k < inst.model.devices(); ++k)
    s.target[k] = trng.uniform() < 0.3 ? trng.uniform(0.5, 1.5) : 0.0;
  s.weight = 1.0;
  return s;
}

UnfoldedParams random_params(std::uint64_t seed, int length, int depth) {
  Rng rng(seed);
  UnfoldedParams params;
  for (int i = 0; i < depth; ++i) {
    UnfoldedLayer layer;
    layer.A.resize(length, length);
    layer.B.resize(length, length);
    for (int c = 0; c < length; ++c)
      for (int r = 0; r < length; ++r) {
        layer.A(r, c) = 0.3 * rng.cgaussian();
        layer.B(r, c) = 0.3 * rng.cgaussian();
      }
    layer.A += 0.5 * Eigen::MatrixXcd::Identity(length, length);
    layer.B += 0.5 * Eigen::MatrixXcd::Identity(length, length);
    layer.eta = 0.05 + 0.02 * i;
    params.layers.push_back(layer);
  }
  return params;
}

}  // namespace

TEST_CASE("zero step size passes the activity through") {
  const auto inst = random_instance(400, ExpertKind::kPerfectGrouping);
  UnfoldedLayer layer = random_params(1, inst.model.length(), 1).layers[0];
  layer.eta = 0.0;
  Eigen::VectorXd a(inst.model.devices());
  for (int k = 0; k < inst.model.devices(); ++k) a[k] = 0.1 * k;
  CHECK((unfolded_layer(inst.model, inst.y, a, layer) - a).norm() == 0.0);
}

TEST_CASE("zero surrogate annihilates the update") {
  const auto inst = random_instance(401, ExpertKind::kPerfectGrouping);
  const int length = inst.model.length();
  UnfoldedLayer layer{Eigen::MatrixXcd::Zero(length, length),
                      Eigen::MatrixXcd::Zero(length, length), 0.7};
  Eigen::VectorXd a(inst.model.devices());
  for (int k = 0; k < inst.model.devices(); ++k) a[k] = 0.2 + 0.1 * k;
  CHECK((unfolded_layer(inst.model, inst.y, a, layer) - a).norm() == 0.0);
}

TEST_CASE("unfolded forward with exact inverses reproduces fixed-step pgd") {
  // shared-covariance instance (one expert kind for every device)
  const auto inst = random_instance(402, ExpertKind::kExpert3, 6, 3, 4);
  REQUIRE(inst.model.shared_covariance);
  const int depth = 4;
  const double eta = 0.02;

  // replay pgd, capturing the covariance at each iterate to build exact
  // surrogates A = Sigma^-2, B = 0
  UnfoldedParams params;
  Eigen::VectorXd a = Eigen::VectorXd::Zero(inst.model.devices());
  const NllEvaluator eval(inst.model, inst.y);
  for (int i = 0; i < depth; ++i) {
    const Eigen::MatrixXcd sigma = covariance_ym(inst.model, 0, a);
    const Eigen::MatrixXcd sigma_inv = sigma.inverse();
    params.layers.push_back({sigma_inv * sigma_inv,
                             Eigen::MatrixXcd::Zero(sigma.rows(), sigma.cols()), eta});
    Eigen::VectorXd grad;
    eval.value_and_gradient(a, grad);
    a = (a - eta * grad).cwiseMax(0.0);
  }

  PgdOptions opts;
  opts.backtracking = false;
  opts.fixed_step = eta;
  opts.max_iters = depth;
  opts.tol = 0.0;
  const auto pgd = pgd_solve(inst.model, inst.y, opts);
  const auto unfolded = unfolded_forward(inst.model, inst.y, params);
  CHECK((unfolded - pgd.a_hat).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((unfolded - a).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("forward output is never negative") {
  for (int trial = 0; trial < 4; ++trial) {
    const auto inst = random_instance(410 + trial, ExpertKind::kPerfectGrouping);
    const auto params = random_params(500 + trial, inst.model.length(), 3);
    const auto a = unfolded_forward(inst.model, inst.y, params);
    CHECK(a.minCoeff() >= 0.0);
  }
}

TEST_CASE("parameter gradients match finite differences") {
  const ExpertKind kinds[] = {ExpertKind::kPerfectGrouping, ExpertKind::kExpert1,
                              ExpertKind::kExpert2, ExpertKind::kExpert3};
  for (int trial = 0; trial < 4; ++trial) {
    std::vector<TrainSample> samples;
    samples.push_back(make_sample(600 + 10 * trial, kinds[trial]));
    samples.push_back(make_sample(601 + 10 * trial, kinds[trial]));
    std::vector<const TrainSample*> batch{&samples[0], &samples[1]};

    UnfoldedParams params = random_params(700 + trial, samples[0].model.length(), 2);
    UnfoldedGradients grads;
    batch_loss_and_gradients(batch, params, grads);

    const double h = 1e-5;
    for (int li = 0; li < params.depth(); ++li) {
      auto check_matrix = [&](Eigen::MatrixXcd UnfoldedLayer::*field,
                              const Eigen::MatrixXcd& analytic) {
        double max_rel = 0.0;
        for (int c = 0; c < params.layers[li].A.cols(); ++c)
          for (int r = 0; r < params.layers[li].A.rows(); ++r)
            for (int part = 0; part < 2; ++part) {
              UnfoldedParams pp = params, pm = params;
              const std::complex<double> delta =
                  part == 0 ? std::complex<double>(h, 0.0) : std::complex<double>(0.0, h);
              (pp.layers[li].*field)(r, c) += delta;
              (pm.layers[li].*field)(r, c) -= delta;
              const double fd =
                  (batch_loss(batch, pp) - batch_loss(batch, pm)) / (2.0 * h);
              const double an =
                  part == 0 ? analytic(r, c).real() : analytic(r, c).imag();
              max_rel = std::max(max_rel, std::abs(an - fd) / std::max(1e-3, std::abs(fd)));
            }
        CHECK(max_rel < 1e-4);
      };
      check_matrix(&UnfoldedLayer::A, grads.layers[li].A);
      check_matrix(&UnfoldedLayer::B, grads.layers[li].B);

      UnfoldedParams pp = params, pm = params;
      pp.layers[li].eta += h;
      pm.layers[li].eta -= h;
      const double fd_eta = (batch_loss(batch, pp) - batch_loss(batch, pm)) / (2.0 * h);
      CHECK(std::abs(grads.layers[li].eta - fd_eta) / std::max(1e-3, std::abs(fd_eta)) < 1e-4);
    }
  }
}

TEST_CASE("a fully clamped network has zero parameter gradients") {
  auto sample = make_sample(800, ExpertKind::kExpert3);
  sample.y.setZero();  // zero data with a = 0 gives positive d, so pre < 0
  const int length = sample.model.length();
  UnfoldedParams params;
  params.layers.push_back({Eigen::MatrixXcd::Zero(length, length),
                           Eigen::MatrixXcd::Identity(length, length), 1.0});
  std::vector<const TrainSample*> batch{&sample};
  UnfoldedGradients grads;
  batch_loss_and_gradients(batch, params, grads);
  CHECK(grads.layers[0].A.norm() == 0.0);
  CHECK(grads.layers[0].B.norm() == 0.0);
  CHECK(grads.layers[0].eta == 0.0);
}

TEST_CASE("single-layer step-size gradient matches the chain rule by hand") {
  auto sample = make_sample(801, ExpertKind::kExpert3);
  UnfoldedParams params = random_params(802, sample.model.length(), 1);
  std::vector<const TrainSample*> batch{&sample};
  UnfoldedGradients grads;
  batch_loss_and_gradients(batch, params, grads);

  // a_next(eta) = max(-eta d, 0) from a = 0, so
  // d loss/d eta = sum over unclamped k of (2 w^2 / K) (a_next_k - t_k) (-d_k).
  // A probe layer with eta = 1 exposes d on the unclamped coordinates:
  // max(-d, 0) = -d exactly where the update survives the clamp.
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(sample.model.devices());
  UnfoldedLayer probe = params.layers[0];
  probe.eta = 1.0;
  const Eigen::VectorXd a_next =
      unfolded_layer(sample.model, sample.y, zero, params.layers[0]);
  Eigen::VectorXd d_direct(sample.model.devices());
  {
    const Eigen::VectorXd probe_out = unfolded_layer(sample.model, sample.y, zero, probe);
    for (int k = 0; k < sample.model.devices(); ++k)
      d_direct[k] = probe_out[k] > 0.0 ? -probe_out[k] : std::nan("");
  }
  double expected = 0.0;
  const double k_count = sample.model.devices();
  for (int k = 0; k < sample.model.devices(); ++k) {
    if (a_next[k] <= 0.0) continue;  // clamped: zero subgradient
    REQUIRE(std::isfinite(d_direct[k]));
    expected += (2.0 / k_count) * (a_next[k] - sample.target[k]) * (-d_direct[k]);
  }
  CHECK(grads.layers[0].eta == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("incremental training refines the stack and reproduces bitwise") {
  std::vector<TrainSample> samples;
  for (int i = 0; i < 40; ++i)
    samples.push_back(make_sample(900 + i, ExpertKind::kPerfectGrouping));

  TrainConfig cfg;
  cfg.dataset_size = static_cast<int>(samples.size());
  cfg.batch_size = 8;
  cfg.learning_rate = 5e-3;
  cfg.epochs_per_stage = 6;
  cfg.seed = 77;

  const int depth = 3;
  const auto r1 = train_unfolded(samples, depth, cfg);
  CHECK(static_cast<int>(r1.stage_traces.size()) == depth);
  CHECK(r1.params.depth() == depth);
  CHECK(r1.final_loss < r1.initial_loss);
  for (std::size_t i = 1; i < r1.stage_traces.size(); ++i)
    CHECK(r1.stage_traces[i].back() <= r1.stage_traces[i - 1].back() + 1e-6);
  for (const auto& layer : r1.params.layers) CHECK(layer.eta > 0.0);

  const auto r2 = train_unfolded(samples, depth, cfg);
  REQUIRE(r1.stage_traces.size() == r2.stage_traces.size());
  for (std::size_t s = 0; s < r1.stage_traces.size(); ++s) {
    REQUIRE(r1.stage_traces[s].size() == r2.stage_traces[s].size());
    for (std::size_t e = 0; e < r1.stage_traces[s].size(); ++e)
      CHECK(r1.stage_traces[s][e] == r2.stage_traces[s][e]);
  }
}

TEST_CASE("checkpoints round trip") {
  const auto params = random_params(1000, 4, 2);
  const std::string path = "unfolded_test_ckpt.bin";
  save_unfolded(path, params, "scaled-mse", 123, 2.5, 0.75);
  const auto back = load_unfolded(path);
  CHECK(back.seed == 123);
  CHECK(back.y_scale == 2.5);
  CHECK(back.a_scale == 0.75);
  REQUIRE(back.params.depth() == params.depth());
  for (int i = 0; i < params.depth(); ++i) {
    CHECK((back.params.layers[i].A - params.layers[i].A).norm() == 0.0);
    CHECK((back.params.layers[i].B - params.layers[i].B).norm() == 0.0);
    CHECK(back.params.layers[i].eta == params.layers[i].eta);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_unfolded(path), CheckpointError);
}

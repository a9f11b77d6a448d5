#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "irsdet/errors.hpp"
#include "irsdet/harness.hpp"

namespace py = pybind11;
using namespace irsdet;

namespace {

// Scenario-bound simulation state so Python callers do not have to wire the
// per-module pieces together by hand.
struct Simulation {
  ScenarioConfig config;
  ScenarioRealization scenario;
  LosComponents los;
  Eigen::VectorXcd theta;
  Eigen::MatrixXcd signatures;

  explicit Simulation(const ScenarioConfig& cfg) : config(cfg) {
    scenario = build_scenario(cfg);
    los = make_los(scenario);
    Rng trng = Rng::derive(cfg.seed, {stream::kPhaseShifts});
    theta = generate_phase_shifts(cfg.irs_elements, trng);
    Rng srng = Rng::derive(cfg.seed, {stream::kSignatures});
    signatures = generate_signatures(cfg.devices, cfg.signature_length, srng);
  }

  py::tuple draw_frame(std::uint64_t trial) const {
    const std::uint64_t trial_seed = Rng::mix(config.seed, {stream::kTrial, trial});
    Rng act_rng(Rng::mix(trial_seed, {stream::kActivity}));
    Rng chan_rng(Rng::mix(trial_seed, {stream::kChannels}));
    Rng noise_rng(Rng::mix(trial_seed, {stream::kNoise}));
    const ActivityVector activity = sample_activity(scenario, act_rng);
    const ChannelRealization channels = sample_channels(scenario, los, theta, chan_rng);
    const Eigen::MatrixXcd y =
        synthesize_received(scenario, channels, activity, signatures, noise_rng);
    std::vector<int> b(activity.b.begin(), activity.b.end());
    return py::make_tuple(y, activity.a, b);
  }

  ModelContext model(const std::string& expert) const {
    return make_model(scenario, los, theta, signatures,
                      DetectorSpec::parse(expert == "cd" ? "pgd-perfect" : "pgd-" + expert).expert);
  }
};

ExpertKind expert_from_string(const std::string& name) {
  if (name == "perfect") return ExpertKind::kPerfectGrouping;
  if (name == "expert1") return ExpertKind::kExpert1;
  if (name == "expert2") return ExpertKind::kExpert2;
  if (name == "expert3") return ExpertKind::kExpert3;
  throw ConfigError("unknown expert: " + name);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "covariance-based activity detection for IRS-aided random access";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<NumericalError>(m, "NumericalError");
  py::register_exception<CheckpointError>(m, "CheckpointError");

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init<>())
      .def_readwrite("antennas", &ScenarioConfig::antennas)
      .def_readwrite("irs_elements", &ScenarioConfig::irs_elements)
      .def_readwrite("devices", &ScenarioConfig::devices)
      .def_readwrite("signature_length", &ScenarioConfig::signature_length)
      .def_readwrite("group_proportions", &ScenarioConfig::group_proportions)
      .def_readwrite("kappa_device_bs", &ScenarioConfig::kappa_device_bs)
      .def_readwrite("kappa_device_irs", &ScenarioConfig::kappa_device_irs)
      .def_readwrite("kappa_irs_bs", &ScenarioConfig::kappa_irs_bs)
      .def_readwrite("noise_power", &ScenarioConfig::noise_power)
      .def_readwrite("tx_power", &ScenarioConfig::tx_power)
      .def_readwrite("activity_prob", &ScenarioConfig::activity_prob)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_static("from_json_file", &ScenarioConfig::from_json_file)
      .def_static("from_json_text", &ScenarioConfig::from_json_text)
      .def("to_json_text", &ScenarioConfig::to_json_text);

  py::class_<Simulation>(m, "Simulation")
      .def(py::init<const ScenarioConfig&>())
      .def_property_readonly("signatures", [](const Simulation& s) { return s.signatures; })
      .def_property_readonly("theta", [](const Simulation& s) { return s.theta; })
      .def_property_readonly("beta", [](const Simulation& s) { return s.scenario.beta; })
      .def_property_readonly("groups",
                             [](const Simulation& s) {
                               std::vector<int> g;
                               for (auto x : s.scenario.groups) g.push_back(static_cast<int>(x));
                               return g;
                             })
      .def("draw_frame", &Simulation::draw_frame, py::arg("trial"))
      .def("model", &Simulation::model, py::arg("expert") = "perfect");

  py::class_<ModelContext>(m, "ModelContext")
      .def_property_readonly("noise_power",
                             [](const ModelContext& m_) { return m_.noise_power; })
      .def_property_readonly("shared_covariance",
                             [](const ModelContext& m_) { return m_.shared_covariance; });

  m.def("noise_normalized", &noise_normalized);
  m.def("mean_column", &mean_ym, py::arg("model"), py::arg("m"), py::arg("a"));
  m.def("covariance_column", &covariance_ym, py::arg("model"), py::arg("m"), py::arg("a"));
  m.def("nll", &nll, py::arg("model"), py::arg("Y"), py::arg("a"));
  m.def("gradient", &gradient, py::arg("model"), py::arg("Y"), py::arg("a"));

  m.def(
      "pgd_solve",
      [](const ModelContext& model, const Eigen::MatrixXcd& y, int max_iters, double tol) {
        PgdOptions opts;
        opts.max_iters = max_iters;
        opts.tol = tol;
        const auto res = pgd_solve(model, y, opts);
        return py::make_tuple(res.a_hat, res.objective);
      },
      py::arg("model"), py::arg("Y"), py::arg("max_iters") = 500, py::arg("tol") = 1e-8);

  m.def(
      "cd_solve",
      [](const Eigen::MatrixXcd& signatures, const Eigen::MatrixXcd& y, double noise_power,
         int max_passes, std::uint64_t seed) {
        CdOptions opts;
        opts.max_passes = max_passes;
        Rng rng(seed);
        const auto res = cd_solve(signatures, y, noise_power, opts, rng);
        return py::make_tuple(res.a_hat, res.objective);
      },
      py::arg("signatures"), py::arg("Y"), py::arg("noise_power"), py::arg("max_passes") = 30,
      py::arg("seed") = 1);

  m.def("preprocess", &preprocess, py::arg("Y"));
  m.def("kl_loss", &kl_loss, py::arg("rho"), py::arg("rho_true"));
  m.def(
      "select_expert",
      [](const Eigen::Vector3d& rho) { return to_string(select_expert(rho)); },
      py::arg("rho"));
  m.def(
      "gate_forward_file",
      [](const Eigen::MatrixXcd& y, const std::string& gate_path) {
        const GateParams gate = load_gate(gate_path);
        return gate_forward(preprocess(y), gate);
      },
      py::arg("Y"), py::arg("gate_checkpoint"));

  m.def(
      "unfolded_forward_file",
      [](const ModelContext& model, const Eigen::MatrixXcd& y, const std::string& path) {
        const auto ckpt = load_unfolded(path);
        return unfolded_forward(model, y, ckpt.params);
      },
      py::arg("model"), py::arg("Y"), py::arg("checkpoint"));

  m.def(
      "pm_pf",
      [](const std::vector<Eigen::VectorXd>& a_hats, const std::vector<std::vector<int>>& b_trues,
         double threshold) {
        std::vector<DetectionResult> results(a_hats.size());
        for (std::size_t i = 0; i < a_hats.size(); ++i) {
          results[i].a_hat = a_hats[i];
          results[i].b_true.assign(b_trues[i].begin(), b_trues[i].end());
        }
        return pm_pf(results, threshold);
      },
      py::arg("a_hats"), py::arg("b_trues"), py::arg("threshold"));

  m.def(
      "equal_error_rate",
      [](const std::vector<Eigen::VectorXd>& a_hats,
         const std::vector<std::vector<int>>& b_trues) {
        std::vector<DetectionResult> results(a_hats.size());
        for (std::size_t i = 0; i < a_hats.size(); ++i) {
          results[i].a_hat = a_hats[i];
          results[i].b_true.assign(b_trues[i].begin(), b_trues[i].end());
        }
        const auto eer = equal_error_rate(results);
        return py::make_tuple(eer.threshold, eer.rate);
      },
      py::arg("a_hats"), py::arg("b_trues"));

  m.def(
      "run_monte_carlo",
      [](const ScenarioConfig& cfg, const std::string& detector, int trials, std::uint64_t seed,
         int threads, const std::string& checkpoint, const std::string& gate_checkpoint) {
        const auto spec = DetectorSpec::parse(detector, checkpoint, gate_checkpoint);
        const auto mc = run_monte_carlo(cfg, spec, trials, seed, threads);
        std::vector<Eigen::VectorXd> a_hats;
        std::vector<std::vector<int>> b_trues;
        for (const auto& r : mc.results) {
          a_hats.push_back(r.a_hat);
          b_trues.emplace_back(r.b_true.begin(), r.b_true.end());
        }
        return py::make_tuple(a_hats, b_trues, mc.mean_seconds);
      },
      py::arg("config"), py::arg("detector"), py::arg("trials"), py::arg("seed"),
      py::arg("threads") = 1, py::arg("checkpoint") = "", py::arg("gate_checkpoint") = "");

  m.def("expert_kind", &expert_from_string);
}

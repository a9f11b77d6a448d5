#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "irsdet/covstats.hpp"
#include "irsdet/moe.hpp"
#include "irsdet/scenario.hpp"
#include "irsdet/signal.hpp"
#include "irsdet/solvers.hpp"
#include "irsdet/unfolding.hpp"

namespace irsdet {

struct DetectionResult {
  Eigen::VectorXd a_hat;             // nonnegative activity estimates
  std::vector<std::uint8_t> b_true;  // ground truth
  std::string detector;
  double seconds = 0.0;  // inference wall clock
};

struct RocPoint {
  double threshold = 0.0;
  double pf = 0.0;  // false alarm
  double pm = 0.0;  // missed detection
  long trials = 0;
};

// Pooled false-alarm / missed-detection probabilities at one threshold;
// b_hat = 1 iff a_hat >= threshold.
std::pair<double, double> pm_pf(const std::vector<DetectionResult>& results, double threshold);

std::vector<RocPoint> roc_sweep(const std::vector<DetectionResult>& results,
                                const std::vector<double>& thresholds);

// 50-point log-spaced grid over [1e-3, 10] * median positive estimate.
std::vector<double> default_threshold_grid(const std::vector<DetectionResult>& results);

struct EqualErrorRate {
  double threshold = 0.0;
  double rate = 0.0;
  bool bracketed = true;  // false when no PF/PM crossing was bracketed
};

// Bisection on the threshold until |PF - PM| < 1e-4 or 60 iterations;
// returns (PF + PM) / 2 at the final threshold.
EqualErrorRate equal_error_rate(const std::vector<DetectionResult>& results);

// ---------------------------------------------------------------------------
// Detector registry

enum class DetectorKind { kCd, kPgd, kUnfolded };

struct DetectorSpec {
  DetectorKind kind = DetectorKind::kCd;
  ExpertKind expert = ExpertKind::kPerfectGrouping;
  bool use_gate = false;             // unfolded-moe: expert chosen per frame
  std::string checkpoint;            // unfolded parameters
  std::string gate_checkpoint;       // gate parameters
  std::string id;                    // canonical name used in CSV output

  static DetectorSpec parse(const std::string& id, const std::string& checkpoint = "",
                            const std::string& gate_checkpoint = "");
};

// Ready-to-run detector bound to one scenario (models prebuilt per expert).
class Detector {
 public:
  Detector(const DetectorSpec& spec, const ScenarioRealization& scenario,
           const LosComponents& los, const Eigen::VectorXcd& theta,
           const Eigen::MatrixXcd& signatures);

  // y is the raw received frame; detection runs on noise-normalized data.
  Eigen::VectorXd detect(const Eigen::MatrixXcd& y, std::uint64_t trial_seed) const;

  const std::string& id() const { return spec_.id; }

 private:
  DetectorSpec spec_;
  double y_scale_ = 1.0;  // working-unit divisor for the received frame
  std::vector<ModelContext> models_;  // indexed by ExpertKind
  std::optional<UnfoldedCheckpoint> unfolded_;
  std::optional<GateParams> gate_;
};

// ---------------------------------------------------------------------------
// Monte Carlo experiments

struct MonteCarloSummary {
  std::vector<DetectionResult> results;
  double mean_seconds = 0.0;
};

// Fresh activity/channel/noise draws per trial from split seeds; the
// scenario, signatures and IRS phases are fixed per run and derive from
// `seed`. Results are identical for any worker count.
MonteCarloSummary run_monte_carlo(const ScenarioConfig& config, const DetectorSpec& spec,
                                  int trials, std::uint64_t seed, int threads);

struct MixSweepRow {
  std::string detector;
  double k1_fraction = 0.0;
  double eer = 0.0;
  double threshold = 0.0;
};

// Equal-error rate per (detector, K1 fraction); the remainder splits equally
// between the two direct groups.
std::vector<MixSweepRow> sweep_group_mix(const ScenarioConfig& config,
                                         const std::vector<DetectorSpec>& detectors,
                                         const std::vector<double>& k1_fractions, int trials,
                                         std::uint64_t seed, int threads);

struct BenchRow {
  std::string detector;
  double k1_fraction = 0.0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
};

std::vector<BenchRow> bench_detectors(const ScenarioConfig& config,
                                      const std::vector<DetectorSpec>& detectors,
                                      const std::vector<double>& k1_fractions, int trials,
                                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset generation

enum class MixturePolicy {
  kConfigProportions,  // keep the config's fixed proportions
  kSweepPrior          // K1-fraction grid plus Dirichlet(1/2) mixtures
};

// Per-sample scenarios are rebuilt from (config, per-sample seed); signatures
// and IRS phases are shared system constants derived from `seed`.
std::vector<SampleRecord> make_dataset(const ScenarioConfig& config, int samples,
                                       std::uint64_t seed, MixturePolicy policy);

// Rebuilds the scenario a dataset record was generated from.
ScenarioRealization rebuild_scenario(const ScenarioConfig& config, const SampleRecord& record);

// Draws the per-sample group proportions used by the sweep prior.
std::array<double, 3> sample_mixture(Rng& rng);

// Training-sample assembly: resolves each record's model under the expert
// source ("perfect", "expert1..3", or gate routing) in noise-normalized units.
std::vector<TrainSample> assemble_train_samples(const ScenarioConfig& config,
                                                const std::vector<SampleRecord>& records,
                                                const DetectorSpec& expert_source,
                                                const GateParams* gate);

// ---------------------------------------------------------------------------
// CSV output (fixed formatting so identical runs are byte-identical)

std::string roc_csv(const std::vector<std::pair<std::string, std::vector<RocPoint>>>& tables);
std::string mix_csv(const std::vector<MixSweepRow>& rows);
std::string bench_csv(const std::vector<BenchRow>& rows);

// Deterministic parallel map: fn(i) for i in [0, n), results slotted by
// index; worker count never changes the outcome.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace irsdet

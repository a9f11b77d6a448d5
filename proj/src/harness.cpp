#include "irsdet/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdarg>
#include <numeric>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "irsdet/errors.hpp"

namespace irsdet {

namespace {

struct PooledCounts {
  long active = 0;
  long inactive = 0;
  long hits = 0;         // b = 1 and b_hat = 1
  long false_alarms = 0;  // b = 0 and b_hat = 1
};

PooledCounts pool_counts(const std::vector<DetectionResult>& results, double threshold) {
  PooledCounts c;
  for (const auto& res : results) {
    for (Eigen::Index k = 0; k < res.a_hat.size(); ++k) {
      const bool truth = res.b_true[static_cast<size_t>(k)] != 0;
      const bool decided = res.a_hat[k] >= threshold;
      if (truth) {
        ++c.active;
        if (decided) ++c.hits;
      } else {
        ++c.inactive;
        if (decided) ++c.false_alarms;
      }
    }
  }
  return c;
}

}  // namespace

std::pair<double, double> pm_pf(const std::vector<DetectionResult>& results, double threshold) {
  const PooledCounts c = pool_counts(results, threshold);
  if (c.active == 0)
    throw NumericalError("undefined detection metric: pooled results contain no active device");
  if (c.inactive == 0)
    throw NumericalError("undefined detection metric: pooled results contain no inactive device");
  const double pm = 1.0 - static_cast<double>(c.hits) / static_cast<double>(c.active);
  const double pf = static_cast<double>(c.false_alarms) / static_cast<double>(c.inactive);
  return {pm, pf};
}

std::vector<RocPoint> roc_sweep(const std::vector<DetectionResult>& results,
                                const std::vector<double>& thresholds) {
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] < thresholds[i - 1])
      throw ConfigError("roc thresholds must be sorted ascending");
  std::vector<RocPoint> points;
  points.reserve(thresholds.size());
  const long trials = static_cast<long>(results.size());
  for (double t : thresholds) {
    const auto [pm, pf] = pm_pf(results, t);
    points.push_back({t, pf, pm, trials});
  }
  return points;
}

std::vector<double> default_threshold_grid(const std::vector<DetectionResult>& results) {
  std::vector<double> positives;
  for (const auto& res : results)
    for (Eigen::Index k = 0; k < res.a_hat.size(); ++k)
      if (res.a_hat[k] > 0.0) positives.push_back(res.a_hat[k]);

  double median = 1.0;
  if (!positives.empty()) {
    const auto mid = positives.begin() + positives.size() / 2;
    std::nth_element(positives.begin(), mid, positives.end());
    median = *mid;
  }
  constexpr int kPoints = 50;
  std::vector<double> grid(kPoints);
  const double lo = std::log(1e-3 * median), hi = std::log(10.0 * median);
  for (int i = 0; i < kPoints; ++i)
    grid[i] = std::exp(lo + (hi - lo) * i / (kPoints - 1));
  return grid;
}

EqualErrorRate equal_error_rate(const std::vector<DetectionResult>& results) {
  double hi = 0.0;
  for (const auto& res : results) hi = std::max(hi, res.a_hat.maxCoeff());
  hi = hi > 0.0 ? hi * (1.0 + 1e-9) + 1e-300 : 1.0;
  double lo = 0.0;

  EqualErrorRate out;
  double pm = 0.0, pf = 1.0;
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    std::tie(pm, pf) = pm_pf(results, mid);
    out.threshold = mid;
    if (std::abs(pf - pm) < 1e-4) break;
    if (pf > pm)
      lo = mid;
    else
      hi = mid;
  }
  out.rate = 0.5 * (pf + pm);
  out.bracketed = std::abs(pf - pm) <= 0.5;
  return out;
}

// ---------------------------------------------------------------------------

DetectorSpec DetectorSpec::parse(const std::string& id, const std::string& checkpoint,
                                 const std::string& gate_checkpoint) {
  DetectorSpec spec;
  spec.id = id;
  spec.checkpoint = checkpoint;
  spec.gate_checkpoint = gate_checkpoint;

  auto expert_of = [](const std::string& tail) -> ExpertKind {
    if (tail == "perfect") return ExpertKind::kPerfectGrouping;
    if (tail == "expert1") return ExpertKind::kExpert1;
    if (tail == "expert2") return ExpertKind::kExpert2;
    if (tail == "expert3") return ExpertKind::kExpert3;
    throw ConfigError("unknown expert id: " + tail);
  };

  if (id == "cd") {
    spec.kind = DetectorKind::kCd;
  } else if (id.rfind("pgd-", 0) == 0) {
    spec.kind = DetectorKind::kPgd;
    spec.expert = expert_of(id.substr(4));
  } else if (id == "unfolded-moe") {
    spec.kind = DetectorKind::kUnfolded;
    spec.use_gate = true;
  } else if (id.rfind("unfolded-", 0) == 0) {
    spec.kind = DetectorKind::kUnfolded;
    spec.expert = expert_of(id.substr(9));
  } else {
    throw ConfigError("unknown detector id: " + id);
  }
  return spec;
}

Detector::Detector(const DetectorSpec& spec, const ScenarioRealization& scenario,
                   const LosComponents& los, const Eigen::VectorXcd& theta,
                   const Eigen::MatrixXcd& signatures)
    : spec_(spec) {
  y_scale_ = amplitude_scale(scenario);

  auto normalized_model = [&](ExpertKind kind) {
    return rescaled(make_model(scenario, los, theta, signatures, kind), y_scale_);
  };

  if (spec_.kind == DetectorKind::kCd) {
    models_.push_back(normalized_model(ExpertKind::kExpert3));  // holds S and dims
    return;
  }

  if (spec_.kind == DetectorKind::kUnfolded) {
    if (spec_.checkpoint.empty())
      throw CheckpointError("detector " + spec_.id + " needs --checkpoint");
    unfolded_ = load_unfolded(spec_.checkpoint);
    if (unfolded_->params.layers.front().A.rows() != scenario.config.signature_length)
      throw CheckpointError("checkpoint signature length does not match the scenario");
  }

  if (spec_.use_gate) {
    if (spec_.gate_checkpoint.empty())
      throw CheckpointError("detector " + spec_.id + " needs --gate-checkpoint");
    gate_ = load_gate(spec_.gate_checkpoint);
    models_.push_back(normalized_model(ExpertKind::kExpert1));
    models_.push_back(normalized_model(ExpertKind::kExpert2));
    models_.push_back(normalized_model(ExpertKind::kExpert3));
  } else {
    models_.push_back(normalized_model(spec_.expert));
  }
}

Eigen::VectorXd Detector::detect(const Eigen::MatrixXcd& y, std::uint64_t trial_seed) const {
  const Eigen::MatrixXcd yn = y / y_scale_;
  switch (spec_.kind) {
    case DetectorKind::kCd: {
      Rng order_rng(Rng::mix(trial_seed, {stream::kCoordinate}));
      CdOptions opts;
      return cd_solve(models_[0].S, yn, 1.0, opts, order_rng).a_hat;
    }
    case DetectorKind::kPgd: {
      PgdOptions opts;
      return pgd_solve(models_[0], yn, opts).a_hat;
    }
    case DetectorKind::kUnfolded: {
      const ModelContext* model = &models_[0];
      if (spec_.use_gate) {
        const Eigen::Vector3d rho = gate_forward(preprocess(y), *gate_);
        model = &models_[static_cast<int>(select_expert(rho))];
      }
      // per-frame unit normalization, mirrored from training; estimates are
      // mapped back so thresholds pool across trials
      const double frame_rms = std::sqrt(yn.cwiseAbs2().mean());
      const ModelContext frame_model = rescaled(*model, frame_rms);
      return frame_rms * unfolded_forward(frame_model, yn / frame_rms, unfolded_->params);
    }
  }
  throw ConfigError("unhandled detector kind");
}

// ---------------------------------------------------------------------------

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

MonteCarloSummary run_monte_carlo(const ScenarioConfig& config, const DetectorSpec& spec,
                                  int trials, std::uint64_t seed, int threads) {
  if (trials < 1) throw ConfigError("trial count must be >= 1");
  ScenarioConfig cfg = config;
  cfg.seed = seed;
  const ScenarioRealization scenario = build_scenario(cfg);
  const LosComponents los = make_los(scenario);

  Rng sig_rng = Rng::derive(seed, {stream::kSignatures});
  const Eigen::MatrixXcd signatures =
      generate_signatures(cfg.devices, cfg.signature_length, sig_rng);
  Rng theta_rng = Rng::derive(seed, {stream::kPhaseShifts});
  const Eigen::VectorXcd theta = generate_phase_shifts(cfg.irs_elements, theta_rng);

  const Detector detector(spec, scenario, los, theta, signatures);

  MonteCarloSummary summary;
  summary.results.resize(static_cast<size_t>(trials));
  parallel_for(trials, threads, [&](int t) {
    const std::uint64_t trial_seed = Rng::mix(seed, {stream::kTrial, static_cast<std::uint64_t>(t)});
    Rng act_rng(Rng::mix(trial_seed, {stream::kActivity}));
    Rng chan_rng(Rng::mix(trial_seed, {stream::kChannels}));
    Rng noise_rng(Rng::mix(trial_seed, {stream::kNoise}));

    const ActivityVector activity = sample_activity(scenario, act_rng);
    const ChannelRealization channels = sample_channels(scenario, los, theta, chan_rng);
    const Eigen::MatrixXcd y =
        synthesize_received(scenario, channels, activity, signatures, noise_rng);

    DetectionResult res;
    res.detector = spec.id;
    res.b_true = activity.b;
    const auto start = std::chrono::steady_clock::now();
    res.a_hat = detector.detect(y, trial_seed);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    summary.results[static_cast<size_t>(t)] = std::move(res);
  });

  double total = 0.0;
  for (const auto& r : summary.results) total += r.seconds;
  summary.mean_seconds = total / trials;
  return summary;
}

std::vector<MixSweepRow> sweep_group_mix(const ScenarioConfig& config,
                                         const std::vector<DetectorSpec>& detectors,
                                         const std::vector<double>& k1_fractions, int trials,
                                         std::uint64_t seed, int threads) {
  std::vector<MixSweepRow> rows;
  for (std::size_t i = 0; i < k1_fractions.size(); ++i) {
    const double f = k1_fractions[i];
    if (f < 0.0 || f > 0.8 + 1e-12)
      throw ConfigError("k1 fraction must lie in [0, 0.8]");
    ScenarioConfig cfg = config;
    cfg.group_proportions = {f, (1.0 - f) / 2.0, (1.0 - f) / 2.0};
    const std::uint64_t point_seed = Rng::mix(seed, {stream::kMixture, i});
    for (const auto& spec : detectors) {
      const MonteCarloSummary mc = run_monte_carlo(cfg, spec, trials, point_seed, threads);
      const EqualErrorRate eer = equal_error_rate(mc.results);
      rows.push_back({spec.id, f, eer.rate, eer.threshold});
    }
  }
  return rows;
}

std::vector<BenchRow> bench_detectors(const ScenarioConfig& config,
                                      const std::vector<DetectorSpec>& detectors,
                                      const std::vector<double>& k1_fractions, int trials,
                                      std::uint64_t seed) {
  std::vector<BenchRow> rows;
  for (std::size_t i = 0; i < k1_fractions.size(); ++i) {
    const double f = k1_fractions[i];
    ScenarioConfig cfg = config;
    cfg.group_proportions = {f, (1.0 - f) / 2.0, (1.0 - f) / 2.0};
    const std::uint64_t point_seed = Rng::mix(seed, {stream::kMixture, i});
    for (const auto& spec : detectors) {
      const MonteCarloSummary mc = run_monte_carlo(cfg, spec, trials, point_seed, 1);
      std::vector<double> ms;
      ms.reserve(mc.results.size());
      for (const auto& r : mc.results) ms.push_back(r.seconds * 1e3);
      std::sort(ms.begin(), ms.end());
      const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / ms.size();
      const double p95 = ms[static_cast<size_t>(0.95 * (ms.size() - 1))];
      rows.push_back({spec.id, f, mean, p95});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::array<double, 3> sample_mixture(Rng& rng) {
  if (rng.uniform() < 0.5) {
    static constexpr double kGrid[5] = {0.0, 0.2, 0.4, 0.6, 0.8};
    const double f = kGrid[rng.uniform_int(5)];
    return {f, (1.0 - f) / 2.0, (1.0 - f) / 2.0};
  }
  // Dirichlet(1/2, 1/2, 1/2) via Gamma(1/2) = N(0,1)^2 / 2
  std::array<double, 3> g{};
  double total = 0.0;
  for (auto& v : g) {
    const double x = rng.gaussian();
    v = 0.5 * x * x + 1e-300;
    total += v;
  }
  for (auto& v : g) v /= total;
  return g;
}

std::vector<SampleRecord> make_dataset(const ScenarioConfig& config, int samples,
                                       std::uint64_t seed, MixturePolicy policy) {
  if (samples < 1) throw ConfigError("dataset needs at least one sample");
  ScenarioConfig base = config;
  base.seed = seed;

  Rng sig_rng = Rng::derive(seed, {stream::kSignatures});
  const Eigen::MatrixXcd signatures =
      generate_signatures(base.devices, base.signature_length, sig_rng);
  Rng theta_rng = Rng::derive(seed, {stream::kPhaseShifts});
  const Eigen::VectorXcd theta = generate_phase_shifts(base.irs_elements, theta_rng);

  std::vector<SampleRecord> records(static_cast<size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const std::uint64_t sample_seed =
        Rng::mix(seed, {stream::kDataset, static_cast<std::uint64_t>(i)});
    ScenarioConfig cfg = base;
    cfg.seed = sample_seed;
    if (policy == MixturePolicy::kSweepPrior) {
      Rng mix_rng = Rng::derive(sample_seed, {stream::kMixture});
      cfg.group_proportions = sample_mixture(mix_rng);
    }
    const ScenarioRealization scenario = build_scenario(cfg);
    const LosComponents los = make_los(scenario);

    Rng act_rng = Rng::derive(sample_seed, {stream::kActivity});
    Rng chan_rng = Rng::derive(sample_seed, {stream::kChannels});
    Rng noise_rng = Rng::derive(sample_seed, {stream::kNoise});
    const ActivityVector activity = sample_activity(scenario, act_rng);
    const ChannelRealization channels = sample_channels(scenario, los, theta, chan_rng);

    SampleRecord rec;
    rec.batch.S = signatures;
    rec.batch.Y = synthesize_received(scenario, channels, activity, signatures, noise_rng);
    rec.batch.noise_power = cfg.noise_power;
    rec.has_labels = true;
    rec.a_true = activity.a;
    rec.b_true = activity.b;
    rec.groups = scenario.groups;
    rec.scenario_seed = sample_seed;
    rec.seeded_mixture = policy == MixturePolicy::kSweepPrior;
    rec.theta = theta;
    records[static_cast<size_t>(i)] = std::move(rec);
  }
  return records;
}

ScenarioRealization rebuild_scenario(const ScenarioConfig& config, const SampleRecord& record) {
  ScenarioConfig cfg = config;
  cfg.seed = record.scenario_seed;
  if (record.seeded_mixture) {
    Rng mix_rng = Rng::derive(record.scenario_seed, {stream::kMixture});
    cfg.group_proportions = sample_mixture(mix_rng);
  }
  return build_scenario(cfg);
}

std::vector<TrainSample> assemble_train_samples(const ScenarioConfig& config,
                                                const std::vector<SampleRecord>& records,
                                                const DetectorSpec& expert_source,
                                                const GateParams* gate) {
  if (records.empty()) throw DataError("dataset is empty");
  if (expert_source.use_gate && gate == nullptr)
    throw CheckpointError("gate-routed training needs gate parameters");

  std::vector<TrainSample> samples;
  samples.reserve(records.size());
  for (const auto& rec : records) {
    if (!rec.has_labels) throw DataError("training requires labeled records");
    if (rec.theta.size() != config.irs_elements)
      throw DataError("record is missing the IRS phase vector for this config");
    const ScenarioRealization scenario = rebuild_scenario(config, rec);
    if (scenario.groups != rec.groups)
      throw DataError("dataset does not match the config (group labels differ)");
    const LosComponents los = make_los(scenario);

    ExpertKind kind = expert_source.expert;
    if (expert_source.use_gate)
      kind = select_expert(gate_forward(preprocess(rec.batch.Y), *gate));

    // same working units as the deployed detector: divide the frame by the
    // scenario's typical active amplitude, then bring this frame to unit
    // RMS so strong frames cannot dominate training
    const double scale = amplitude_scale(scenario);
    TrainSample ts;
    ts.y = rec.batch.Y / scale;
    const double frame_rms = std::sqrt(ts.y.cwiseAbs2().mean());
    ts.y /= frame_rms;
    ts.model = rescaled(make_model(scenario, los, rec.theta, rec.batch.S, kind),
                        scale * frame_rms);
    ts.target = rec.a_true / (scale * frame_rms);
    ts.weight = 1.0;
    samples.push_back(std::move(ts));
  }
  return samples;
}

// ---------------------------------------------------------------------------

namespace {

std::string format_row(const char* fmt, ...) {
  char buf[256];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

}  // namespace

std::string roc_csv(const std::vector<std::pair<std::string, std::vector<RocPoint>>>& tables) {
  std::string out = "detector,threshold,pf,pm,trials\n";
  for (const auto& [name, points] : tables)
    for (const auto& p : points)
      out += format_row("%s,%.12g,%.12g,%.12g,%ld\n", name.c_str(), p.threshold, p.pf, p.pm,
                        p.trials);
  return out;
}

std::string mix_csv(const std::vector<MixSweepRow>& rows) {
  std::string out = "detector,k1_fraction,eer,threshold\n";
  for (const auto& r : rows)
    out += format_row("%s,%.12g,%.12g,%.12g\n", r.detector.c_str(), r.k1_fraction, r.eer,
                      r.threshold);
  return out;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "detector,k1_fraction,mean_ms,p95_ms\n";
  for (const auto& r : rows)
    out += format_row("%s,%.12g,%.6f,%.6f\n", r.detector.c_str(), r.k1_fraction, r.mean_ms,
                      r.p95_ms);
  return out;
}

}  // namespace irsdet

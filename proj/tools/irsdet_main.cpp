// Command-line front end: simulate / train-gate / train-unfold / eval /
// sweep-mix / bench. Exit codes: 0 ok, 2 config error, 3 numerical failure,
// 4 missing checkpoint.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "irsdet/errors.hpp"
#include "irsdet/harness.hpp"

namespace {

using namespace irsdet;

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int trials = 100;
  std::string out_path;
  std::vector<std::string> detectors;
  std::string checkpoint;
  std::string gate_checkpoint;
  int threads = 1;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "scenario config file (JSON)");
  cmd->add_option("--seed", args.seed, "master seed (overrides the config seed)")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--trials", args.trials, "Monte Carlo trials / dataset samples");
  cmd->add_option("--out", args.out_path, "output path");
  cmd->add_option("--detector", args.detectors, "detector id (repeatable)");
  cmd->add_option("--checkpoint", args.checkpoint, "unfolded parameter checkpoint");
  cmd->add_option("--gate-checkpoint", args.gate_checkpoint, "gate parameter checkpoint");
  cmd->add_option("--threads", args.threads, "worker threads (0 = hardware)");
  cmd->add_flag("--deterministic", args.deterministic,
                "single-threaded execution for bit-stable reruns");
}

ScenarioConfig load_config(const CommonArgs& args) {
  ScenarioConfig cfg =
      args.config_path.empty() ? ScenarioConfig{} : ScenarioConfig::from_json_file(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  return cfg;
}

int effective_threads(const CommonArgs& args) {
  return args.deterministic ? 1 : args.threads;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << text;
}

std::vector<DetectorSpec> parse_detectors(const CommonArgs& args) {
  if (args.detectors.empty()) throw ConfigError("at least one --detector is required");
  std::vector<DetectorSpec> specs;
  for (const auto& id : args.detectors)
    specs.push_back(DetectorSpec::parse(id, args.checkpoint, args.gate_checkpoint));
  return specs;
}

int run_simulate(const CommonArgs& args, const std::string& mixture) {
  ScenarioConfig cfg = load_config(args);
  if (args.out_path.empty()) throw ConfigError("simulate requires --out");
  const MixturePolicy policy =
      mixture == "sweep" ? MixturePolicy::kSweepPrior : MixturePolicy::kConfigProportions;
  const auto records = make_dataset(cfg, args.trials, cfg.seed, policy);
  write_dataset(args.out_path, records);
  std::cout << "wrote " << records.size() << " samples to " << args.out_path << "\n";
  return 0;
}

int run_train_gate(const CommonArgs& args, const std::string& dataset_path, int epochs,
                   int batch, double lr) {
  ScenarioConfig cfg = load_config(args);
  if (dataset_path.empty()) throw ConfigError("train-gate requires --dataset");
  if (args.out_path.empty()) throw ConfigError("train-gate requires --out");

  const auto records = read_dataset(dataset_path);
  if (records.empty()) throw DataError("dataset is empty");
  const int input_dim = 2 * cfg.signature_length * cfg.antennas;
  const double input_scale = 1.0 / std::sqrt(cfg.noise_power * input_dim);

  std::vector<GateSample> samples;
  samples.reserve(records.size());
  for (const auto& rec : records) {
    if (!rec.has_labels) throw DataError("gate training requires labeled records");
    samples.push_back({preprocess(rec.batch.Y), true_proportions(rec.groups)});
  }

  TrainConfig tc;
  tc.dataset_size = static_cast<int>(samples.size());
  tc.batch_size = batch;
  tc.learning_rate = lr;
  tc.epochs_per_stage = epochs;
  tc.seed = cfg.seed;
  const GateTrainResult result = train_gate(samples, input_dim, input_scale, tc);
  save_gate(args.out_path, result.params, cfg.seed);
  std::printf("gate KL %.6f -> %.6f over %d epochs (%zu samples)\n", result.initial_loss,
              result.final_loss, epochs, samples.size());
  return 0;
}

int run_train_unfold(const CommonArgs& args, const std::string& dataset_path,
                     const std::string& expert, int layers, int epochs, int batch, double lr) {
  ScenarioConfig cfg = load_config(args);
  if (dataset_path.empty()) throw ConfigError("train-unfold requires --dataset");
  if (args.out_path.empty()) throw ConfigError("train-unfold requires --out");

  DetectorSpec source;
  source.kind = DetectorKind::kUnfolded;
  if (expert == "moe") {
    source.use_gate = true;
  } else {
    source = DetectorSpec::parse("unfolded-" + expert, "", "");
  }

  GateParams gate;
  const GateParams* gate_ptr = nullptr;
  if (source.use_gate) {
    if (args.gate_checkpoint.empty())
      throw CheckpointError("train-unfold with --expert moe needs --gate-checkpoint");
    gate = load_gate(args.gate_checkpoint);
    gate_ptr = &gate;
  }

  const auto records = read_dataset(dataset_path);
  const auto samples = assemble_train_samples(cfg, records, source, gate_ptr);

  TrainConfig tc;
  tc.dataset_size = static_cast<int>(samples.size());
  tc.batch_size = batch;
  tc.learning_rate = lr;
  tc.epochs_per_stage = epochs;
  tc.seed = cfg.seed;
  const UnfoldedTrainResult result = train_unfolded(samples, layers, tc);

  const double y_scale = 1.0 / std::sqrt(cfg.noise_power);
  save_unfolded(args.out_path, result.params, tc.loss, cfg.seed, y_scale, 0.0);
  std::printf("unfolded loss %.6f -> %.6f over %d stages (%zu samples)\n", result.initial_loss,
              result.final_loss, layers, samples.size());
  return 0;
}

int run_eval(const CommonArgs& args) {
  ScenarioConfig cfg = load_config(args);
  const auto specs = parse_detectors(args);
  std::vector<std::pair<std::string, std::vector<RocPoint>>> tables;
  for (const auto& spec : specs) {
    const MonteCarloSummary mc =
        run_monte_carlo(cfg, spec, args.trials, cfg.seed, effective_threads(args));
    tables.emplace_back(spec.id, roc_sweep(mc.results, default_threshold_grid(mc.results)));
  }
  write_text(args.out_path, roc_csv(tables));
  return 0;
}

int run_sweep_mix(const CommonArgs& args, std::vector<double> fractions) {
  ScenarioConfig cfg = load_config(args);
  const auto specs = parse_detectors(args);
  if (fractions.empty()) fractions = {0.0, 0.2, 0.4, 0.6, 0.8};
  const auto rows =
      sweep_group_mix(cfg, specs, fractions, args.trials, cfg.seed, effective_threads(args));
  write_text(args.out_path, mix_csv(rows));
  return 0;
}

int run_bench(const CommonArgs& args, std::vector<double> fractions) {
  ScenarioConfig cfg = load_config(args);
  const auto specs = parse_detectors(args);
  if (fractions.empty()) fractions = {0.0, 0.4, 0.8};
  const auto rows = bench_detectors(cfg, specs, fractions, args.trials, cfg.seed);
  write_text(args.out_path, bench_csv(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covariance-based activity detection for IRS-aided random access"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string mixture = "config";
  std::string dataset_path;
  std::string expert = "perfect";
  int layers = 4;
  int epochs = 25;
  int batch = 32;
  double lr = 1e-3;
  std::vector<double> fractions;

  auto* simulate = app.add_subcommand("simulate", "generate a labeled dataset");
  add_common(simulate, args);
  simulate->add_option("--mixture", mixture, "group proportions: 'config' or 'sweep'");

  auto* train_gate_cmd = app.add_subcommand("train-gate", "train the gating network");
  add_common(train_gate_cmd, args);
  train_gate_cmd->add_option("--dataset", dataset_path, "dataset file from simulate");
  train_gate_cmd->add_option("--epochs", epochs, "training epochs");
  train_gate_cmd->add_option("--batch", batch, "minibatch size");
  train_gate_cmd->add_option("--lr", lr, "learning rate");

  auto* train_unfold_cmd = app.add_subcommand("train-unfold", "train the unfolded detector");
  add_common(train_unfold_cmd, args);
  train_unfold_cmd->add_option("--dataset", dataset_path, "dataset file from simulate");
  train_unfold_cmd->add_option("--expert", expert,
                               "covariance source: perfect, expert1..3, or moe");
  train_unfold_cmd->add_option("--layers", layers, "unfolded depth");
  train_unfold_cmd->add_option("--epochs", epochs, "epochs per incremental stage");
  train_unfold_cmd->add_option("--batch", batch, "minibatch size");
  train_unfold_cmd->add_option("--lr", lr, "learning rate");

  auto* eval_cmd = app.add_subcommand("eval", "ROC sweep to CSV");
  add_common(eval_cmd, args);

  auto* sweep_cmd = app.add_subcommand("sweep-mix", "equal-error rate vs K1 fraction");
  add_common(sweep_cmd, args);
  sweep_cmd->add_option("--fractions", fractions, "K1 fractions to sweep");

  auto* bench_cmd = app.add_subcommand("bench", "per-inference latency to CSV");
  add_common(bench_cmd, args);
  bench_cmd->add_option("--fractions", fractions, "K1 fractions to bench");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(args, mixture);
    if (train_gate_cmd->parsed()) return run_train_gate(args, dataset_path, epochs, batch, lr);
    if (train_unfold_cmd->parsed())
      return run_train_unfold(args, dataset_path, expert, layers, epochs, batch, lr);
    if (eval_cmd->parsed()) return run_eval(args);
    if (sweep_cmd->parsed()) return run_sweep_mix(args, fractions);
    if (bench_cmd->parsed()) return run_bench(args, fractions);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include "irsdet/moe.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "irsdet/errors.hpp"

namespace irsdet {

using nlohmann::json;

Eigen::VectorXd preprocess(const Eigen::MatrixXcd& y) {
  const auto n = y.size();
  Eigen::VectorXd x(2 * n);
  const Eigen::Map<const Eigen::VectorXcd> flat(y.data(), n);  // column-major
  x.head(n) = flat.real();
  x.tail(n) = flat.imag();
  return x;
}

namespace {

Eigen::Vector3d softmax3(const Eigen::Vector3d& logits) {
  const double peak = logits.maxCoeff();
  Eigen::Vector3d e = (logits.array() - peak).exp();
  return e / e.sum();
}

}  // namespace

Eigen::Vector3d gate_forward(const Eigen::VectorXd& x, const GateParams& params) {
  if (x.size() != params.input_dim())
    throw DataError("gate input has the wrong dimension");
  const Eigen::VectorXd h1 =
      (params.w1 * (params.input_scale * x) + params.b1).array().max(0.0).matrix();
  const Eigen::VectorXd h2 = (params.w2 * h1 + params.b2).array().tanh().matrix();
  return softmax3(params.w3 * h2 + params.b3);
}

Eigen::Vector3d true_proportions(const std::vector<Group>& groups) {
  if (groups.empty()) throw ConfigError("proportions need at least one device");
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  for (Group g : groups) counts[static_cast<int>(g)] += 1.0;
  return counts / static_cast<double>(groups.size());
}

double kl_loss(const Eigen::Vector3d& rho, const Eigen::Vector3d& rho_true) {
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (rho_true[i] <= 0.0) continue;
    total += rho_true[i] * std::log(rho_true[i] / std::max(rho[i], 1e-12));
  }
  return total;
}

ExpertKind select_expert(const Eigen::Vector3d& rho) {
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (rho[i] > rho[best]) best = i;
  return static_cast<ExpertKind>(best);
}

GateParams init_gate(int input_dim, double input_scale, Rng& rng) {
  auto xavier = [&rng](int rows, int cols) {
    const double bound = std::sqrt(6.0 / (rows + cols));
    Eigen::MatrixXd w(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) w(r, c) = rng.uniform(-bound, bound);
    return w;
  };
  GateParams p;
  p.w1 = xavier(kGateHidden1, input_dim);
  p.b1 = Eigen::VectorXd::Zero(kGateHidden1);
  p.w2 = xavier(kGateHidden2, kGateHidden1);
  p.b2 = Eigen::VectorXd::Zero(kGateHidden2);
  p.w3 = xavier(kGateOutputs, kGateHidden2);
  p.b3 = Eigen::VectorXd::Zero(kGateOutputs);
  p.input_scale = input_scale;
  return p;
}

double gate_loss_and_gradients(const std::vector<const GateSample*>& batch,
                               const GateParams& params, GateGradients& grads) {
  if (batch.empty()) throw ConfigError("empty gate batch");
  const int n_in = params.input_dim();
  const int n_batch = static_cast<int>(batch.size());

  Eigen::MatrixXd x(n_in, n_batch);
  Eigen::MatrixXd rho_true(3, n_batch);
  for (int i = 0; i < n_batch; ++i) {
    x.col(i) = params.input_scale * batch[i]->x;
    rho_true.col(i) = batch[i]->rho_true;
  }

  const Eigen::MatrixXd z1 = (params.w1 * x).colwise() + params.b1;
  const Eigen::MatrixXd h1 = z1.array().max(0.0).matrix();
  const Eigen::MatrixXd z2 = (params.w2 * h1).colwise() + params.b2;
  const Eigen::MatrixXd h2 = z2.array().tanh().matrix();
  const Eigen::MatrixXd z3 = (params.w3 * h2).colwise() + params.b3;

  Eigen::MatrixXd rho(3, n_batch);
  double loss = 0.0;
  for (int i = 0; i < n_batch; ++i) {
    rho.col(i) = softmax3(z3.col(i));
    loss += kl_loss(rho.col(i), rho_true.col(i));
  }
  loss /= n_batch;

  // d KL / d z3 = (rho - rho_true) per sample (softmax + KL pairing), with
  // the clamp inactive whenever rho > 1e-12.
  Eigen::MatrixXd dz3 = (rho - rho_true) / n_batch;

  grads.w3 = dz3 * h2.transpose();
  grads.b3 = dz3.rowwise().sum();
  Eigen::MatrixXd dh2 = params.w3.transpose() * dz3;
  Eigen::MatrixXd dz2 = (dh2.array() * (1.0 - h2.array().square())).matrix();
  grads.w2 = dz2 * h1.transpose();
  grads.b2 = dz2.rowwise().sum();
  Eigen::MatrixXd dh1 = params.w2.transpose() * dz2;
  Eigen::MatrixXd dz1 = (dh1.array() * (z1.array() > 0.0).cast<double>()).matrix();
  grads.w1 = dz1 * x.transpose();
  grads.b1 = dz1.rowwise().sum();
  return loss;
}

namespace {

double gate_dataset_loss(const std::vector<GateSample>& samples, const GateParams& params) {
  double loss = 0.0;
  for (const auto& s : samples) loss += kl_loss(gate_forward(s.x, params), s.rho_true);
  return loss / static_cast<double>(samples.size());
}

struct AdamVec {
  Eigen::ArrayXd m, v;
  int step = 0;
  void init(Eigen::Index n) {
    m = Eigen::ArrayXd::Zero(n);
    v = Eigen::ArrayXd::Zero(n);
  }
  void update(double* theta, const double* grad, Eigen::Index n, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    for (Eigen::Index i = 0; i < n; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

}  // namespace

GateTrainResult train_gate(const std::vector<GateSample>& samples, int input_dim,
                           double input_scale, const TrainConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw ConfigError("gate training requires a non-empty dataset");

  Rng init_rng = Rng::derive(cfg.seed, {stream::kInit});
  GateTrainResult result;
  result.params = init_gate(input_dim, input_scale, init_rng);
  GateParams& p = result.params;

  AdamVec opt_w1, opt_b1, opt_w2, opt_b2, opt_w3, opt_b3;
  opt_w1.init(p.w1.size());
  opt_b1.init(p.b1.size());
  opt_w2.init(p.w2.size());
  opt_b2.init(p.b2.size());
  opt_w3.init(p.w3.size());
  opt_b3.init(p.b3.size());

  std::vector<int> indices(samples.size());
  std::iota(indices.begin(), indices.end(), 0);
  Rng shuffle_rng = Rng::derive(cfg.seed, {stream::kShuffle});

  result.trace.push_back(gate_dataset_loss(samples, p));
  GateGradients grads;
  for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
    shuffle_rng.shuffle(indices);
    for (std::size_t start = 0; start < indices.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(indices.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const GateSample*> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&samples[indices[i]]);

      const double loss = gate_loss_and_gradients(batch, p, grads);
      if (!std::isfinite(loss)) throw NumericalError("gate training diverged");
      opt_w1.update(p.w1.data(), grads.w1.data(), p.w1.size(), cfg.learning_rate);
      opt_b1.update(p.b1.data(), grads.b1.data(), p.b1.size(), cfg.learning_rate);
      opt_w2.update(p.w2.data(), grads.w2.data(), p.w2.size(), cfg.learning_rate);
      opt_b2.update(p.b2.data(), grads.b2.data(), p.b2.size(), cfg.learning_rate);
      opt_w3.update(p.w3.data(), grads.w3.data(), p.w3.size(), cfg.learning_rate);
      opt_b3.update(p.b3.data(), grads.b3.data(), p.b3.size(), cfg.learning_rate);
    }
    result.trace.push_back(gate_dataset_loss(samples, p));
    if (!std::isfinite(result.trace.back())) throw NumericalError("gate training diverged");
  }
  result.initial_loss = result.trace.front();
  result.final_loss = result.trace.back();
  return result;
}

namespace {

void put_dmatrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
}

Eigen::MatrixXd get_dmatrix(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), 8);
      m(r, c) = v;
    }
  return m;
}

}  // namespace

void save_gate(const std::string& path, const GateParams& params, std::uint64_t seed) {
  json header;
  header["format"] = "gate-params";
  header["version"] = 1;
  header["dims"] = {params.input_dim(), kGateHidden1, kGateHidden2, kGateOutputs};
  header["input_scale"] = params.input_scale;
  header["seed"] = seed;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  const std::size_t blob_bytes =
      8 * static_cast<std::size_t>(params.w1.size() + params.b1.size() + params.w2.size() +
                                   params.b2.size() + params.w3.size() + params.b3.size());
  out << header.dump() << "\n" << "BLOB " << blob_bytes << "\n";
  put_dmatrix(out, params.w1);
  put_dmatrix(out, params.b1);
  put_dmatrix(out, params.w2);
  put_dmatrix(out, params.b2);
  put_dmatrix(out, params.w3);
  put_dmatrix(out, params.b3);
  if (!out) throw CheckpointError("write failure on checkpoint: " + path);
}

GateParams load_gate(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("missing checkpoint: " + path);
  std::string header_line, blob_line;
  std::getline(in, header_line);
  std::getline(in, blob_line);
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::parse_error& e) {
    throw CheckpointError("bad checkpoint header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != "gate-params" || header.value("version", 0) != 1)
    throw CheckpointError("not a gate-params v1 checkpoint: " + path);
  const auto dims = header["dims"].get<std::vector<int>>();
  if (dims.size() != 4 || dims[1] != kGateHidden1 || dims[2] != kGateHidden2 ||
      dims[3] != kGateOutputs)
    throw CheckpointError("unexpected gate dimensions in " + path);

  GateParams p;
  p.input_scale = header.value("input_scale", 1.0);
  p.w1 = get_dmatrix(in, kGateHidden1, dims[0]);
  p.b1 = get_dmatrix(in, kGateHidden1, 1);
  p.w2 = get_dmatrix(in, kGateHidden2, kGateHidden1);
  p.b2 = get_dmatrix(in, kGateHidden2, 1);
  p.w3 = get_dmatrix(in, kGateOutputs, kGateHidden2);
  p.b3 = get_dmatrix(in, kGateOutputs, 1);
  if (!in) throw CheckpointError("truncated checkpoint: " + path);
  return p;
}

}  // namespace irsdet

#include "irsdet/unfolding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "irsdet/errors.hpp"

namespace irsdet {

using nlohmann::json;

namespace {

// Forward pass intermediates for one layer, kept for reverse mode.
struct LayerTape {
  Eigen::VectorXd a_prev;
  Eigen::VectorXd d;    // K, real surrogate gradient
  Eigen::VectorXd pre;  // K, before the clamp
  std::vector<Eigen::MatrixXcd> sigma;   // one entry when shared across antennas
  std::vector<Eigen::MatrixXcd> mtilde;  // A*Sigma + B, same layout as sigma
  std::vector<Eigen::MatrixXcd> proj;    // mtilde * S
  std::vector<Eigen::VectorXcd> u;       // diag(S^H mtilde S), same layout as sigma
  Eigen::MatrixXcd r;  // L x M residuals
  Eigen::MatrixXcd v;  // K x M, s_k^H mtilde r_m
  Eigen::MatrixXcd w;  // K x M, r_m^H mtilde s_k
};

Eigen::VectorXd layer_forward(const ModelContext& model, const Eigen::MatrixXcd& y,
                              const Eigen::VectorXd& a_prev, const UnfoldedLayer& layer,
                              LayerTape* tape) {
  const int m_count = model.antennas();
  const int k_count = model.devices();
  const bool shared = model.shared_covariance;
  const int n_sigma = shared ? 1 : m_count;

  std::vector<Eigen::MatrixXcd> sigma(n_sigma), mtilde(n_sigma), proj(n_sigma);
  std::vector<Eigen::VectorXcd> u(n_sigma);
  for (int j = 0; j < n_sigma; ++j) {
    sigma[j] = covariance_ym(model, j, a_prev);
    mtilde[j] = layer.A * sigma[j] + layer.B;
    proj[j] = mtilde[j] * model.S;
    u[j] = (model.S.conjugate().array() * proj[j].array()).colwise().sum();
  }

  Eigen::MatrixXcd r(model.length(), m_count);
  Eigen::MatrixXcd v(k_count, m_count), w(k_count, m_count);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(k_count);
  for (int m = 0; m < m_count; ++m) {
    const int j = shared ? 0 : m;
    r.col(m) = y.col(m) - mean_ym(model, m, a_prev);
    const Eigen::VectorXcd z = mtilde[j] * r.col(m);
    v.col(m) = model.S.adjoint() * z;
    w.col(m) = (r.col(m).adjoint() * proj[j]).transpose();
    const Eigen::ArrayXcd mu_m = model.mu.col(m).array();
    const Eigen::ArrayXcd contrib =
        model.coef.col(m).array() * (u[j].array() - v.col(m).array() * w.col(m).array()) -
        (mu_m * w.col(m).array() + mu_m.conjugate() * v.col(m).array());
    d += contrib.real().matrix();
  }

  Eigen::VectorXd pre = a_prev - layer.eta * d;
  Eigen::VectorXd a_next = pre.cwiseMax(0.0);

  if (tape) {
    tape->a_prev = a_prev;
    tape->d = std::move(d);
    tape->pre = std::move(pre);
    tape->sigma = std::move(sigma);
    tape->mtilde = std::move(mtilde);
    tape->proj = std::move(proj);
    tape->u = std::move(u);
    tape->r = std::move(r);
    tape->v = std::move(v);
    tape->w = std::move(w);
  }
  return a_next;
}

// Reverse pass through one layer. `a_bar` holds d loss / d a_next on entry
// and d loss / d a_prev on exit. Parameter adjoints accumulate into grads.
void layer_backward(const ModelContext& model, const UnfoldedLayer& layer,
                    const LayerTape& tape, Eigen::VectorXd& a_bar,
                    UnfoldedGradients::Layer& grads) {
  const int m_count = model.antennas();
  const int k_count = model.devices();
  const bool shared = model.shared_covariance;

  const Eigen::ArrayXd mask = (tape.pre.array() > 0.0).cast<double>();
  const Eigen::VectorXd ghat = (a_bar.array() * mask).matrix();

  grads.eta += -tape.d.dot(ghat);
  const Eigen::VectorXd dbar = -layer.eta * ghat;

  // adjoints of v and w per antenna (complex K x M)
  Eigen::MatrixXcd vhat(k_count, m_count), what(k_count, m_count);
  Eigen::VectorXcd uhat_total = Eigen::VectorXcd::Zero(k_count);
  std::vector<Eigen::VectorXcd> uhat_per(shared ? 0 : m_count);
  for (int m = 0; m < m_count; ++m) {
    const Eigen::ArrayXd coef_m = model.coef.col(m).array();
    const Eigen::ArrayXcd mu_m = model.mu.col(m).array();
    const Eigen::ArrayXcd db = dbar.array().cast<std::complex<double>>();
    vhat.col(m) = (-db * (coef_m * tape.w.col(m).array().conjugate() + mu_m)).matrix();
    what.col(m) =
        (-db * (coef_m * tape.v.col(m).array().conjugate() + mu_m.conjugate())).matrix();
    const Eigen::VectorXcd uhat_m = (db * coef_m).matrix();
    if (shared)
      uhat_total += uhat_m;
    else
      uhat_per[m] = uhat_m;
  }

  const Eigen::MatrixXcd s_vhat = model.S * vhat;                // L x M
  const Eigen::MatrixXcd s_what = model.S * what.conjugate();    // L x M

  // residual adjoints and their flow into a_prev
  Eigen::MatrixXcd rhat(model.length(), m_count);
  for (int m = 0; m < m_count; ++m) {
    const int j = shared ? 0 : m;
    rhat.col(m) = tape.mtilde[j].adjoint() * s_vhat.col(m) + tape.mtilde[j] * s_what.col(m);
  }
  const Eigen::MatrixXcd sh_rhat = model.S.adjoint() * rhat;  // K x M
  a_bar = ghat;
  a_bar -= (model.mu.conjugate().array() * sh_rhat.array()).real().rowwise().sum().matrix();

  if (shared) {
    Eigen::MatrixXcd mhat = model.S * uhat_total.asDiagonal() * model.S.adjoint();
    mhat.noalias() += s_vhat * tape.r.adjoint();
    mhat.noalias() += tape.r * s_what.adjoint();
    grads.A.noalias() += mhat * tape.sigma[0].adjoint();
    grads.B += mhat;
    const Eigen::MatrixXcd sighat = layer.A.adjoint() * mhat;
    const Eigen::MatrixXcd sig_s = sighat * model.S;  // L x K
    const Eigen::VectorXd quad =
        (model.S.conjugate().array() * sig_s.array()).colwise().sum().real();
    a_bar += model.coef.col(0).cwiseProduct(quad);
  } else {
    for (int m = 0; m < m_count; ++m) {
      Eigen::MatrixXcd mhat = model.S * uhat_per[m].asDiagonal() * model.S.adjoint();
      mhat.noalias() += s_vhat.col(m) * tape.r.col(m).adjoint();
      mhat.noalias() += tape.r.col(m) * s_what.col(m).adjoint();
      grads.A.noalias() += mhat * tape.sigma[m].adjoint();
      grads.B += mhat;
      const Eigen::MatrixXcd sighat = layer.A.adjoint() * mhat;
      const Eigen::MatrixXcd sig_s = sighat * model.S;
      const Eigen::VectorXd quad =
          (model.S.conjugate().array() * sig_s.array()).colwise().sum().real();
      a_bar += model.coef.col(m).cwiseProduct(quad);
    }
  }
}

}  // namespace

Eigen::VectorXd unfolded_layer(const ModelContext& model, const Eigen::MatrixXcd& y,
                               const Eigen::VectorXd& a_prev, const UnfoldedLayer& layer) {
  return layer_forward(model, y, a_prev, layer, nullptr);
}

Eigen::VectorXd unfolded_forward(const ModelContext& model, const Eigen::MatrixXcd& y,
                                 const UnfoldedParams& params) {
  if (params.depth() < 1) throw ConfigError("unfolded network needs at least one layer");
  Eigen::VectorXd a = Eigen::VectorXd::Zero(model.devices());
  for (const auto& layer : params.layers) a = layer_forward(model, y, a, layer, nullptr);
  return a;
}

double batch_loss_and_gradients(const std::vector<const TrainSample*>& batch,
                                const UnfoldedParams& params, UnfoldedGradients& grads) {
  if (batch.empty()) throw ConfigError("empty training batch");
  const int depth = params.depth();
  const int length = static_cast<int>(params.layers.front().A.rows());

  grads.layers.assign(depth, UnfoldedGradients::Layer{
                                 Eigen::MatrixXcd::Zero(length, length),
                                 Eigen::MatrixXcd::Zero(length, length), 0.0});

  double loss = 0.0;
  std::vector<LayerTape> tapes(depth);
  for (const TrainSample* sample : batch) {
    const int k_count = sample->model.devices();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(k_count);
    for (int i = 0; i < depth; ++i)
      a = layer_forward(sample->model, sample->y, a, params.layers[i], &tapes[i]);

    const Eigen::VectorXd err = a - sample->target;
    const double w2 = sample->weight * sample->weight;
    loss += w2 * err.squaredNorm() / k_count;

    Eigen::VectorXd a_bar = (2.0 * w2 / k_count) * err;
    for (int i = depth - 1; i >= 0; --i)
      layer_backward(sample->model, params.layers[i], tapes[i], a_bar, grads.layers[i]);
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  loss *= inv_n;
  for (auto& g : grads.layers) {
    g.A *= inv_n;
    g.B *= inv_n;
    g.eta *= inv_n;
  }
  return loss;
}

double batch_loss(const std::vector<const TrainSample*>& batch, const UnfoldedParams& params) {
  double loss = 0.0;
  for (const TrainSample* sample : batch) {
    const Eigen::VectorXd a = unfolded_forward(sample->model, sample->y, params);
    const Eigen::VectorXd err = a - sample->target;
    loss += sample->weight * sample->weight * err.squaredNorm() / sample->model.devices();
  }
  return loss / static_cast<double>(batch.size());
}

void TrainConfig::validate() const {
  if (dataset_size < 1 || batch_size < 1 || epochs_per_stage < 1)
    throw ConfigError("training sizes must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

namespace {

// Flat parameter layout per layer: [Re A; Im A; Re B; Im B; log eta].
Eigen::VectorXd pack_layer(const UnfoldedLayer& layer) {
  const int n = static_cast<int>(layer.A.size());
  Eigen::VectorXd flat(4 * n + 1);
  const auto* a_ptr = reinterpret_cast<const double*>(layer.A.data());
  const auto* b_ptr = reinterpret_cast<const double*>(layer.B.data());
  for (int i = 0; i < n; ++i) {
    flat[i] = a_ptr[2 * i];
    flat[n + i] = a_ptr[2 * i + 1];
    flat[2 * n + i] = b_ptr[2 * i];
    flat[3 * n + i] = b_ptr[2 * i + 1];
  }
  flat[4 * n] = std::log(layer.eta);
  return flat;
}

void unpack_layer(const Eigen::VectorXd& flat, UnfoldedLayer& layer) {
  const int n = static_cast<int>(layer.A.size());
  auto* a_ptr = reinterpret_cast<double*>(layer.A.data());
  auto* b_ptr = reinterpret_cast<double*>(layer.B.data());
  for (int i = 0; i < n; ++i) {
    a_ptr[2 * i] = flat[i];
    a_ptr[2 * i + 1] = flat[n + i];
    b_ptr[2 * i] = flat[2 * n + i];
    b_ptr[2 * i + 1] = flat[3 * n + i];
  }
  layer.eta = std::exp(flat[4 * n]);
}

Eigen::VectorXd pack_gradient(const UnfoldedGradients::Layer& g, double eta) {
  const int n = static_cast<int>(g.A.size());
  Eigen::VectorXd flat(4 * n + 1);
  const auto* a_ptr = reinterpret_cast<const double*>(g.A.data());
  const auto* b_ptr = reinterpret_cast<const double*>(g.B.data());
  for (int i = 0; i < n; ++i) {
    flat[i] = a_ptr[2 * i];
    flat[n + i] = a_ptr[2 * i + 1];
    flat[2 * n + i] = b_ptr[2 * i];
    flat[3 * n + i] = b_ptr[2 * i + 1];
  }
  flat[4 * n] = g.eta * eta;  // chain rule through eta = exp(nu)
  return flat;
}

struct AdamState {
  Eigen::VectorXd m, v;
  int step = 0;
  void init(Eigen::Index n) {
    m = Eigen::VectorXd::Zero(n);
    v = Eigen::VectorXd::Zero(n);
    step = 0;
  }
  void update(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++step;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad).eval();
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    theta -= (lr / bc1) * m.cwiseQuotient(((v / bc2).cwiseSqrt().array() + eps).matrix());
  }
};

double typical_covariance_scale(const std::vector<TrainSample>& samples) {
  const int probe = std::min<int>(32, static_cast<int>(samples.size()));
  double acc = 0.0;
  for (int i = 0; i < probe; ++i) {
    const auto& s = samples[i];
    const Eigen::VectorXd coef_a = s.model.coef.col(0).cwiseProduct(s.target);
    const double sig_power =
        (s.model.S.cwiseAbs2() * coef_a).sum() / s.model.length();
    acc += s.model.noise_power + sig_power;
  }
  return acc / probe;
}

// Scales the identity init of A so the first layer's mean output on active
// devices lands at the mean active target. The output is roughly quadratic
// in the scale, so a few fixed-point rounds converge.
UnfoldedLayer calibrated_init_layer(const std::vector<TrainSample>& samples, int length) {
  const double base = typical_covariance_scale(samples);
  double alpha = 1.0 / (base * base);
  const int probe = std::min<int>(64, static_cast<int>(samples.size()));

  for (int round = 0; round < 4; ++round) {
    UnfoldedLayer layer{alpha * Eigen::MatrixXcd::Identity(length, length),
                        Eigen::MatrixXcd::Zero(length, length), 1e-2};
    double out_acc = 0.0, tgt_acc = 0.0;
    for (int i = 0; i < probe; ++i) {
      const auto& s = samples[i];
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(s.model.devices());
      const Eigen::VectorXd a1 = unfolded_layer(s.model, s.y, zero, layer);
      for (int k = 0; k < s.model.devices(); ++k) {
        if (s.target[k] <= 0.0) continue;
        out_acc += a1[k];
        tgt_acc += s.target[k];
      }
    }
    if (out_acc <= 0.0 || tgt_acc <= 0.0) break;
    const double ratio = tgt_acc / out_acc;
    if (std::abs(ratio - 1.0) < 0.05) break;
    alpha *= std::sqrt(ratio);
  }
  return {alpha * Eigen::MatrixXcd::Identity(length, length),
          Eigen::MatrixXcd::Zero(length, length), 1e-2};
}

}  // namespace

UnfoldedTrainResult train_unfolded(const std::vector<TrainSample>& samples, int depth,
                                   const TrainConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw ConfigError("training requires a non-empty dataset");
  if (depth < 1) throw ConfigError("unfolded depth must be >= 1");
  const int length = samples.front().model.length();

  std::vector<const TrainSample*> full;
  full.reserve(samples.size());
  for (const auto& s : samples) full.push_back(&s);

  const UnfoldedLayer init_layer = calibrated_init_layer(samples, length);

  UnfoldedTrainResult result;
  UnfoldedParams params;
  double prev_final = 0.0;

  std::vector<int> indices(samples.size());
  std::iota(indices.begin(), indices.end(), 0);

  for (int stage = 1; stage <= depth; ++stage) {
    if (stage == 1)
      params.layers.push_back(init_layer);
    else
      params.layers.push_back(params.layers.back());

    const UnfoldedParams stage_start = params;

    std::vector<Eigen::VectorXd> theta(stage);
    std::vector<AdamState> adam(stage);
    for (int i = 0; i < stage; ++i) {
      theta[i] = pack_layer(params.layers[i]);
      adam[i].init(theta[i].size());
    }

    Rng shuffle_rng = Rng::derive(cfg.seed, {stream::kShuffle, static_cast<std::uint64_t>(stage)});
    std::vector<double> trace;
    trace.push_back(batch_loss(full, params));
    if (!std::isfinite(trace.back()))
      throw NumericalError("training diverged at stage " + std::to_string(stage));

    UnfoldedGradients grads;
    for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
      shuffle_rng.shuffle(indices);
      for (std::size_t start = 0; start < indices.size();
           start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t stop =
            std::min(indices.size(), start + static_cast<std::size_t>(cfg.batch_size));
        std::vector<const TrainSample*> batch;
        batch.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) batch.push_back(&samples[indices[i]]);

        const double loss = batch_loss_and_gradients(batch, params, grads);
        if (!std::isfinite(loss))
          throw NumericalError("training diverged at stage " + std::to_string(stage));
        std::vector<Eigen::VectorXd> flat(stage);
        double grad_norm2 = 0.0;
        for (int i = 0; i < stage; ++i) {
          flat[i] = pack_gradient(grads.layers[i], params.layers[i].eta);
          grad_norm2 += flat[i].squaredNorm();
        }
        // clip the global gradient norm; the raw scale swings over orders of
        // magnitude with the per-frame activity draw
        constexpr double kClipNorm = 10.0;
        const double clip = grad_norm2 > kClipNorm * kClipNorm
                                ? kClipNorm / std::sqrt(grad_norm2)
                                : 1.0;
        for (int i = 0; i < stage; ++i) {
          if (clip != 1.0) flat[i] *= clip;
          adam[i].update(theta[i], flat[i], cfg.learning_rate);
          unpack_layer(theta[i], params.layers[i]);
        }
      }
      trace.push_back(batch_loss(full, params));
      if (!std::isfinite(trace.back()))
        throw NumericalError("training diverged at stage " + std::to_string(stage));
    }

    // A deeper stage must not end worse than the previous one. If it does,
    // fall back to the previous stack extended by a near-identity layer.
    if (stage > 1 && trace.back() > prev_final) {
      params = stage_start;
      params.layers.back().eta = std::exp(-60.0);
      trace.push_back(batch_loss(full, params));
    }

    prev_final = trace.back();
    result.stage_traces.push_back(std::move(trace));
  }

  result.params = std::move(params);
  result.initial_loss = result.stage_traces.front().front();
  result.final_loss = prev_final;
  return result;
}

namespace {

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_cmatrix(std::ostream& out, const Eigen::MatrixXcd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double re = m(r, c).real(), im = m(r, c).imag();
      put_bytes(out, &re, 8);
      put_bytes(out, &im, 8);
    }
}

Eigen::MatrixXcd get_cmatrix(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      double re = 0, im = 0;
      in.read(reinterpret_cast<char*>(&re), 8);
      in.read(reinterpret_cast<char*>(&im), 8);
      m(r, c) = {re, im};
    }
  return m;
}

}  // namespace

void save_unfolded(const std::string& path, const UnfoldedParams& params,
                   const std::string& loss_kind, std::uint64_t seed, double y_scale,
                   double a_scale) {
  if (params.depth() < 1) throw ConfigError("cannot save an empty parameter stack");
  const auto length = params.layers.front().A.rows();

  json header;
  header["format"] = "unfolded-params";
  header["version"] = 1;
  header["layers"] = params.depth();
  header["signature_length"] = length;
  header["loss"] = loss_kind;
  header["seed"] = seed;
  header["y_scale"] = y_scale;
  header["a_scale"] = a_scale;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  const std::size_t blob_bytes =
      params.depth() * (2 * 16 * static_cast<std::size_t>(length * length) + 8);
  out << header.dump() << "\n" << "BLOB " << blob_bytes << "\n";
  for (const auto& layer : params.layers) {
    put_cmatrix(out, layer.A);
    put_cmatrix(out, layer.B);
    put_bytes(out, &layer.eta, 8);
  }
  if (!out) throw CheckpointError("write failure on checkpoint: " + path);
}

UnfoldedCheckpoint load_unfolded(const std::string& path) {
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
  if (header.value("format", "") != "unfolded-params" || header.value("version", 0) != 1)
    throw CheckpointError("not an unfolded-params v1 checkpoint: " + path);

  UnfoldedCheckpoint ckpt;
  const int depth = header["layers"].get<int>();
  const auto length = header["signature_length"].get<Eigen::Index>();
  ckpt.loss_kind = header.value("loss", "scaled-mse");
  ckpt.seed = header.value("seed", std::uint64_t{0});
  ckpt.y_scale = header.value("y_scale", 1.0);
  ckpt.a_scale = header.value("a_scale", 1.0);
  for (int i = 0; i < depth; ++i) {
    UnfoldedLayer layer;
    layer.A = get_cmatrix(in, length, length);
    layer.B = get_cmatrix(in, length, length);
    in.read(reinterpret_cast<char*>(&layer.eta), 8);
    ckpt.params.layers.push_back(std::move(layer));
  }
  if (!in) throw CheckpointError("truncated checkpoint: " + path);
  return ckpt;
}

}  // namespace irsdet

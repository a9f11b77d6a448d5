#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "irsdet/covstats.hpp"
#include "irsdet/rng.hpp"
#include "irsdet/unfolding.hpp"

namespace irsdet {

// Three-layer gating MLP: 2LM -> 512 (ReLU) -> 128 (tanh) -> 3 (softmax).
struct GateParams {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
  double input_scale = 1.0;  // applied to the flattened frame before layer 1

  int input_dim() const { return static_cast<int>(w1.cols()); }
};

inline constexpr int kGateHidden1 = 512;
inline constexpr int kGateHidden2 = 128;
inline constexpr int kGateOutputs = 3;

// [Re(vec(Y)); Im(vec(Y))], column-major vectorization.
Eigen::VectorXd preprocess(const Eigen::MatrixXcd& y);

// Forward pass; returns a probability vector over the three device kinds.
Eigen::Vector3d gate_forward(const Eigen::VectorXd& x, const GateParams& params);

Eigen::Vector3d true_proportions(const std::vector<Group>& groups);

// sum_i rho_true_i * log(rho_true_i / rho_i), with 0 log 0 = 0 and rho
// clamped at 1e-12.
double kl_loss(const Eigen::Vector3d& rho, const Eigen::Vector3d& rho_true);

// Argmax proportion -> expert; ties break toward the lowest index.
ExpertKind select_expert(const Eigen::Vector3d& rho);

// Xavier-uniform initialization, zero biases.
GateParams init_gate(int input_dim, double input_scale, Rng& rng);

struct GateSample {
  Eigen::VectorXd x;         // preprocessed frame
  Eigen::Vector3d rho_true;  // label proportions
};

struct GateTrainResult {
  GateParams params;
  std::vector<double> trace;  // full-dataset mean KL per epoch boundary
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

GateTrainResult train_gate(const std::vector<GateSample>& samples, int input_dim,
                           double input_scale, const TrainConfig& cfg);

// Mean KL and its parameter gradients over a batch (reverse mode).
struct GateGradients {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
};
double gate_loss_and_gradients(const std::vector<const GateSample*>& batch,
                               const GateParams& params, GateGradients& grads);

void save_gate(const std::string& path, const GateParams& params, std::uint64_t seed);
GateParams load_gate(const std::string& path);

}  // namespace irsdet

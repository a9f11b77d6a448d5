#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "irsdet/covstats.hpp"
#include "irsdet/rng.hpp"

namespace irsdet {

// One unfolded iteration: trainable surrogate-inverse pair (A, B) and step
// size eta. The layer forms M_m = A Sigma_m + B in place of Sigma_m^-1.
struct UnfoldedLayer {
  Eigen::MatrixXcd A;  // L x L
  Eigen::MatrixXcd B;  // L x L
  double eta = 0.0;
};

struct UnfoldedParams {
  std::vector<UnfoldedLayer> layers;
  int depth() const { return static_cast<int>(layers.size()); }
};

// a_next = max(a_prev - eta * d~, 0) with every Sigma^-1 in the gradient
// replaced by the layer's surrogate; the real part of the surrogate gradient
// drives the update.
Eigen::VectorXd unfolded_layer(const ModelContext& model, const Eigen::MatrixXcd& y,
                               const Eigen::VectorXd& a_prev, const UnfoldedLayer& layer);

// Composition of all layers from a = 0.
Eigen::VectorXd unfolded_forward(const ModelContext& model, const Eigen::MatrixXcd& y,
                                 const UnfoldedParams& params);

struct UnfoldedGradients {
  struct Layer {
    Eigen::MatrixXcd A;  // d loss / d Re(A) + i * d loss / d Im(A)
    Eigen::MatrixXcd B;
    double eta = 0.0;
  };
  std::vector<Layer> layers;
};

// One training sample: a model context (expert already resolved), the
// received frame, the regression target and its scale weight.
struct TrainSample {
  ModelContext model;
  Eigen::MatrixXcd y;
  Eigen::VectorXd target;
  double weight = 1.0;  // loss uses weight^2 * (a_hat - target)^2
};

// Mean scaled-MSE over the batch plus exact reverse-mode parameter gradients.
// The projection uses subgradient 0 at the clamp boundary.
double batch_loss_and_gradients(const std::vector<const TrainSample*>& batch,
                                const UnfoldedParams& params, UnfoldedGradients& grads);

double batch_loss(const std::vector<const TrainSample*>& batch, const UnfoldedParams& params);

struct TrainConfig {
  int dataset_size = 2000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int epochs_per_stage = 25;
  std::string loss = "scaled-mse";
  std::uint64_t seed = 1;

  void validate() const;
};

struct UnfoldedTrainResult {
  UnfoldedParams params;
  // Full-dataset loss at every epoch boundary, per incremental stage;
  // trace[i] starts with the loss at stage i's initial parameters.
  std::vector<std::vector<double>> stage_traces;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Incremental training: stage i fits layers 1..i jointly, the new layer
// starting from the previous layer's learned values (stage 1 from scaled
// identity A, zero B, eta = 1e-2). Adam on (Re A, Im A, Re B, Im B, log eta).
UnfoldedTrainResult train_unfolded(const std::vector<TrainSample>& samples, int depth,
                                   const TrainConfig& cfg);

// Checkpoint container: one-line JSON header, then "BLOB <bytes>" and the
// row-major interleaved re/im payload.
void save_unfolded(const std::string& path, const UnfoldedParams& params,
                   const std::string& loss_kind, std::uint64_t seed, double y_scale,
                   double a_scale);

struct UnfoldedCheckpoint {
  UnfoldedParams params;
  std::string loss_kind;
  std::uint64_t seed = 0;
  double y_scale = 1.0;
  double a_scale = 1.0;
};

UnfoldedCheckpoint load_unfolded(const std::string& path);

}  // namespace irsdet

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "irsdet/covstats.hpp"
#include "irsdet/rng.hpp"

namespace irsdet {

// Exact gradient of the summed per-column negative log-likelihood at `a`.
Eigen::VectorXd gradient(const ModelContext& model, const Eigen::MatrixXcd& y,
                         const Eigen::VectorXd& a);

struct PgdOptions {
  int max_iters = 500;
  double tol = 1e-8;         // relative objective-decrease stopping threshold
  bool backtracking = true;  // Armijo line search; otherwise fixed_step
  double fixed_step = 1e-2;
  double initial_step = 1.0;
  double shrink = 0.5;
  double armijo = 1e-4;
};

struct PgdResult {
  Eigen::VectorXd a_hat;
  std::vector<double> objective;  // objective at the start plus each accepted iterate
  int iterations = 0;
};

// Projected gradient descent from a = 0 onto the nonnegative orthant.
PgdResult pgd_solve(const ModelContext& model, const Eigen::MatrixXcd& y,
                    const PgdOptions& opts);

struct CdOptions {
  int max_passes = 30;
  double tol = 1e-8;  // objective decrease per pass
};

struct CdResult {
  Eigen::VectorXd a_hat;
  std::vector<double> objective;  // objective after every coordinate update
  Eigen::MatrixXcd sigma_inv;     // maintained inverse at exit
  int passes = 0;
};

// Coordinate descent on the zero-mean covariance model
// Sigma = sum_k a_k s_k s_k^H + noise_power I against the sample covariance
// Y Y^H / M, with closed-form coordinate updates and rank-one inverse
// maintenance. Coordinate order is reshuffled every pass.
CdResult cd_solve(const Eigen::MatrixXcd& signatures, const Eigen::MatrixXcd& y,
                  double noise_power, const CdOptions& opts, Rng& rng);

}  // namespace irsdet

#include "irsdet/solvers.hpp"

#include <cmath>
#include <numeric>

#include "irsdet/errors.hpp"

namespace irsdet {

Eigen::VectorXd gradient(const ModelContext& model, const Eigen::MatrixXcd& y,
                         const Eigen::VectorXd& a) {
  Eigen::VectorXd grad;
  NllEvaluator(model, y).value_and_gradient(a, grad);
  return grad;
}

PgdResult pgd_solve(const ModelContext& model, const Eigen::MatrixXcd& y,
                    const PgdOptions& opts) {
  if (opts.max_iters < 1) throw ConfigError("pgd max_iters must be >= 1");
  if (opts.backtracking && !(opts.shrink > 0.0 && opts.shrink < 1.0))
    throw ConfigError("pgd shrink factor must lie in (0, 1)");
  if (!opts.backtracking && !(opts.fixed_step > 0.0))
    throw ConfigError("pgd fixed step must be positive");

  const NllEvaluator eval(model, y);
  const int k_count = model.devices();

  PgdResult result;
  result.a_hat = Eigen::VectorXd::Zero(k_count);
  Eigen::VectorXd grad(k_count);
  double objective = eval.value_and_gradient(result.a_hat, grad);
  if (!std::isfinite(objective))
    throw NumericalError("pgd objective non-finite at the initial point");
  result.objective.push_back(objective);

  // line searches warm-start from the previously accepted step, with the
  // very first trial step capped so a huge initial gradient cannot fling the
  // iterate far up the objective
  double warm_step = opts.initial_step;
  if (opts.backtracking) {
    const double gmax = grad.cwiseAbs().maxCoeff();
    if (gmax > 0.0) warm_step = std::min(opts.initial_step, 1.0 / gmax);
  }

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    Eigen::VectorXd candidate;
    double candidate_objective = objective;

    if (opts.backtracking) {
      bool accepted = false;
      double step = std::min(opts.initial_step, warm_step / opts.shrink);
      for (int bt = 0; bt < 120; ++bt) {
        candidate = (result.a_hat - step * grad).cwiseMax(0.0);
        const double directional = grad.dot(candidate - result.a_hat);
        if (directional >= 0.0) break;  // projected step is stationary
        candidate_objective = eval.value(candidate);
        if (std::isfinite(candidate_objective) &&
            candidate_objective <= objective + opts.armijo * directional) {
          accepted = true;
          break;
        }
        step *= opts.shrink;
      }
      if (!accepted) break;  // no descent step found: stationary point
      warm_step = step;
      result.a_hat = candidate;
      eval.value_and_gradient(result.a_hat, grad);
    } else {
      result.a_hat = (result.a_hat - opts.fixed_step * grad).cwiseMax(0.0);
      candidate_objective = eval.value_and_gradient(result.a_hat, grad);
      if (!std::isfinite(candidate_objective))
        throw NumericalError("pgd objective non-finite at iteration " + std::to_string(iter));
    }

    const double previous = objective;
    objective = candidate_objective;  // trace stays consistent with accepted values
    result.objective.push_back(objective);
    result.iterations = iter + 1;

    const double decrease = previous - objective;
    if (opts.tol > 0.0 && decrease >= 0.0 &&
        decrease <= opts.tol * std::max(1.0, std::abs(previous)))
      break;
  }
  return result;
}

CdResult cd_solve(const Eigen::MatrixXcd& signatures, const Eigen::MatrixXcd& y,
                  double noise_power, const CdOptions& opts, Rng& rng) {
  if (opts.max_passes < 1) throw ConfigError("cd max_passes must be >= 1");
  if (!(noise_power > 0.0)) throw ConfigError("cd noise power must be positive");
  if (!y.allFinite()) throw DataError("received matrix contains non-finite entries");

  const int length = static_cast<int>(signatures.rows());
  const int k_count = static_cast<int>(signatures.cols());
  const int m_count = static_cast<int>(y.cols());

  const Eigen::MatrixXcd sample_cov = (y * y.adjoint()) / static_cast<double>(m_count);

  CdResult result;
  result.a_hat = Eigen::VectorXd::Zero(k_count);
  result.sigma_inv =
      Eigen::MatrixXcd::Identity(length, length) / noise_power;

  double objective = length * std::log(noise_power) + sample_cov.trace().real() / noise_power;
  result.objective.push_back(objective);

  std::vector<int> order(k_count);
  std::iota(order.begin(), order.end(), 0);

  for (int pass = 0; pass < opts.max_passes; ++pass) {
    const double pass_start = objective;
    rng.shuffle(order);
    for (int k : order) {
      const Eigen::VectorXcd u = result.sigma_inv * signatures.col(k);
      const double quad = signatures.col(k).dot(u).real();       // s^H Sigma^-1 s
      const double data_quad = (u.adjoint() * sample_cov * u)(0).real();
      double delta = (data_quad - quad) / (quad * quad);
      delta = std::max(delta, -result.a_hat[k]);
      const double denom = 1.0 + delta * quad;
      if (delta == 0.0 || denom <= 0.0) {
        result.objective.push_back(objective);
        continue;
      }
      result.a_hat[k] += delta;
      result.sigma_inv.noalias() -= (delta / denom) * (u * u.adjoint());
      objective += std::log(denom) - delta * data_quad / denom;
      if (!std::isfinite(objective))
        throw NumericalError("cd objective non-finite at device " + std::to_string(k));
      result.objective.push_back(objective);
    }
    result.passes = pass + 1;
    if (pass_start - objective <= opts.tol * std::max(1.0, std::abs(pass_start))) break;
  }
  return result;
}

}  // namespace irsdet

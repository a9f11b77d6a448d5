#include "irsdet/covstats.hpp"

#include <algorithm>
#include <cmath>

#include "irsdet/errors.hpp"

namespace irsdet {

std::string to_string(ExpertKind kind) {
  switch (kind) {
    case ExpertKind::kExpert1: return "expert1";
    case ExpertKind::kExpert2: return "expert2";
    case ExpertKind::kExpert3: return "expert3";
    case ExpertKind::kPerfectGrouping: return "perfect";
  }
  return "unknown";
}

double xi_from_norms(double n_elems, double g_norm2, double h_norm2,
                     double kappa_irs_bs, double kappa_device_bs) {
  return (n_elems + kappa_irs_bs * g_norm2 + kappa_device_bs * h_norm2) /
         ((1.0 + kappa_irs_bs) * (1.0 + kappa_device_bs));
}

namespace {

// Fills model.coef and model.mu for one device treated as the given kind.
void fill_device(ModelContext& model, int k, Group kind) {
  const int m_count = model.antennas();
  switch (kind) {
    case Group::kIrs: {
      const double w_irs = std::sqrt(model.kappa_device_irs / (1.0 + model.kappa_device_irs));
      const double w_bs = std::sqrt(model.kappa_irs_bs / (1.0 + model.kappa_irs_bs));
      for (int m = 0; m < m_count; ++m) {
        model.coef(k, m) = model.xi(m, k);
        model.mu(k, m) = w_irs * w_bs * model.c_los(m, k);
      }
      break;
    }
    case Group::kDirectRician: {
      const double w = std::sqrt(model.kappa_device_bs / (1.0 + model.kappa_device_bs));
      for (int m = 0; m < m_count; ++m) {
        model.coef(k, m) = 1.0 / (1.0 + model.kappa_device_bs);
        model.mu(k, m) = w * std::conj(model.f_los(m, k));
      }
      break;
    }
    case Group::kDirectRayleigh: {
      for (int m = 0; m < m_count; ++m) {
        model.coef(k, m) = 1.0;
        model.mu(k, m) = 0.0;
      }
      break;
    }
  }
}

}  // namespace

ModelContext make_model(const ScenarioRealization& scenario, const LosComponents& los,
                        const Eigen::VectorXcd& theta, const Eigen::MatrixXcd& signatures,
                        ExpertKind grouping) {
  const auto& cfg = scenario.config;
  const int m_count = cfg.antennas;
  const int k_count = scenario.devices();
  const int n_count = cfg.irs_elements;

  ModelContext model;
  model.S = signatures;
  model.kappa_device_bs = cfg.kappa_device_bs;
  model.kappa_device_irs = cfg.kappa_device_irs;
  model.kappa_irs_bs = cfg.kappa_irs_bs;
  model.noise_power = cfg.noise_power;
  model.grouping = grouping;
  if (grouping == ExpertKind::kPerfectGrouping) model.groups = scenario.groups;

  model.c_los.resize(m_count, k_count);
  model.f_los = los.f;
  model.xi.resize(m_count, k_count);

  const auto theta_diag = theta.asDiagonal();
  Eigen::MatrixXcd theta_g = theta_diag * los.g;  // N x M
  for (int k = 0; k < k_count; ++k) {
    const double h_norm2 = los.h.col(k).squaredNorm();
    for (int m = 0; m < m_count; ++m) {
      model.c_los(m, k) = los.h.col(k).dot(theta_g.col(m));  // (h^los)^H Theta g^los
      model.xi(m, k) = xi_from_norms(n_count, los.g.col(m).squaredNorm(), h_norm2,
                                     cfg.kappa_irs_bs, cfg.kappa_device_bs);
    }
  }

  model.coef.resize(k_count, m_count);
  model.mu.resize(k_count, m_count);
  for (int k = 0; k < k_count; ++k) {
    const Group kind = grouping == ExpertKind::kPerfectGrouping
                           ? scenario.groups[k]
                           : static_cast<Group>(static_cast<int>(grouping));
    fill_device(model, k, kind);
  }

  model.shared_covariance = true;
  for (int m = 1; m < m_count && model.shared_covariance; ++m)
    if (model.coef.col(m) != model.coef.col(0)) model.shared_covariance = false;

  return model;
}

double xi_value(const ModelContext& model, int m, int k) { return model.xi(m, k); }

Eigen::VectorXcd mean_ym(const ModelContext& model, int m, const Eigen::VectorXd& a) {
  const Eigen::VectorXcd weights = model.mu.col(m).array() * a.array();
  return model.S * weights;
}

Eigen::MatrixXcd covariance_ym(const ModelContext& model, int m, const Eigen::VectorXd& a) {
  const int length = model.length();
  const Eigen::VectorXd weights = model.coef.col(m).cwiseProduct(a);
  Eigen::MatrixXcd sigma =
      model.noise_power * Eigen::MatrixXcd::Identity(length, length);
  sigma.noalias() += model.S * weights.asDiagonal() * model.S.adjoint();
  return sigma;
}

ModelContext noise_normalized(const ModelContext& model) {
  ModelContext out = model;
  out.noise_power = 1.0;
  return out;
}

ModelContext rescaled(const ModelContext& model, double y_scale) {
  if (!(y_scale > 0.0)) throw ConfigError("rescale factor must be positive");
  ModelContext out = model;
  out.noise_power = model.noise_power / (y_scale * y_scale);
  return out;
}

double amplitude_scale(const ScenarioRealization& scenario) {
  Eigen::VectorXd beta = scenario.beta;
  std::nth_element(beta.data(), beta.data() + beta.size() / 2, beta.data() + beta.size());
  return std::sqrt(scenario.config.tx_power * beta[beta.size() / 2]);
}

NllEvaluator::NllEvaluator(const ModelContext& model, const Eigen::MatrixXcd& y)
    : model_(&model), y_(y) {
  if (y.rows() != model.length() || y.cols() != model.antennas())
    throw DataError("received matrix has the wrong shape for this model");
  if (!y.allFinite()) throw DataError("received matrix contains non-finite entries");
}

double NllEvaluator::value(const Eigen::VectorXd& a) const {
  const auto& model = *model_;
  const int m_count = model.antennas();

  double total = 0.0;
  Eigen::LLT<Eigen::MatrixXcd> llt;
  for (int m = 0; m < m_count; ++m) {
    if (m == 0 || !model.shared_covariance) llt.compute(covariance_ym(model, m, a));
    const Eigen::VectorXcd residual = y_.col(m) - mean_ym(model, m, a);
    double logdet = 0.0;
    for (int i = 0; i < model.length(); ++i)
      logdet += 2.0 * std::log(llt.matrixLLT()(i, i).real());
    total += logdet + llt.matrixL().solve(residual).squaredNorm();
  }
  return total;
}

double NllEvaluator::value_and_gradient(const Eigen::VectorXd& a, Eigen::VectorXd& grad) const {
  const auto& model = *model_;
  const int m_count = model.antennas();
  const int k_count = model.devices();
  const int length = model.length();

  grad = Eigen::VectorXd::Zero(k_count);
  double total = 0.0;

  Eigen::LLT<Eigen::MatrixXcd> llt;
  Eigen::MatrixXcd sigma_inv_s;  // L x K
  Eigen::VectorXd quad_ss;       // K, s_k^H Sigma^-1 s_k
  double logdet = 0.0;

  for (int m = 0; m < m_count; ++m) {
    if (m == 0 || !model.shared_covariance) {
      llt.compute(covariance_ym(model, m, a));
      logdet = 0.0;
      for (int i = 0; i < length; ++i) logdet += 2.0 * std::log(llt.matrixLLT()(i, i).real());
      sigma_inv_s = llt.solve(model.S);
      quad_ss = (model.S.array().conjugate() * sigma_inv_s.array()).colwise().sum().real();
    }
    const Eigen::VectorXcd residual = y_.col(m) - mean_ym(model, m, a);
    const Eigen::VectorXcd sigma_inv_r = llt.solve(residual);
    total += logdet + residual.dot(sigma_inv_r).real();

    // v_k = s_k^H Sigma^-1 r
    const Eigen::VectorXcd v = sigma_inv_s.adjoint() * residual;
    grad += model.coef.col(m).cwiseProduct(quad_ss - v.cwiseAbs2());
    grad -= 2.0 * (model.mu.col(m).conjugate().array() * v.array()).real().matrix();
  }
  return total;
}

double nll(const ModelContext& model, const Eigen::MatrixXcd& y, const Eigen::VectorXd& a) {
  return NllEvaluator(model, y).value(a);
}

}  // namespace irsdet

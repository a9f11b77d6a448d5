#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <string>
#include <vector>

#include "irsdet/channel.hpp"
#include "irsdet/scenario.hpp"

namespace irsdet {

// Covariance model applied during detection. The three experts re-type every
// device as one channel kind; perfect grouping uses the true labels.
enum class ExpertKind { kExpert1 = 0, kExpert2 = 1, kExpert3 = 2, kPerfectGrouping = 3 };

std::string to_string(ExpertKind kind);

// Scalar coefficient of s_k s_k^H in the cascaded covariance term:
// (N + kappa_irs_bs*|g|^2 + kappa_device_bs*|h|^2) /
// ((1+kappa_irs_bs)*(1+kappa_device_bs)).
double xi_from_norms(double n_elems, double g_norm2, double h_norm2,
                     double kappa_irs_bs, double kappa_device_bs);

// Everything the likelihood needs, precomputed per scenario: signatures,
// LoS inner products, the xi table, and the per-device coefficient tables
// implied by the selected grouping.
struct ModelContext {
  Eigen::MatrixXcd S;      // L x K
  Eigen::MatrixXcd c_los;  // M x K, (h_k^los)^H Theta g_m^los
  Eigen::MatrixXcd f_los;  // M x K, f_k^los(m)
  Eigen::MatrixXd xi;      // M x K
  std::vector<Group> groups;
  double kappa_device_bs = 0.0;
  double kappa_device_irs = 0.0;
  double kappa_irs_bs = 0.0;
  double noise_power = 0.0;
  ExpertKind grouping = ExpertKind::kExpert3;

  // Derived: covariance coefficient and mean coefficient of a_k for each
  // (device, antenna) under `grouping`.
  Eigen::MatrixXd coef;   // K x M
  Eigen::MatrixXcd mu;    // K x M
  bool shared_covariance = false;  // covariance identical across antennas

  int antennas() const { return static_cast<int>(c_los.rows()); }
  int devices() const { return static_cast<int>(S.cols()); }
  int length() const { return static_cast<int>(S.rows()); }
};

ModelContext make_model(const ScenarioRealization& scenario, const LosComponents& los,
                        const Eigen::VectorXcd& theta, const Eigen::MatrixXcd& signatures,
                        ExpertKind grouping);

double xi_value(const ModelContext& model, int m, int k);

// Model mean of the m-th received column at activity coefficients `a`.
Eigen::VectorXcd mean_ym(const ModelContext& model, int m, const Eigen::VectorXd& a);

// Model covariance of the m-th received column, linear in `a`:
// sum_k coef(k,m) a_k s_k s_k^H + noise_power I_L.
Eigen::MatrixXcd covariance_ym(const ModelContext& model, int m, const Eigen::VectorXd& a);

// Summed per-column negative log-likelihood (the -L log pi constant dropped).
double nll(const ModelContext& model, const Eigen::MatrixXcd& y, const Eigen::VectorXd& a);

// Returns a copy with the noise power set to 1; callers scale the received
// matrix by 1/sqrt(noise_power) to match. Estimates then come out in
// noise-normalized units, which ROC thresholds absorb.
ModelContext noise_normalized(const ModelContext& model);

// Copy with noise power expressed in units where the received matrix has
// been divided by y_scale.
ModelContext rescaled(const ModelContext& model, double y_scale);

// Median active amplitude sqrt(p * beta) over the scenario's devices; the
// working unit detectors and trainers normalize the received frame by. In
// these units the model's mean and covariance coefficients agree at the
// typical operating point.
double amplitude_scale(const ScenarioRealization& scenario);

// Objective/gradient evaluation with per-antenna factorizations computed once
// per activity vector, shared across antennas when the covariance allows it.
class NllEvaluator {
 public:
  NllEvaluator(const ModelContext& model, const Eigen::MatrixXcd& y);

  double value(const Eigen::VectorXd& a) const;
  double value_and_gradient(const Eigen::VectorXd& a, Eigen::VectorXd& grad) const;

  const ModelContext& model() const { return *model_; }

 private:
  const ModelContext* model_;
  Eigen::MatrixXcd y_;
};

}  // namespace irsdet

#include "irsdet/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace irsdet {

Eigen::VectorXcd steering_vector(int n_elems, double angle) {
  Eigen::VectorXcd v(n_elems);
  const double phase_step = M_PI * std::sin(angle);
  for (int i = 0; i < n_elems; ++i) v[i] = std::polar(1.0, phase_step * i);
  return v;
}

Eigen::VectorXcd sample_rician(const Eigen::VectorXcd& los, double kappa, Rng& rng) {
  if (kappa < 0.0) throw std::domain_error("Rician factor must be nonnegative");
  const double los_scale = std::sqrt(kappa / (1.0 + kappa));
  const double nlos_scale = std::sqrt(1.0 / (1.0 + kappa));
  Eigen::VectorXcd out(los.size());
  for (Eigen::Index i = 0; i < los.size(); ++i)
    out[i] = los_scale * los[i] + nlos_scale * rng.cgaussian();
  return out;
}

Eigen::VectorXcd generate_phase_shifts(int n, Rng& rng) {
  Eigen::VectorXcd theta(n);
  for (int i = 0; i < n; ++i) theta[i] = std::polar(1.0, rng.uniform(0.0, 2.0 * M_PI));
  return theta;
}

LosComponents make_los(const ScenarioRealization& scenario) {
  const auto& geo = scenario.config.geometry;
  const int m_count = scenario.config.antennas;
  const int n_count = scenario.config.irs_elements;
  const int k_count = scenario.devices();

  LosComponents los;
  los.f.resize(m_count, k_count);
  los.h.resize(n_count, k_count);
  los.g.resize(n_count, m_count);

  for (int k = 0; k < k_count; ++k) {
    los.f.col(k) = steering_vector(m_count, azimuth(geo.bs, scenario.positions[k]));
    los.h.col(k) = steering_vector(n_count, azimuth(geo.irs, scenario.positions[k]));
  }

  // IRS -> BS: a common IRS-side response, phased per receive antenna by the
  // BS-side response toward the IRS.
  const Eigen::VectorXcd irs_side = steering_vector(n_count, azimuth(geo.irs, geo.bs));
  const Eigen::VectorXcd bs_side = steering_vector(m_count, azimuth(geo.bs, geo.irs));
  for (int m = 0; m < m_count; ++m) los.g.col(m) = bs_side[m] * irs_side;

  return los;
}

ChannelRealization sample_channels(const ScenarioRealization& scenario,
                                   const LosComponents& los,
                                   const Eigen::VectorXcd& theta, Rng& rng) {
  const auto& cfg = scenario.config;
  const int k_count = scenario.devices();
  const int m_count = cfg.antennas;

  ChannelRealization ch;
  ch.los = los;
  ch.theta = theta;
  ch.f.resize(m_count, k_count);
  ch.h.resize(cfg.irs_elements, k_count);
  ch.g.resize(cfg.irs_elements, m_count);

  for (int k = 0; k < k_count; ++k) {
    const double kappa_direct =
        scenario.groups[k] == Group::kDirectRayleigh ? 0.0 : cfg.kappa_device_bs;
    ch.f.col(k) = sample_rician(los.f.col(k), kappa_direct, rng);
  }
  for (int k = 0; k < k_count; ++k)
    ch.h.col(k) = sample_rician(los.h.col(k), cfg.kappa_device_irs, rng);
  for (int m = 0; m < m_count; ++m)
    ch.g.col(m) = sample_rician(los.g.col(m), cfg.kappa_irs_bs, rng);

  return ch;
}

}  // namespace irsdet

#pragma once

#include <Eigen/Dense>

#include "irsdet/rng.hpp"
#include "irsdet/scenario.hpp"

namespace irsdet {

// Uniform linear array response, half-wavelength spacing:
// entry i = exp(j*pi*i*sin(angle)).
Eigen::VectorXcd steering_vector(int n_elems, double angle);

// sqrt(kappa/(1+kappa)) * los + sqrt(1/(1+kappa)) * CN(0, I).
Eigen::VectorXcd sample_rician(const Eigen::VectorXcd& los, double kappa, Rng& rng);

// IRS phase coefficients, i.i.d. uniform phases; fixed once per scenario.
Eigen::VectorXcd generate_phase_shifts(int n, Rng& rng);

// Deterministic LoS components from scenario geometry.
struct LosComponents {
  Eigen::MatrixXcd f;  // M x K, device -> BS
  Eigen::MatrixXcd h;  // N x K, device -> IRS
  Eigen::MatrixXcd g;  // N x M, IRS -> BS antenna m
};

LosComponents make_los(const ScenarioRealization& scenario);

struct ChannelRealization {
  Eigen::MatrixXcd f;  // M x K
  Eigen::MatrixXcd h;  // N x K
  Eigen::MatrixXcd g;  // N x M
  LosComponents los;
  Eigen::VectorXcd theta;  // N unit-modulus phase coefficients
};

// Draws all small-scale fading for one coherence block. Direct-Rayleigh
// devices use kappa = 0 on the device-BS link.
ChannelRealization sample_channels(const ScenarioRealization& scenario,
                                   const LosComponents& los,
                                   const Eigen::VectorXcd& theta, Rng& rng);

}  // namespace irsdet

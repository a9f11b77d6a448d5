#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "irsdet/rng.hpp"

namespace irsdet {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Azimuth of `to` as seen from `from`, in the x-y plane.
inline double azimuth(const Vec3& from, const Vec3& to) {
  return std::atan2(to.y - from.y, to.x - from.x);
}

enum class Group : std::uint8_t { kIrs = 0, kDirectRician = 1, kDirectRayleigh = 2 };

struct Geometry {
  Vec3 bs{0.0, 0.0, 10.0};
  Vec3 irs{5.0, 50.0, 10.0};
  Vec3 irs_area_center{200.0, 0.0, 0.0};
  double irs_area_radius = 40.0;
  Vec3 direct_area_center{0.0, 120.0, 0.0};
  double direct_area_radius = 40.0;
};

struct ScenarioConfig {
  int antennas = 32;                    // M
  int irs_elements = 40;                // N
  int devices = 100;                    // K
  int signature_length = 20;            // L
  std::array<double, 3> group_proportions{0.4, 0.3, 0.3};
  // Rician factors, linear scale (10 dB default).
  double kappa_device_bs = 10.0;   // direct link
  double kappa_device_irs = 10.0;  // device -> IRS
  double kappa_irs_bs = 10.0;      // IRS -> BS
  double noise_power = 3.1622776601683794e-13;  // -95 dBm, watts
  double tx_power = 0.19952623149688797;        // 23 dBm, watts
  double activity_prob = 0.2;
  Geometry geometry;
  std::uint64_t seed = 1;

  void validate() const;

  static ScenarioConfig from_json_file(const std::string& path);
  static ScenarioConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

// Large-scale gain from the -60 - 22*log10(d) dB law, d in meters
// (product of the two hop distances for the cascaded link, or the
// single device-BS distance for direct links).
double pathloss_gain(double dist_product);
double pathloss_gain(double dist_device_hop, double dist_hop_bs);

// Largest-remainder apportionment of `total` across the proportions.
std::array<int, 3> group_counts(const std::array<double, 3>& proportions, int total);

struct ScenarioRealization {
  std::vector<Vec3> positions;  // K device positions, z = 0
  std::vector<Group> groups;    // K labels, contiguous blocks per group
  Eigen::VectorXd beta;         // K large-scale gains, linear
  ScenarioConfig config;

  int devices() const { return static_cast<int>(positions.size()); }
  std::array<int, 3> counts() const;
};

struct ActivityVector {
  std::vector<std::uint8_t> b;  // binary activity indicators
  Eigen::VectorXd a;            // b_k * sqrt(p_k * beta_k)
};

ScenarioRealization build_scenario(const ScenarioConfig& config);
ActivityVector sample_activity(const ScenarioRealization& scenario, Rng& rng);

}  // namespace irsdet

#include "irsdet/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "irsdet/errors.hpp"

namespace irsdet {

using nlohmann::json;

void ScenarioConfig::validate() const {
  if (antennas < 1 || irs_elements < 1 || devices < 1 || signature_length < 1)
    throw ConfigError("antennas, irs_elements, devices and signature_length must all be >= 1");
  const double sum = group_proportions[0] + group_proportions[1] + group_proportions[2];
  if (std::abs(sum - 1.0) > 1e-12)
    throw ConfigError("group proportions must sum to 1");
  for (double rho : group_proportions)
    if (rho < 0.0) throw ConfigError("group proportions must be nonnegative");
  if (kappa_device_bs < 0.0 || kappa_device_irs < 0.0 || kappa_irs_bs < 0.0)
    throw ConfigError("Rician factors must be nonnegative");
  if (noise_power <= 0.0) throw ConfigError("noise power must be positive");
  if (tx_power <= 0.0) throw ConfigError("transmit power must be positive");
  if (activity_prob < 0.0 || activity_prob > 1.0)
    throw ConfigError("activity probability must lie in [0, 1]");
  if (geometry.irs_area_radius <= 0.0 || geometry.direct_area_radius <= 0.0)
    throw ConfigError("placement radii must be positive");
}

namespace {

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("positions must be 3-element arrays");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

}  // namespace

ScenarioConfig ScenarioConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ScenarioConfig cfg;
  try {
    if (j.contains("antennas")) cfg.antennas = j["antennas"].get<int>();
    if (j.contains("irs_elements")) cfg.irs_elements = j["irs_elements"].get<int>();
    if (j.contains("devices")) cfg.devices = j["devices"].get<int>();
    if (j.contains("signature_length")) cfg.signature_length = j["signature_length"].get<int>();
    if (j.contains("group_proportions")) {
      const auto& p = j["group_proportions"];
      if (!p.is_array() || p.size() != 3) throw ConfigError("group_proportions must have 3 entries");
      for (int i = 0; i < 3; ++i) cfg.group_proportions[i] = p[i].get<double>();
    }
    if (j.contains("rician_db")) {
      const auto& r = j["rician_db"];
      if (r.contains("device_bs")) cfg.kappa_device_bs = db_to_linear(r["device_bs"].get<double>());
      if (r.contains("device_irs")) cfg.kappa_device_irs = db_to_linear(r["device_irs"].get<double>());
      if (r.contains("irs_bs")) cfg.kappa_irs_bs = db_to_linear(r["irs_bs"].get<double>());
    }
    if (j.contains("noise_dbm")) cfg.noise_power = dbm_to_watts(j["noise_dbm"].get<double>());
    if (j.contains("tx_power_dbm")) cfg.tx_power = dbm_to_watts(j["tx_power_dbm"].get<double>());
    if (j.contains("activity_prob")) cfg.activity_prob = j["activity_prob"].get<double>();
    if (j.contains("geometry")) {
      const auto& g = j["geometry"];
      if (g.contains("bs")) cfg.geometry.bs = vec3_from_json(g["bs"]);
      if (g.contains("irs")) cfg.geometry.irs = vec3_from_json(g["irs"]);
      if (g.contains("k1_center")) cfg.geometry.irs_area_center = vec3_from_json(g["k1_center"]);
      if (g.contains("k1_radius")) cfg.geometry.irs_area_radius = g["k1_radius"].get<double>();
      if (g.contains("k23_center")) cfg.geometry.direct_area_center = vec3_from_json(g["k23_center"]);
      if (g.contains("k23_radius")) cfg.geometry.direct_area_radius = g["k23_radius"].get<double>();
    }
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig ScenarioConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string ScenarioConfig::to_json_text() const {
  json j;
  j["antennas"] = antennas;
  j["irs_elements"] = irs_elements;
  j["devices"] = devices;
  j["signature_length"] = signature_length;
  j["group_proportions"] = group_proportions;
  j["rician_db"] = {{"device_bs", 10.0 * std::log10(kappa_device_bs)},
                    {"device_irs", 10.0 * std::log10(kappa_device_irs)},
                    {"irs_bs", 10.0 * std::log10(kappa_irs_bs)}};
  j["noise_dbm"] = 10.0 * std::log10(noise_power) + 30.0;
  j["tx_power_dbm"] = 10.0 * std::log10(tx_power) + 30.0;
  j["activity_prob"] = activity_prob;
  j["geometry"] = {{"bs", vec3_to_json(geometry.bs)},
                   {"irs", vec3_to_json(geometry.irs)},
                   {"k1_center", vec3_to_json(geometry.irs_area_center)},
                   {"k1_radius", geometry.irs_area_radius},
                   {"k23_center", vec3_to_json(geometry.direct_area_center)},
                   {"k23_radius", geometry.direct_area_radius}};
  j["seed"] = seed;
  return j.dump(2);
}

double pathloss_gain(double dist_product) {
  if (!(dist_product > 0.0)) throw std::domain_error("pathloss distance must be positive");
  const double db = -60.0 - 22.0 * std::log10(dist_product);
  return std::pow(10.0, db / 10.0);
}

double pathloss_gain(double dist_device_hop, double dist_hop_bs) {
  if (!(dist_device_hop > 0.0) || !(dist_hop_bs > 0.0))
    throw std::domain_error("pathloss distances must be positive");
  return pathloss_gain(dist_device_hop * dist_hop_bs);
}

std::array<int, 3> group_counts(const std::array<double, 3>& proportions, int total) {
  std::array<int, 3> counts{};
  std::array<double, 3> remainders{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double raw = proportions[i] * total;
    counts[i] = static_cast<int>(std::floor(raw));
    remainders[i] = raw - counts[i];
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
    return a < b;
  });
  for (int i = 0; i < total - assigned; ++i) counts[order[i % 3]] += 1;
  for (int c : counts)
    if (c < 0) throw ConfigError("group apportionment produced a negative count");
  return counts;
}

std::array<int, 3> ScenarioRealization::counts() const {
  std::array<int, 3> c{};
  for (Group g : groups) c[static_cast<int>(g)] += 1;
  return c;
}

namespace {

// Uniform draw inside a disc (full or left half) around `center`, z = 0.
Vec3 sample_disc(const Vec3& center, double radius, bool left_half, Rng& rng) {
  const double r = radius * std::sqrt(rng.uniform());
  const double phi = left_half ? rng.uniform(M_PI / 2.0, 3.0 * M_PI / 2.0)
                               : rng.uniform(0.0, 2.0 * M_PI);
  return {center.x + r * std::cos(phi), center.y + r * std::sin(phi), 0.0};
}

}  // namespace

ScenarioRealization build_scenario(const ScenarioConfig& config) {
  config.validate();
  const int k_total = config.devices;
  const auto counts = group_counts(config.group_proportions, k_total);

  ScenarioRealization sc;
  sc.config = config;
  sc.positions.reserve(k_total);
  sc.groups.reserve(k_total);
  sc.beta.resize(k_total);

  Rng rng = Rng::derive(config.seed, {stream::kScenario});
  const double dist_irs_bs = distance(config.geometry.irs, config.geometry.bs);

  int k = 0;
  for (int gi = 0; gi < 3; ++gi) {
    for (int i = 0; i < counts[gi]; ++i, ++k) {
      const Group group = static_cast<Group>(gi);
      const bool cascaded = group == Group::kIrs;
      const Vec3 pos = cascaded
                           ? sample_disc(config.geometry.irs_area_center,
                                         config.geometry.irs_area_radius, false, rng)
                           : sample_disc(config.geometry.direct_area_center,
                                         config.geometry.direct_area_radius, true, rng);
      sc.positions.push_back(pos);
      sc.groups.push_back(group);
      sc.beta[k] = cascaded
                       ? pathloss_gain(distance(pos, config.geometry.irs), dist_irs_bs)
                       : pathloss_gain(distance(pos, config.geometry.bs));
    }
  }
  return sc;
}

ActivityVector sample_activity(const ScenarioRealization& scenario, Rng& rng) {
  const int k_total = scenario.devices();
  ActivityVector act;
  act.b.resize(k_total);
  act.a.resize(k_total);
  for (int k = 0; k < k_total; ++k) {
    const bool on = rng.uniform() < scenario.config.activity_prob;
    act.b[k] = on ? 1 : 0;
    act.a[k] = on ? std::sqrt(scenario.config.tx_power * scenario.beta[k]) : 0.0;
  }
  return act;
}

}  // namespace irsdet

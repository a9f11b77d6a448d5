#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "irsdet/channel.hpp"
#include "irsdet/rng.hpp"
#include "irsdet/scenario.hpp"

namespace irsdet {

// Signature matrix S (L x K), entries i.i.d. unit-variance complex Gaussian.
Eigen::MatrixXcd generate_signatures(int devices, int length, Rng& rng);

// Received frame per the superposition model: cascaded devices contribute
// a_k * s_k * (h_k^H Theta G), direct devices a_k * s_k * f_k^H, plus
// CN(0, noise_power) entries.
Eigen::MatrixXcd synthesize_received(const ScenarioRealization& scenario,
                                     const ChannelRealization& channels,
                                     const ActivityVector& activity,
                                     const Eigen::MatrixXcd& signatures, Rng& rng);

struct SignalBatch {
  Eigen::MatrixXcd S;  // L x K
  Eigen::MatrixXcd Y;  // L x M
  double noise_power = 0.0;
};

// One dataset record: a received frame plus ground truth and the seed that
// rebuilds its scenario (positions, grouping, gains) from the config.
struct SampleRecord {
  SignalBatch batch;
  bool has_labels = false;
  Eigen::VectorXd a_true;
  std::vector<std::uint8_t> b_true;
  std::vector<Group> groups;
  std::uint64_t scenario_seed = 0;
  // proportions drawn from the record seed's mixture stream rather than the config
  bool seeded_mixture = false;
  Eigen::VectorXcd theta;  // IRS phases used for this record (empty = none stored)
};

// Binary container: 8 little-endian u64 header fields
// (magic, L, M, K, seed, dtype, flags, reserved) followed by row-major
// interleaved re/im 64-bit floats. Records concatenate into dataset files.
void write_record(std::ostream& out, const SampleRecord& record);
bool read_record(std::istream& in, SampleRecord& record);  // false on clean EOF

void write_dataset(const std::string& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_dataset(const std::string& path);

}  // namespace irsdet

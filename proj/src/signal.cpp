#include "irsdet/signal.hpp"

#include <fstream>

#include "irsdet/errors.hpp"

namespace irsdet {

Eigen::MatrixXcd generate_signatures(int devices, int length, Rng& rng) {
  if (devices < 1 || length < 1) throw ConfigError("signature dimensions must be >= 1");
  Eigen::MatrixXcd s(length, devices);
  for (int k = 0; k < devices; ++k)
    for (int l = 0; l < length; ++l) s(l, k) = rng.cgaussian();
  return s;
}

Eigen::MatrixXcd synthesize_received(const ScenarioRealization& scenario,
                                     const ChannelRealization& channels,
                                     const ActivityVector& activity,
                                     const Eigen::MatrixXcd& signatures, Rng& rng) {
  const auto& cfg = scenario.config;
  const int k_count = scenario.devices();
  const int m_count = cfg.antennas;
  const int length = cfg.signature_length;

  if (signatures.rows() != length || signatures.cols() != k_count)
    throw DataError("signature matrix has the wrong shape");
  if (activity.a.size() != k_count) throw DataError("activity vector has the wrong length");
  if (channels.f.rows() != m_count || channels.f.cols() != k_count ||
      channels.g.cols() != m_count || channels.theta.size() != cfg.irs_elements)
    throw DataError("channel realization does not match the scenario dimensions");

  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(length, m_count);
  const auto theta_diag = channels.theta.asDiagonal();
  for (int k = 0; k < k_count; ++k) {
    if (activity.a[k] == 0.0) continue;
    if (scenario.groups[k] == Group::kIrs) {
      // row vector h_k^H * Theta * G, one entry per antenna
      Eigen::RowVectorXcd cascade = channels.h.col(k).adjoint() * theta_diag * channels.g;
      y.noalias() += activity.a[k] * signatures.col(k) * cascade;
    } else {
      y.noalias() += activity.a[k] * signatures.col(k) * channels.f.col(k).adjoint();
    }
  }

  const double noise_std = std::sqrt(cfg.noise_power);
  for (int m = 0; m < m_count; ++m)
    for (int l = 0; l < length; ++l) y(l, m) += noise_std * rng.cgaussian();
  return y;
}

namespace {

constexpr std::uint64_t kMagic = 0x3130425344535249ULL;  // "IRSDSB01"
constexpr std::uint64_t kDtypeComplexF64 = 1;
constexpr std::uint64_t kFlagLabels = 1;
constexpr std::uint64_t kFlagSeededMixture = 2;
constexpr std::uint64_t kFlagTheta = 4;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double v) {
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(&v), 8);
}

double get_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXcd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      put_f64(out, m(r, c).real());
      put_f64(out, m(r, c).imag());
    }
}

Eigen::MatrixXcd get_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double re = get_f64(in);
      const double im = get_f64(in);
      m(r, c) = {re, im};
    }
  return m;
}

}  // namespace

void write_record(std::ostream& out, const SampleRecord& record) {
  const auto length = record.batch.S.rows();
  const auto devices = record.batch.S.cols();
  const auto antennas = record.batch.Y.cols();
  if (record.batch.Y.rows() != length) throw DataError("record S and Y disagree on L");

  std::uint64_t flags = 0;
  if (record.has_labels) flags |= kFlagLabels;
  if (record.seeded_mixture) flags |= kFlagSeededMixture;
  if (record.theta.size() > 0) flags |= kFlagTheta;

  put_u64(out, kMagic);
  put_u64(out, static_cast<std::uint64_t>(length));
  put_u64(out, static_cast<std::uint64_t>(antennas));
  put_u64(out, static_cast<std::uint64_t>(devices));
  put_u64(out, record.scenario_seed);
  put_u64(out, kDtypeComplexF64);
  put_u64(out, flags);
  put_u64(out, 0);  // reserved

  put_f64(out, record.batch.noise_power);
  put_matrix(out, record.batch.S);
  put_matrix(out, record.batch.Y);
  if (record.has_labels) {
    if (record.a_true.size() != devices || record.b_true.size() != static_cast<size_t>(devices) ||
        record.groups.size() != static_cast<size_t>(devices))
      throw DataError("record labels have the wrong length");
    for (Eigen::Index k = 0; k < devices; ++k) put_f64(out, record.a_true[k]);
    for (Eigen::Index k = 0; k < devices; ++k)
      out.put(static_cast<char>(record.b_true[static_cast<size_t>(k)]));
    for (Eigen::Index k = 0; k < devices; ++k)
      out.put(static_cast<char>(record.groups[static_cast<size_t>(k)]));
  }
  if (record.theta.size() > 0) {
    put_u64(out, static_cast<std::uint64_t>(record.theta.size()));
    put_matrix(out, record.theta);
  }
  if (!out) throw DataError("write failure while emitting a dataset record");
}

bool read_record(std::istream& in, SampleRecord& record) {
  const std::uint64_t magic = get_u64(in);
  if (in.eof()) return false;
  if (!in || magic != kMagic) throw DataError("bad dataset record magic");

  const auto length = static_cast<Eigen::Index>(get_u64(in));
  const auto antennas = static_cast<Eigen::Index>(get_u64(in));
  const auto devices = static_cast<Eigen::Index>(get_u64(in));
  record.scenario_seed = get_u64(in);
  const std::uint64_t dtype = get_u64(in);
  const std::uint64_t flags = get_u64(in);
  get_u64(in);  // reserved
  if (dtype != kDtypeComplexF64) throw DataError("unsupported dataset dtype code");

  record.batch.noise_power = get_f64(in);
  record.batch.S = get_matrix(in, length, devices);
  record.batch.Y = get_matrix(in, length, antennas);
  record.seeded_mixture = (flags & kFlagSeededMixture) != 0;
  record.has_labels = (flags & kFlagLabels) != 0;
  if (record.has_labels) {
    record.a_true.resize(devices);
    record.b_true.resize(static_cast<size_t>(devices));
    record.groups.resize(static_cast<size_t>(devices));
    for (Eigen::Index k = 0; k < devices; ++k) record.a_true[k] = get_f64(in);
    for (Eigen::Index k = 0; k < devices; ++k)
      record.b_true[static_cast<size_t>(k)] = static_cast<std::uint8_t>(in.get());
    for (Eigen::Index k = 0; k < devices; ++k)
      record.groups[static_cast<size_t>(k)] = static_cast<Group>(in.get());
  }
  if (flags & kFlagTheta) {
    const auto n = static_cast<Eigen::Index>(get_u64(in));
    record.theta = get_matrix(in, n, 1);
  } else {
    record.theta.resize(0);
  }
  if (!in) throw DataError("truncated dataset record");
  return true;
}

void write_dataset(const std::string& path, const std::vector<SampleRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open dataset file for writing: " + path);
  for (const auto& r : records) write_record(out, r);
}

std::vector<SampleRecord> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::vector<SampleRecord> records;
  SampleRecord rec;
  while (read_record(in, rec)) records.push_back(rec);
  return records;
}

}  // namespace irsdet

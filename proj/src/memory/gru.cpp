// SPDX-License-Identifier: Apache-2.0

#include "streamseg/memory/gru.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "streamseg/io/kitti.hpp"

namespace streamseg::memory {

void GruWeights::check() const {
  const Eigen::Index f = feature_dim();
  auto bad = [f](const Eigen::MatrixXd& m) {
    return m.rows() != f || m.cols() != 2 * f;
  };
  if (f <= 0 || bad(w_update) || bad(w_reset) || bad(w_candidate) ||
      b_reset.size() != f || b_candidate.size() != f) {
    throw std::invalid_argument("GruWeights: inconsistent dimensions");
  }
}

GruWeights GruWeights::defaults(const backbone::FeatureDims& dims) {
  const Eigen::Index f = dims.total();
  GruWeights w;
  // Update gate reads total class evidence; sigma(logit(0.9)) at unit margin.
  const double gain = 2.1972245773362196;
  w.w_update = Eigen::MatrixXd::Zero(f, 2 * f);
  for (Eigen::Index r = 0; r < f; ++r) {
    for (Eigen::Index c = 0; c < dims.n_classes; ++c) w.w_update(r, c) = gain;
  }
  w.b_update = Eigen::VectorXd::Zero(f);
  // Reset gate mostly open: history passes into the candidate.
  w.w_reset = Eigen::MatrixXd::Zero(f, 2 * f);
  w.b_reset = Eigen::VectorXd::Constant(f, gain);
  // Candidate: fresh feature plus damped history.
  w.w_candidate = Eigen::MatrixXd::Zero(f, 2 * f);
  w.w_candidate.leftCols(f) = Eigen::MatrixXd::Identity(f, f);
  w.w_candidate.rightCols(f) = 0.5 * Eigen::MatrixXd::Identity(f, f);
  w.b_candidate = Eigen::VectorXd::Zero(f);
  return w;
}

namespace {
constexpr char kMagic[4] = {'G', 'R', 'U', 'W'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_gru_weights(const std::string& path, const GruWeights& w) {
  w.check();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  const auto f = static_cast<uint32_t>(w.feature_dim());
  out.write(reinterpret_cast<const char*>(&f), 4);
  auto put_matrix = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
    }
  };
  put_matrix(w.w_update);
  put_matrix(w.b_update);
  put_matrix(w.w_reset);
  put_matrix(w.b_reset);
  put_matrix(w.w_candidate);
  put_matrix(w.b_candidate);
}

GruWeights load_gru_weights(const std::string& path) {
  const auto bytes = io::read_file(path);
  std::size_t at = 0;
  auto need = [&](std::size_t n, const char* field) {
    if (at + n > bytes.size()) {
      throw io::ParseError(field, at, "gru weights: truncated " + std::string(field));
    }
  };
  need(12, "header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw io::ParseError("magic", 0, "gru weights: bad magic");
  }
  uint32_t version, f;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&f, bytes.data() + 8, 4);
  if (version != kVersion) {
    throw io::ParseError("version", 4, "gru weights: unsupported version");
  }
  at = 12;
  auto get_matrix = [&](Eigen::Index rows, Eigen::Index cols, const char* field) {
    Eigen::MatrixXd m(rows, cols);
    need(static_cast<std::size_t>(rows * cols) * 8, field);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        double v;
        std::memcpy(&v, bytes.data() + at, 8);
        at += 8;
        m(r, c) = v;
      }
    }
    return m;
  };
  GruWeights w;
  w.w_update = get_matrix(f, 2 * f, "w_update");
  w.b_update = get_matrix(f, 1, "b_update");
  w.w_reset = get_matrix(f, 2 * f, "w_reset");
  w.b_reset = get_matrix(f, 1, "b_reset");
  w.w_candidate = get_matrix(f, 2 * f, "w_candidate");
  w.b_candidate = get_matrix(f, 1, "b_candidate");
  if (at != bytes.size()) {
    throw io::ParseError("trailer", at, "gru weights: trailing bytes");
  }
  w.check();
  return w;
}

}  // namespace streamseg::memory

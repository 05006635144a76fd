// SPDX-License-Identifier: Apache-2.0

#include "streamseg/io/kitti.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace streamseg::io {

PointCloud read_kitti_scan(const std::vector<uint8_t>& bytes) {
  if (bytes.size() % 16 != 0) {
    throw ParseError("scan", bytes.size() - bytes.size() % 16,
                     "scan length not divisible by 16 bytes");
  }
  const std::size_t n = bytes.size() / 16;
  PointCloud pc;
  pc.points.resize(n);
  pc.intensity.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    float rec[4];
    std::memcpy(rec, bytes.data() + i * 16, 16);
    pc.points[i] = Point3(rec[0], rec[1], rec[2]);
    pc.intensity[i] = rec[3];
  }
  return pc;
}

std::vector<uint8_t> write_kitti_scan(const PointCloud& cloud) {
  std::vector<uint8_t> bytes(cloud.size() * 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const float rec[4] = {static_cast<float>(cloud.points[i].x()),
                          static_cast<float>(cloud.points[i].y()),
                          static_cast<float>(cloud.points[i].z()),
                          i < cloud.intensity.size() ? cloud.intensity[i] : 0.0f};
    std::memcpy(bytes.data() + i * 16, rec, 16);
  }
  return bytes;
}

KittiLabels read_kitti_label(const std::vector<uint8_t>& bytes) {
  if (bytes.size() % 4 != 0) {
    throw ParseError("label", bytes.size() - bytes.size() % 4,
                     "label length not divisible by 4 bytes");
  }
  const std::size_t n = bytes.size() / 4;
  KittiLabels out;
  out.semantic_id.resize(n);
  out.instance_id.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    uint32_t word;
    std::memcpy(&word, bytes.data() + i * 4, 4);
    out.semantic_id[i] = word & 0xFFFFu;
    out.instance_id[i] = word >> 16;
  }
  return out;
}

std::vector<uint8_t> write_kitti_label(const KittiLabels& labels) {
  if (labels.semantic_id.size() != labels.instance_id.size()) {
    throw std::invalid_argument("write_kitti_label: array length mismatch");
  }
  std::vector<uint8_t> bytes(labels.semantic_id.size() * 4);
  for (std::size_t i = 0; i < labels.semantic_id.size(); ++i) {
    const uint32_t word =
        (labels.semantic_id[i] & 0xFFFFu) | (labels.instance_id[i] << 16);
    std::memcpy(bytes.data() + i * 4, &word, 4);
  }
  return bytes;
}

std::vector<RigidTransform> read_pose_file(const std::string& text) {
  std::vector<RigidTransform> poses;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    double m[12];
    for (int i = 0; i < 12; ++i) {
      if (!(ls >> m[i])) {
        throw ParseError("pose", line_no, "pose line needs 12 values");
      }
    }
    RigidTransform t;
    t.rotation << m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10];
    t.translation = Vec3(m[3], m[7], m[11]);
    poses.push_back(t);
  }
  return poses;
}

std::string write_pose_file(const std::vector<RigidTransform>& poses) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& t : poses) {
    const Mat3& r = t.rotation;
    out << r(0, 0) << ' ' << r(0, 1) << ' ' << r(0, 2) << ' ' << t.translation.x()
        << ' ' << r(1, 0) << ' ' << r(1, 1) << ' ' << r(1, 2) << ' '
        << t.translation.y() << ' ' << r(2, 0) << ' ' << r(2, 1) << ' ' << r(2, 2)
        << ' ' << t.translation.z() << '\n';
  }
  return out.str();
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << text;
}

}  // namespace streamseg::io

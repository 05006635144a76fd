// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streamseg/core/point_cloud.hpp"
#include "streamseg/core/se3.hpp"

namespace streamseg::io {

/// Structured parse failure; carries the byte offset (or line) that broke.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string field, std::size_t offset, const std::string& what)
      : std::runtime_error(what), field_(std::move(field)), offset_(offset) {}

  const std::string& field() const { return field_; }
  std::size_t offset() const { return offset_; }

 private:
  std::string field_;
  std::size_t offset_;
};

/// SemanticKITTI scan: packed little-endian float32 records (x, y, z, intensity).
PointCloud read_kitti_scan(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> write_kitti_scan(const PointCloud& cloud);

struct KittiLabels {
  std::vector<uint32_t> semantic_id;  // low 16 bits of each word
  std::vector<uint32_t> instance_id;  // high 16 bits
};

/// SemanticKITTI label file: one little-endian uint32 per point.
KittiLabels read_kitti_label(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> write_kitti_label(const KittiLabels& labels);

/// Pose file: one 3x4 row-major world-from-ego matrix per line.
std::vector<RigidTransform> read_pose_file(const std::string& text);
std::string write_pose_file(const std::vector<RigidTransform>& poses);

/// Side table mapping (semantic id, moving flag) to an extended class id,
/// mirroring the moving-object class extension of outdoor label sets.
struct MovingClassTable {
  struct Entry {
    uint32_t semantic_id = 0;
    uint32_t moving_class_id = 0;
  };
  std::vector<Entry> entries;

  uint32_t extended_id(uint32_t semantic, bool moving) const {
    if (!moving) return semantic;
    for (const auto& e : entries) {
      if (e.semantic_id == semantic) return e.moving_class_id;
    }
    return semantic;
  }
};

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace streamseg::io

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "streamseg/core/se3.hpp"

namespace streamseg {

/// Points with optional per-point attribute columns. Attribute vectors are
/// either empty or exactly as long as `points`.
struct PointCloud {
  std::vector<Point3> points;
  std::vector<float> intensity;
  std::vector<uint32_t> semantic_id;
  std::vector<uint32_t> instance_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void check_attributes() const {
    auto bad = [&](std::size_t n) { return n != 0 && n != points.size(); };
    if (bad(intensity.size()) || bad(semantic_id.size()) || bad(instance_id.size())) {
      throw std::invalid_argument("PointCloud: attribute length != point count");
    }
  }

  PointCloud transformed(const RigidTransform& t) const {
    PointCloud out = *this;
    for (auto& p : out.points) p = t.apply(p);
    return out;
  }
};

}  // namespace streamseg

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streamseg/io/kitti.hpp"
#include "streamseg/sim/scene.hpp"

namespace streamseg::io {

/// Native sequence container: 4-byte magic "SSEQ", u32 version, header
/// (fps, class table, moving-class ids, bodies), then one length-prefixed
/// block per frame (points, labels, moving mask, pose, flow).
/// write(read(bytes)) is byte-identical.
std::vector<uint8_t> write_native(const sim::Sequence& seq,
                                  const std::vector<uint32_t>& moving_class_ids = {});

struct NativeSequence {
  sim::Sequence sequence;
  std::vector<uint32_t> moving_class_ids;
};

NativeSequence read_native(const std::vector<uint8_t>& bytes);

void save_native(const std::string& path, const sim::Sequence& seq,
                 const std::vector<uint32_t>& moving_class_ids = {});
NativeSequence load_native(const std::string& path);

}  // namespace streamseg::io

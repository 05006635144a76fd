// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "streamseg/sim/scene.hpp"

namespace streamseg::metrics {

/// Per-class panoptic statistics accumulated over frames.
struct ClassStats {
  double iou_sum = 0.0;
  uint32_t tp = 0;
  uint32_t fp = 0;
  uint32_t fn = 0;

  bool active() const { return tp + fp + fn > 0; }
  double denom() const { return tp + 0.5 * fp + 0.5 * fn; }
  double pq() const { return active() ? iou_sum / denom() : 0.0; }
  double rq() const { return active() ? tp / denom() : 0.0; }
  double sq() const { return tp > 0 ? iou_sum / tp : 0.0; }
};

struct PanopticResult {
  double pq = 0.0;
  double rq = 0.0;
  double sq = 0.0;
  std::map<uint32_t, ClassStats> per_class;
};

struct FrameLabels {
  const std::vector<uint32_t>& semantic_id;
  const std::vector<uint32_t>& instance_id;
};

/// Segment matching per frame per class at IoU > 0.5 (unique by construction),
/// accumulated over added frames. Class id 0 is excluded. The optional mask
/// restricts evaluation to the selected points.
class PanopticAccumulator {
 public:
  void add_frame(const FrameLabels& pred, const FrameLabels& gt,
                 const std::vector<uint8_t>* mask = nullptr);
  PanopticResult result() const;

 private:
  std::map<uint32_t, ClassStats> per_class_;
};

/// Frame-level panoptic quality (single call of the accumulator).
PanopticResult panoptic_quality(const FrameLabels& pred, const FrameLabels& gt);

struct LstqResult {
  double lstq = 0.0;
  double s_assoc = 0.0;
  double s_cls = 0.0;
};

/// 4D tube association + semantic IoU over a frame sequence. Tubes are
/// non-zero instance ids across frames; class 0 is excluded from S_cls.
class LstqAccumulator {
 public:
  void add_frame(const FrameLabels& pred, const FrameLabels& gt,
                 const std::vector<uint8_t>* mask = nullptr);
  LstqResult result() const;

 private:
  // 4D overlap counts keyed by (gt tube, pred tube).
  std::map<std::pair<uint32_t, uint32_t>, uint64_t> overlap_;
  std::map<uint32_t, uint64_t> gt_tube_size_;
  std::map<uint32_t, uint64_t> pred_tube_size_;
  std::map<uint32_t, ClassStats> semantic_;  // tp/fp/fn as point counts per class
};

LstqResult lstq(const std::vector<FrameLabels>& pred, const std::vector<FrameLabels>& gt);

/// Everything the experiment tables report.
struct MetricReport {
  double s_lstq = 0.0;
  double s_assoc = 0.0;
  double s_cls = 0.0;
  double s_pq = 0.0;
  double s_rq = 0.0;
  double s_sq = 0.0;
  double s_pq_dynamic = 0.0;
  double s_pq_static = 0.0;
  double s_pq_thing = 0.0;
  double s_pq_stuff = 0.0;
  double s_lstq_dynamic = 0.0;
  double s_lstq_static = 0.0;
  std::map<uint32_t, ClassStats> per_class;

  static const std::vector<std::string>& csv_columns();
  std::vector<double> csv_values() const;
};

}  // namespace streamseg::metrics

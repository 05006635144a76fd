// SPDX-License-Identifier: Apache-2.0

#include "streamseg/metrics/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace streamseg::metrics {

namespace {

struct SegKey {
  uint32_t cls;
  uint32_t inst;
  bool operator==(const SegKey& o) const { return cls == o.cls && inst == o.inst; }
  bool operator<(const SegKey& o) const {
    return cls != o.cls ? cls < o.cls : inst < o.inst;
  }
};

double class_average(const std::map<uint32_t, ClassStats>& per_class,
                     double (ClassStats::*metric)() const) {
  double sum = 0.0;
  uint32_t n = 0;
  for (const auto& [cls, stats] : per_class) {
    if (!stats.active()) continue;
    sum += (stats.*metric)();
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

}  // namespace

void PanopticAccumulator::add_frame(const FrameLabels& pred, const FrameLabels& gt,
                                    const std::vector<uint8_t>* mask) {
  const std::size_t n = gt.semantic_id.size();
  if (pred.semantic_id.size() != n || pred.instance_id.size() != n ||
      gt.instance_id.size() != n || (mask != nullptr && mask->size() != n)) {
    throw std::invalid_argument("PanopticAccumulator: length mismatch");
  }

  std::map<SegKey, uint32_t> gt_size, pred_size;
  std::map<std::pair<SegKey, SegKey>, uint32_t> inter;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask != nullptr && (*mask)[i] == 0) continue;
    const SegKey g{gt.semantic_id[i], gt.instance_id[i]};
    const SegKey p{pred.semantic_id[i], pred.instance_id[i]};
    if (g.cls != 0) ++gt_size[g];
    if (p.cls != 0) ++pred_size[p];
    if (g.cls != 0 && p.cls != 0 && g.cls == p.cls) ++inter[{g, p}];
  }

  std::map<SegKey, bool> gt_matched, pred_matched;
  for (const auto& [pair, overlap] : inter) {
    const auto& [g, p] = pair;
    const double uni = gt_size[g] + pred_size[p] - overlap;
    const double iou = overlap / uni;
    if (iou > 0.5) {
      ClassStats& s = per_class_[g.cls];
      s.iou_sum += iou;
      s.tp += 1;
      gt_matched[g] = true;
      pred_matched[p] = true;
    }
  }
  for (const auto& [g, sz] : gt_size) {
    if (!gt_matched.count(g)) per_class_[g.cls].fn += 1;
  }
  for (const auto& [p, sz] : pred_size) {
    if (!pred_matched.count(p)) per_class_[p.cls].fp += 1;
  }
}

PanopticResult PanopticAccumulator::result() const {
  PanopticResult out;
  out.per_class = per_class_;
  out.pq = class_average(per_class_, &ClassStats::pq);
  out.rq = class_average(per_class_, &ClassStats::rq);
  out.sq = class_average(per_class_, &ClassStats::sq);
  return out;
}

PanopticResult panoptic_quality(const FrameLabels& pred, const FrameLabels& gt) {
  PanopticAccumulator acc;
  acc.add_frame(pred, gt);
  return acc.result();
}

void LstqAccumulator::add_frame(const FrameLabels& pred, const FrameLabels& gt,
                                const std::vector<uint8_t>* mask) {
  const std::size_t n = gt.semantic_id.size();
  if (pred.semantic_id.size() != n || pred.instance_id.size() != n ||
      gt.instance_id.size() != n || (mask != nullptr && mask->size() != n)) {
    throw std::invalid_argument("LstqAccumulator: length mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mask != nullptr && (*mask)[i] == 0) continue;
    const uint32_t gc = gt.semantic_id[i], pc = pred.semantic_id[i];
    const uint32_t gi = gt.instance_id[i], pi = pred.instance_id[i];
    if (gi != 0) ++gt_tube_size_[gi];
    if (pi != 0) ++pred_tube_size_[pi];
    if (gi != 0 && pi != 0) ++overlap_[{gi, pi}];
    // Semantic IoU bookkeeping: tp/fp/fn are point counts here.
    if (gc != 0 && gc == pc) {
      ++semantic_[gc].tp;
    } else {
      if (gc != 0) ++semantic_[gc].fn;
      if (pc != 0) ++semantic_[pc].fp;
    }
  }
}

LstqResult LstqAccumulator::result() const {
  LstqResult out;
  // S_assoc: per GT tube, overlap-weighted 4D IoU over intersecting
  // predicted tubes, normalized by tube size; averaged over GT tubes.
  if (!gt_tube_size_.empty()) {
    double total = 0.0;
    std::map<uint32_t, double> per_tube;
    for (const auto& [pair, cnt] : overlap_) {
      const auto& [gi, pi] = pair;
      const double uni = static_cast<double>(gt_tube_size_.at(gi)) +
                         static_cast<double>(pred_tube_size_.at(pi)) -
                         static_cast<double>(cnt);
      per_tube[gi] += static_cast<double>(cnt) * (static_cast<double>(cnt) / uni);
    }
    for (const auto& [gi, sz] : gt_tube_size_) {
      auto it = per_tube.find(gi);
      if (it != per_tube.end()) total += it->second / static_cast<double>(sz);
    }
    out.s_assoc = total / static_cast<double>(gt_tube_size_.size());
  }
  // S_cls: mean per-class point IoU over all frames.
  double iou_sum = 0.0;
  uint32_t n_classes = 0;
  for (const auto& [cls, s] : semantic_) {
    if (!s.active()) continue;
    iou_sum += static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp + s.fn);
    ++n_classes;
  }
  out.s_cls = n_classes == 0 ? 0.0 : iou_sum / n_classes;
  out.lstq = std::sqrt(out.s_assoc * out.s_cls);
  return out;
}

LstqResult lstq(const std::vector<FrameLabels>& pred, const std::vector<FrameLabels>& gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("lstq: frame count mismatch");
  }
  if (gt.empty()) throw std::invalid_argument("lstq: empty ground truth");
  LstqAccumulator acc;
  for (std::size_t i = 0; i < gt.size(); ++i) acc.add_frame(pred[i], gt[i]);
  return acc.result();
}

const std::vector<std::string>& MetricReport::csv_columns() {
  static const std::vector<std::string> cols = {
      "sLSTQ", "S_assoc", "S_cls",  "sPQ",    "sRQ",     "sSQ",
      "sPQ_d", "sPQ_s",   "sPQ_th", "sPQ_st", "sLSTQ_d", "sLSTQ_s"};
  return cols;
}

std::vector<double> MetricReport::csv_values() const {
  return {s_lstq, s_assoc, s_cls,      s_pq,       s_rq,           s_sq,
          s_pq_dynamic, s_pq_static, s_pq_thing, s_pq_stuff, s_lstq_dynamic, s_lstq_static};
}

}  // namespace streamseg::metrics

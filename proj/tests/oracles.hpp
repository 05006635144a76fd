// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference implementations for the metric suite. Everything here
// materializes explicit sets and scans them quadratically; kept deliberately
// independent of the accumulator-based implementations under test.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

namespace oracle {

struct Frame {
  std::vector<uint32_t> semantic;
  std::vector<uint32_t> instance;
};

struct PqOracle {
  double pq = 0.0;
  double rq = 0.0;
  double sq = 0.0;
  std::map<uint32_t, double> per_class_pq;
};

inline PqOracle panoptic_reference(const std::vector<Frame>& pred,
                                   const std::vector<Frame>& gt) {
  struct Stats {
    double iou = 0.0;
    int tp = 0, fp = 0, fn = 0;
  };
  std::map<uint32_t, Stats> stats;

  for (std::size_t f = 0; f < gt.size(); ++f) {
    using Seg = std::pair<uint32_t, uint32_t>;  // (class, instance)
    std::map<Seg, std::set<std::size_t>> gt_segments, pred_segments;
    for (std::size_t i = 0; i < gt[f].semantic.size(); ++i) {
      if (gt[f].semantic[i] != 0) {
        gt_segments[{gt[f].semantic[i], gt[f].instance[i]}].insert(i);
      }
      if (pred[f].semantic[i] != 0) {
        pred_segments[{pred[f].semantic[i], pred[f].instance[i]}].insert(i);
      }
    }
    std::set<Seg> matched_gt, matched_pred;
    for (const auto& [gseg, gpoints] : gt_segments) {
      for (const auto& [pseg, ppoints] : pred_segments) {
        if (gseg.first != pseg.first) continue;
        std::size_t inter = 0;
        for (std::size_t i : gpoints) inter += ppoints.count(i);
        const double uni = static_cast<double>(gpoints.size() + ppoints.size() - inter);
        const double iou = static_cast<double>(inter) / uni;
        if (iou > 0.5) {
          stats[gseg.first].iou += iou;
          stats[gseg.first].tp += 1;
          matched_gt.insert(gseg);
          matched_pred.insert(pseg);
        }
      }
    }
    for (const auto& [gseg, pts] : gt_segments) {
      if (!matched_gt.count(gseg)) stats[gseg.first].fn += 1;
    }
    for (const auto& [pseg, pts] : pred_segments) {
      if (!matched_pred.count(pseg)) stats[pseg.first].fp += 1;
    }
  }

  PqOracle out;
  int n = 0;
  for (const auto& [cls, s] : stats) {
    const double denom = s.tp + 0.5 * s.fp + 0.5 * s.fn;
    if (denom == 0.0) continue;
    const double pq = s.iou / denom;
    out.per_class_pq[cls] = pq;
    out.pq += pq;
    out.rq += s.tp / denom;
    out.sq += s.tp > 0 ? s.iou / s.tp : 0.0;
    ++n;
  }
  if (n > 0) {
    out.pq /= n;
    out.rq /= n;
    out.sq /= n;
  }
  return out;
}

struct LstqOracle {
  double lstq = 0.0;
  double s_assoc = 0.0;
  double s_cls = 0.0;
};

inline LstqOracle lstq_reference(const std::vector<Frame>& pred,
                                 const std::vector<Frame>& gt) {
  using Key = std::pair<std::size_t, std::size_t>;  // (frame, point)
  std::map<uint32_t, std::set<Key>> gt_tubes, pred_tubes;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    for (std::size_t i = 0; i < gt[f].instance.size(); ++i) {
      if (gt[f].instance[i] != 0) gt_tubes[gt[f].instance[i]].insert({f, i});
      if (pred[f].instance[i] != 0) pred_tubes[pred[f].instance[i]].insert({f, i});
    }
  }

  LstqOracle out;
  if (!gt_tubes.empty()) {
    double total = 0.0;
    for (const auto& [gid, gset] : gt_tubes) {
      double tube_sum = 0.0;
      for (const auto& [pid, pset] : pred_tubes) {
        std::size_t inter = 0;
        for (const auto& k : gset) inter += pset.count(k);
        if (inter == 0) continue;
        const double uni = static_cast<double>(gset.size() + pset.size() - inter);
        tube_sum += static_cast<double>(inter) * (static_cast<double>(inter) / uni);
      }
      total += tube_sum / static_cast<double>(gset.size());
    }
    out.s_assoc = total / static_cast<double>(gt_tubes.size());
  }

  std::set<uint32_t> classes;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    for (uint32_t c : gt[f].semantic) {
      if (c != 0) classes.insert(c);
    }
    for (uint32_t c : pred[f].semantic) {
      if (c != 0) classes.insert(c);
    }
  }
  if (!classes.empty()) {
    double iou_sum = 0.0;
    for (uint32_t c : classes) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t f = 0; f < gt.size(); ++f) {
        for (std::size_t i = 0; i < gt[f].semantic.size(); ++i) {
          const bool g = gt[f].semantic[i] == c;
          const bool p = pred[f].semantic[i] == c;
          tp += g && p;
          fn += g && !p;
          fp += !g && p;
        }
      }
      iou_sum += tp + fp + fn > 0
                     ? static_cast<double>(tp) / static_cast<double>(tp + fp + fn)
                     : 0.0;
    }
    out.s_cls = iou_sum / static_cast<double>(classes.size());
  }
  out.lstq = std::sqrt(out.s_assoc * out.s_cls);
  return out;
}

}  // namespace oracle

// SPDX-License-Identifier: Apache-2.0

#include "streamseg/metrics/streaming.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

namespace streamseg::metrics {

MetricReport streaming_evaluate(const runtime::StreamReport& report,
                                const sim::Sequence& gt) {
  if (report.records.size() != gt.frames.size()) {
    throw std::invalid_argument("streaming_evaluate: record/frame count mismatch");
  }

  PanopticAccumulator full, dynamic, statics, thing, stuff;
  LstqAccumulator lstq_full, lstq_dynamic, lstq_static;

  for (std::size_t i = 0; i < gt.frames.size(); ++i) {
    const auto& rec = report.records[i];
    const auto& frame = gt.frames[i];
    if (rec.frame_index != i) {
      throw std::invalid_argument("streaming_evaluate: missing frame record");
    }
    if (rec.semantic_id.size() != frame.size()) {
      throw std::invalid_argument("streaming_evaluate: prediction length mismatch");
    }
    const FrameLabels pred{rec.semantic_id, rec.instance_id};
    const FrameLabels truth{frame.semantic_id, frame.instance_id};

    std::vector<uint8_t> moving = frame.moving;
    std::vector<uint8_t> not_moving(moving.size());
    std::vector<uint8_t> is_thing(moving.size());
    std::vector<uint8_t> is_stuff(moving.size());
    for (std::size_t p = 0; p < moving.size(); ++p) {
      not_moving[p] = moving[p] ? 0 : 1;
      const bool th = gt.classes.is_thing(frame.semantic_id[p]);
      is_thing[p] = th ? 1 : 0;
      is_stuff[p] = th ? 0 : 1;
    }

    full.add_frame(pred, truth);
    dynamic.add_frame(pred, truth, &moving);
    statics.add_frame(pred, truth, &not_moving);
    thing.add_frame(pred, truth, &is_thing);
    stuff.add_frame(pred, truth, &is_stuff);
    lstq_full.add_frame(pred, truth);
    lstq_dynamic.add_frame(pred, truth, &moving);
    lstq_static.add_frame(pred, truth, &not_moving);
  }

  MetricReport out;
  const PanopticResult pq = full.result();
  out.s_pq = pq.pq;
  out.s_rq = pq.rq;
  out.s_sq = pq.sq;
  out.per_class = pq.per_class;
  out.s_pq_dynamic = dynamic.result().pq;
  out.s_pq_static = statics.result().pq;
  out.s_pq_thing = thing.result().pq;
  out.s_pq_stuff = stuff.result().pq;
  const LstqResult l = lstq_full.result();
  out.s_lstq = l.lstq;
  out.s_assoc = l.s_assoc;
  out.s_cls = l.s_cls;
  out.s_lstq_dynamic = lstq_dynamic.result().lstq;
  out.s_lstq_static = lstq_static.result().lstq;
  return out;
}

std::string metric_report_to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  const auto& cols = MetricReport::csv_columns();
  const auto vals = report.csv_values();
  for (std::size_t i = 0; i < cols.size(); ++i) j[cols[i]] = vals[i];
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [cls, stats] : report.per_class) {
    nlohmann::ordered_json s;
    s["PQ"] = stats.pq();
    s["RQ"] = stats.rq();
    s["SQ"] = stats.sq();
    s["TP"] = stats.tp;
    s["FP"] = stats.fp;
    s["FN"] = stats.fn;
    per_class[std::to_string(cls)] = std::move(s);
  }
  j["per_class"] = std::move(per_class);
  return j.dump(2);
}

}  // namespace streamseg::metrics

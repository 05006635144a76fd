// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "streamseg/metrics/metrics.hpp"
#include "streamseg/runtime/stream.hpp"

namespace streamseg::metrics {

/// Streaming protocol evaluation: every frame's emitted prediction (fallback
/// predictions included) against that frame's ground truth. Splits mask
/// points by the GT moving flag (dynamic/static) and by the thing/stuff
/// class table.
MetricReport streaming_evaluate(const runtime::StreamReport& report,
                                const sim::Sequence& gt);

std::string metric_report_to_json(const MetricReport& report);

}  // namespace streamseg::metrics

#pragma once

#include <string>

#include "valigen/evaluation.hpp"

namespace valigen {

struct ChartSet {
    std::string f1_bars;
    std::string confusion_heatmap;
};

/// Standalone SVG documents: per-class F1 bars on a [0,1] axis, and the
/// confusion heatmap with counts in every cell (rows = prompted class unless
/// `transpose`).
ChartSet render_charts(const EvalReport& report, bool transpose = false);

std::string render_f1_bars(const EvalReport& report);
std::string render_confusion_heatmap(const EvalReport& report, bool transpose = false);

}  // namespace valigen

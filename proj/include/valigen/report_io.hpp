#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "valigen/evaluation.hpp"

namespace valigen {

/// Canonical report.json: fixed key order, metrics with six decimals, LF
/// terminated. Only deterministic run fields are embedded (no run id or
/// timestamp), so identical evaluations give identical bytes.
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);
EvalReport load_report(const std::filesystem::path& path);

/// (k+1) x (k+1) CSV with class names in the header row and column. Rows are
/// the prompted class unless `transpose` is set.
std::string confusion_to_csv(const EvalReport& report, bool transpose = false);

struct ComparisonRow {
    std::string run;
    std::string version_tag;
    std::optional<std::int64_t> checkpoint_step;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    bool readable = true;
    std::string note;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;

    std::string to_csv() const;
    std::string to_text() const;
};

/// One row per run directory, ordered by generator version tag (V2 < V10)
/// then checkpoint step. Unreadable runs are kept, flagged, at the end.
ComparisonTable compare_runs(const std::vector<std::filesystem::path>& run_dirs);

}  // namespace valigen

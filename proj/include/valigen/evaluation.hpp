#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "valigen/catalog.hpp"
#include "valigen/image.hpp"
#include "valigen/protocol.hpp"
#include "valigen/run_manifest.hpp"
#include "valigen/validation_loop.hpp"

namespace valigen {

struct EvalConfig {
    int n_per_class = 10;
    std::uint64_t base_seed = 0;
    int width = 64;
    int height = 64;

    void validate() const;
};

/// k x k counts; rows are the prompted (true) class, columns the prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t k = 0) : k_(k), counts_(k * k, 0) {}

    std::size_t k() const noexcept { return k_; }
    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * k_ + pred); }
    std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_.at(truth * k_ + pred); }
    std::uint64_t row_sum(std::size_t truth) const;
    std::uint64_t col_sum(std::size_t pred) const;
    std::uint64_t total() const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
    ClassId class_id = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;  // row sum

    bool operator==(const ClassMetrics&) const = default;
};

struct MacroMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    bool operator==(const MacroMetrics&) const = default;
};

struct MetricsResult {
    std::vector<ClassMetrics> per_class;
    MacroMetrics macro;
};

/// Throws DataError for ids outside [0, k).
ConfusionMatrix confusion_from_pairs(std::span<const std::pair<ClassId, ClassId>> pairs, std::size_t k);

/// Precision = diagonal/column sum, recall = diagonal/row sum, 0 when the
/// denominator is 0. Macro values are unweighted means (macro F1 is the mean
/// of per-class F1, not the harmonic mean of the macro P and R).
MetricsResult metrics_from_confusion(const ConfusionMatrix& m);

struct EvalFailure {
    ClassId class_id = 0;
    int item_index = 0;
    std::string message;
};

struct EvalReport {
    std::vector<std::string> class_names;
    ConfusionMatrix confusion;
    std::vector<ClassMetrics> per_class;
    MacroMetrics macro;
    RunManifest manifest;
    int n_per_class = 0;
    int width = 0;
    int height = 0;
    std::vector<EvalFailure> failures;

    bool complete() const noexcept { return failures.empty(); }
};

/// Builds the report body (confusion + metrics) for a pair list.
EvalReport make_report(const ClassCatalog& catalog, std::span<const std::pair<ClassId, ClassId>> pairs);

/// One first-attempt observation; image kept only when requested.
struct EvalSample {
    ClassId class_id = 0;
    int item_index = 0;
    std::uint64_t seed = 0;
    std::optional<Verdict> verdict;
    std::optional<ImageBuffer> image;
    std::string error;
};

std::uint64_t eval_seed(std::uint64_t base_seed, ClassId class_id, int item_index);

/// Generates n_per_class images per class on the first attempt only,
/// classifies each and builds the confusion matrix and metrics. Worker
/// errors are recorded as failures and leave their row short.
EvalReport evaluate_first_attempt(std::span<WorkerPair> pool, const ClassCatalog& catalog, const EvalConfig& cfg,
                                  std::vector<EvalSample>* samples = nullptr, bool keep_images = false);

}  // namespace valigen

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "valigen/catalog.hpp"
#include "valigen/error.hpp"
#include "valigen/image.hpp"
#include "valigen/protocol.hpp"

namespace valigen {

struct LoopConfig {
    int retry_budget = 16;
    std::uint64_t base_seed = 0;
    double confidence_threshold = 0.0;  // 0 disables the probability floor
    int width = 64;
    int height = 64;
    bool audit_dumps = false;  // keep rejected images for the run directory

    void validate() const;
};

struct AttemptRecord {
    int attempt_index = 1;
    std::uint64_t seed = 0;
    Verdict verdict;
    bool accepted = false;
    std::optional<ImageBuffer> rejected_image;  // only with audit_dumps
};

enum class LoopOutcome { accepted, budget_exhausted, failed };
const char* to_string(LoopOutcome o);

struct ValidatedResult {
    ClassId target = 0;
    int item_index = 0;
    LoopOutcome outcome = LoopOutcome::budget_exhausted;
    std::optional<ImageSample> sample;  // present iff accepted
    std::vector<AttemptRecord> attempts;
    std::string error;  // set iff failed
};

/// Thrown by generate_validated when a worker or protocol error aborts the
/// loop; carries the attempts completed so far.
class LoopAborted : public Error {
public:
    LoopAborted(const std::string& what, ValidatedResult partial)
        : Error(what), partial_(std::move(partial)) {}
    const ValidatedResult& partial() const noexcept { return partial_; }

private:
    ValidatedResult partial_;
};

/// Seed of attempt `attempt` (1-based) of item `item_index` for class `target`.
std::uint64_t loop_attempt_seed(std::uint64_t base_seed, ClassId target, int item_index, int attempt);

/// Generate, classify, discard-and-regenerate until the validator predicts
/// `target` (with probs[target] >= threshold) or the retry budget runs out.
ValidatedResult generate_validated(WorkerHandle& gen, WorkerHandle& val, ClassId target, const LoopConfig& cfg,
                                   int item_index = 0);

struct WorkerPair {
    WorkerHandle generator;
    WorkerHandle validator;
};

struct BatchRequest {
    ClassId class_id = 0;
    int count = 1;
};

/// Runs every requested item across the worker pool. Results are ordered by
/// (class, index) and do not depend on pool size or completion order. Item
/// failures are captured as LoopOutcome::failed without stopping the batch.
std::vector<ValidatedResult> batch_generate_validated(std::span<WorkerPair> pool,
                                                      std::span<const BatchRequest> requests,
                                                      const LoopConfig& cfg);

/// Writes accepted images to images/<id>_<name>/<index>_<attempt>.png, the
/// attempt log to attempts.jsonl and, with audit dumps, rejected images under
/// rejected/.
void write_loop_artifacts(const std::filesystem::path& run_dir, const ClassCatalog& catalog,
                          std::span<const ValidatedResult> results);

/// One attempts.jsonl line.
std::string attempt_log_line(ClassId class_id, int item_index, const AttemptRecord& a);

}  // namespace valigen

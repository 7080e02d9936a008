#include "valigen/validation_loop.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "valigen/error.hpp"
#include "valigen/png_codec.hpp"
#include "valigen/rng.hpp"
#include "valigen/util.hpp"

namespace valigen {

void LoopConfig::validate() const {
    if (retry_budget < 1) throw DataError("retry budget must be >= 1");
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
        throw DataError("confidence threshold must lie in [0,1]");
    }
    if (width < ImageBuffer::kMinSide || height < ImageBuffer::kMinSide) throw DataError("image dims must be >= 4");
}

const char* to_string(LoopOutcome o) {
    switch (o) {
        case LoopOutcome::accepted: return "accepted";
        case LoopOutcome::budget_exhausted: return "budget_exhausted";
        case LoopOutcome::failed: return "failed";
    }
    return "?";
}

std::uint64_t loop_attempt_seed(std::uint64_t base_seed, ClassId target, int item_index, int attempt) {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(target) ^ purpose::kLoop);
    h = mix_seed(h, static_cast<std::uint64_t>(item_index));
    h = mix_seed(h, static_cast<std::uint64_t>(attempt));
    return splitmix64(base_seed ^ h);
}

ValidatedResult generate_validated(WorkerHandle& gen, WorkerHandle& val, ClassId target, const LoopConfig& cfg,
                                   int item_index) {
    cfg.validate();
    if (gen.role() != Role::generator || val.role() != Role::validator) {
        throw DataError("generate_validated needs a generator and a validator handle");
    }
    if (!gen.catalog().contains(target)) throw DataError("target class outside catalog");

    ValidatedResult result;
    result.target = target;
    result.item_index = item_index;
    for (int attempt = 1; attempt <= cfg.retry_budget; ++attempt) {
        const std::uint64_t seed = loop_attempt_seed(cfg.base_seed, target, item_index, attempt);
        try {
            ImageSample sample = request_generate(gen, target, seed, cfg.width, cfg.height);
            sample.attempt_index = attempt;
            Verdict verdict = request_classify(val, sample.image);
            const auto t = static_cast<std::size_t>(target);
            const bool accepted = verdict.pred == target && verdict.probs[t] >= cfg.confidence_threshold;
            AttemptRecord rec{attempt, seed, std::move(verdict), accepted, std::nullopt};
            if (accepted) {
                result.attempts.push_back(std::move(rec));
                result.outcome = LoopOutcome::accepted;
                result.sample = std::move(sample);
                return result;
            }
            if (cfg.audit_dumps) rec.rejected_image = std::move(sample.image);
            result.attempts.push_back(std::move(rec));
        } catch (const Error& e) {
            result.outcome = LoopOutcome::failed;
            result.error = e.what();
            throw LoopAborted(std::string("validation loop aborted at attempt ") + std::to_string(attempt) + ": " +
                                  e.what(),
                              std::move(result));
        }
    }
    result.outcome = LoopOutcome::budget_exhausted;
    return result;
}

std::vector<ValidatedResult> batch_generate_validated(std::span<WorkerPair> pool,
                                                      std::span<const BatchRequest> requests,
                                                      const LoopConfig& cfg) {
    cfg.validate();
    if (pool.empty()) throw DataError("worker pool is empty");
    std::map<ClassId, int> next_index;
    std::vector<std::pair<ClassId, int>> items;
    for (const auto& r : requests) {
        if (r.count < 1) throw DataError("batch counts must be >= 1");
        if (!pool.front().generator.catalog().contains(r.class_id)) throw DataError("class id outside catalog");
        for (int i = 0; i < r.count; ++i) items.emplace_back(r.class_id, next_index[r.class_id]++);
    }
    std::sort(items.begin(), items.end());

    std::vector<ValidatedResult> results(items.size());
    std::atomic<std::size_t> cursor{0};
    auto work = [&](WorkerPair& pair) {
        for (std::size_t i = cursor++; i < items.size(); i = cursor++) {
            const auto [cls, idx] = items[i];
            try {
                results[i] = generate_validated(pair.generator, pair.validator, cls, cfg, idx);
            } catch (const LoopAborted& e) {
                results[i] = e.partial();
            }
        }
    };
    if (pool.size() == 1) {
        work(pool.front());
    } else {
        std::vector<std::jthread> threads;
        for (auto& pair : pool) threads.emplace_back([&work, &pair] { work(pair); });
    }
    return results;
}

std::string attempt_log_line(ClassId class_id, int item_index, const AttemptRecord& a) {
    nlohmann::ordered_json j;
    j["class_id"] = class_id;
    j["item_index"] = item_index;
    j["attempt_index"] = a.attempt_index;
    j["seed"] = a.seed;
    j["pred"] = a.verdict.pred;
    j["probs"] = a.verdict.probs;
    j["accepted"] = a.accepted;
    return j.dump();
}

void write_loop_artifacts(const std::filesystem::path& run_dir, const ClassCatalog& catalog,
                          std::span<const ValidatedResult> results) {
    namespace fs = std::filesystem;
    fs::create_directories(run_dir / "images");
    std::string log;
    for (const auto& r : results) {
        const auto& def = catalog.at(r.target);
        const std::string class_dir = std::to_string(def.id) + "_" + path_safe(def.name);
        for (const auto& a : r.attempts) {
            log += attempt_log_line(r.target, r.item_index, a);
            log += '\n';
            if (a.rejected_image) {
                const auto dir = run_dir / "rejected" / class_dir;
                fs::create_directories(dir);
                write_binary_file(dir / (std::to_string(r.item_index) + "_" + std::to_string(a.attempt_index) + ".png"),
                                  encode_image(*a.rejected_image));
            }
        }
        if (r.outcome == LoopOutcome::accepted && r.sample) {
            const auto dir = run_dir / "images" / class_dir;
            fs::create_directories(dir);
            write_binary_file(dir / (std::to_string(r.item_index) + "_" + std::to_string(*r.sample->attempt_index) + ".png"),
                              encode_image(r.sample->image));
        }
    }
    write_text_file(run_dir / "attempts.jsonl", log);
}

}  // namespace valigen

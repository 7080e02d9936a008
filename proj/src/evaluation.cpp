#include "valigen/evaluation.hpp"

#include <atomic>
#include <thread>

#include "valigen/error.hpp"
#include "valigen/rng.hpp"

namespace valigen {

void EvalConfig::validate() const {
    if (n_per_class < 1) throw DataError("n_per_class must be >= 1");
    if (width < ImageBuffer::kMinSide || height < ImageBuffer::kMinSide) throw DataError("image dims must be >= 4");
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < k_; ++p) s += at(truth, p);
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < k_; ++t) s += at(t, pred);
    return s;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
}

ConfusionMatrix confusion_from_pairs(std::span<const std::pair<ClassId, ClassId>> pairs, std::size_t k) {
    ConfusionMatrix m(k);
    for (const auto& [t, p] : pairs) {
        if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= k || static_cast<std::size_t>(p) >= k) {
            throw DataError("class id outside [0, " + std::to_string(k) + ") in pair (" + std::to_string(t) + "," +
                            std::to_string(p) + ")");
        }
        ++m.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
    }
    return m;
}

MetricsResult metrics_from_confusion(const ConfusionMatrix& m) {
    MetricsResult r;
    const std::size_t k = m.k();
    for (std::size_t c = 0; c < k; ++c) {
        const auto tp = static_cast<double>(m.at(c, c));
        const auto col = m.col_sum(c);
        const auto row = m.row_sum(c);
        ClassMetrics cm;
        cm.class_id = static_cast<ClassId>(c);
        cm.precision = col == 0 ? 0.0 : tp / static_cast<double>(col);
        cm.recall = row == 0 ? 0.0 : tp / static_cast<double>(row);
        const double denom = cm.precision + cm.recall;
        cm.f1 = denom > 0.0 ? 2.0 * cm.precision * cm.recall / denom : 0.0;
        cm.support = row;
        r.per_class.push_back(cm);
    }
    if (k > 0) {
        for (const auto& cm : r.per_class) {
            r.macro.precision += cm.precision;
            r.macro.recall += cm.recall;
            r.macro.f1 += cm.f1;
        }
        const auto n = static_cast<double>(k);
        r.macro.precision /= n;
        r.macro.recall /= n;
        r.macro.f1 /= n;
    }
    return r;
}

EvalReport make_report(const ClassCatalog& catalog, std::span<const std::pair<ClassId, ClassId>> pairs) {
    EvalReport report;
    for (const auto& c : catalog.classes()) report.class_names.push_back(c.name);
    report.confusion = confusion_from_pairs(pairs, catalog.size());
    auto metrics = metrics_from_confusion(report.confusion);
    report.per_class = std::move(metrics.per_class);
    report.macro = metrics.macro;
    report.manifest.catalog_digest = catalog.digest();
    return report;
}

std::uint64_t eval_seed(std::uint64_t base_seed, ClassId class_id, int item_index) {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(class_id) ^ purpose::kEval);
    h = mix_seed(h, static_cast<std::uint64_t>(item_index));
    return splitmix64(base_seed ^ h);
}

EvalReport evaluate_first_attempt(std::span<WorkerPair> pool, const ClassCatalog& catalog, const EvalConfig& cfg,
                                  std::vector<EvalSample>* samples, bool keep_images) {
    cfg.validate();
    if (pool.empty()) throw DataError("worker pool is empty");
    const std::size_t k = catalog.size();
    const std::size_t total = k * static_cast<std::size_t>(cfg.n_per_class);
    std::vector<EvalSample> obs(total);
    for (std::size_t i = 0; i < total; ++i) {
        obs[i].class_id = static_cast<ClassId>(i / static_cast<std::size_t>(cfg.n_per_class));
        obs[i].item_index = static_cast<int>(i % static_cast<std::size_t>(cfg.n_per_class));
        obs[i].seed = eval_seed(cfg.base_seed, obs[i].class_id, obs[i].item_index);
    }

    std::atomic<std::size_t> cursor{0};
    auto work = [&](WorkerPair& pair) {
        for (std::size_t i = cursor++; i < total; i = cursor++) {
            auto& o = obs[i];
            try {
                auto sample = request_generate(pair.generator, o.class_id, o.seed, cfg.width, cfg.height);
                o.verdict = request_classify(pair.validator, sample.image);
                if (keep_images) o.image = std::move(sample.image);
            } catch (const Error& e) {
                o.error = e.what();
            }
        }
    };
    if (pool.size() == 1) {
        work(pool.front());
    } else {
        std::vector<std::jthread> threads;
        for (auto& pair : pool) threads.emplace_back([&work, &pair] { work(pair); });
    }

    std::vector<std::pair<ClassId, ClassId>> pairs;
    std::vector<EvalFailure> failures;
    for (const auto& o : obs) {
        if (o.verdict) {
            pairs.emplace_back(o.class_id, o.verdict->pred);
        } else {
            failures.push_back({o.class_id, o.item_index, o.error});
        }
    }
    EvalReport report = make_report(catalog, pairs);
    report.n_per_class = cfg.n_per_class;
    report.width = cfg.width;
    report.height = cfg.height;
    report.failures = std::move(failures);
    report.manifest.base_seed = cfg.base_seed;
    report.manifest.generator_identity = pool.front().generator.identity();
    report.manifest.validator_identity = pool.front().validator.identity();
    if (samples) *samples = std::move(obs);
    return report;
}

}  // namespace valigen

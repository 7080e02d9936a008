#include "valigen/image.hpp"

#include <cstring>

#include "valigen/error.hpp"
#include "valigen/run_manifest.hpp"
#include "valigen/util.hpp"

namespace valigen {

ImageBuffer::ImageBuffer(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < kMinSide || height < kMinSide) {
        throw DataError("image must be at least 4x4, got " + std::to_string(width) + "x" +
                        std::to_string(height));
    }
    const auto expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * kChannels;
    if (pixels_.size() != expected) {
        throw DataError("pixel array has " + std::to_string(pixels_.size()) + " samples, expected " +
                        std::to_string(expected));
    }
}

ImageBuffer::ImageBuffer(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b)
    : ImageBuffer(width, height, [&] {
          if (width < kMinSide || height < kMinSide) return std::vector<std::uint8_t>{};
          std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * height * kChannels);
          for (std::size_t i = 0; i < px.size(); i += 3) {
              px[i] = r;
              px[i + 1] = g;
              px[i + 2] = b;
          }
          return px;
      }()) {}

std::string pixel_hash(const ImageBuffer& img) {
    std::vector<std::uint8_t> bytes(8);
    const auto w = static_cast<std::uint32_t>(img.width());
    const auto h = static_cast<std::uint32_t>(img.height());
    std::memcpy(bytes.data(), &w, 4);
    std::memcpy(bytes.data() + 4, &h, 4);
    bytes.insert(bytes.end(), img.pixels().begin(), img.pixels().end());
    return sha256_hex(bytes);
}

const char* to_string(SampleSource s) {
    switch (s) {
        case SampleSource::real: return "real";
        case SampleSource::generated: return "generated";
        case SampleSource::augmented: return "augmented";
    }
    return "?";
}

void validate_sample(const ImageSample& sample, const ClassCatalog& catalog) {
    if (sample.class_id && !catalog.contains(*sample.class_id)) {
        throw DataError("sample class id outside catalog");
    }
    if (sample.source == SampleSource::generated) {
        if (!sample.seed || !sample.attempt_index) {
            throw DataError("generated sample without seed/attempt provenance");
        }
    }
    if (sample.attempt_index && *sample.attempt_index < 1) throw DataError("attempt index must be >= 1");
}

nlohmann::ordered_json to_json(const WorkerIdentity& id) {
    nlohmann::ordered_json j;
    j["name"] = id.name;
    j["version_tag"] = id.version_tag;
    j["checkpoint_step"] = id.checkpoint_step ? nlohmann::ordered_json(*id.checkpoint_step) : nullptr;
    return j;
}

WorkerIdentity worker_identity_from_json(const nlohmann::json& j) {
    WorkerIdentity id;
    id.name = j.value("name", "");
    id.version_tag = j.value("version_tag", "");
    if (j.contains("checkpoint_step") && !j["checkpoint_step"].is_null()) {
        id.checkpoint_step = j["checkpoint_step"].get<std::int64_t>();
    }
    return id;
}

nlohmann::ordered_json to_json(const RunManifest& m) {
    nlohmann::ordered_json j;
    j["run_id"] = m.run_id;
    j["created_at"] = m.created_at;
    j["command"] = m.command;
    j["base_seed"] = m.base_seed;
    j["catalog_digest"] = m.catalog_digest;
    j["generator"] = to_json(m.generator_identity);
    j["validator"] = to_json(m.validator_identity);
    j["config_snapshot"] = m.config_snapshot;
    j["completed"] = m.completed;
    return j;
}

RunManifest run_manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
        m.run_id = j.at("run_id").get<std::string>();
        m.created_at = j.at("created_at").get<std::string>();
        m.command = j.value("command", "");
        m.base_seed = j.at("base_seed").get<std::uint64_t>();
        m.catalog_digest = j.at("catalog_digest").get<std::string>();
        m.generator_identity = worker_identity_from_json(j.at("generator"));
        m.validator_identity = worker_identity_from_json(j.at("validator"));
        m.config_snapshot = j.at("config_snapshot").get<std::string>();
        m.completed = j.value("completed", false);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad run manifest: ") + e.what());
    }
    return m;
}

}  // namespace valigen

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

namespace valigen {

/// Name/version/checkpoint a worker reports in its `ready` frame.
struct WorkerIdentity {
    std::string name;
    std::string version_tag;
    std::optional<std::int64_t> checkpoint_step;

    bool operator==(const WorkerIdentity&) const = default;
};

nlohmann::ordered_json to_json(const WorkerIdentity& id);
WorkerIdentity worker_identity_from_json(const nlohmann::json& j);

struct RunManifest {
    std::string run_id;
    std::string created_at;  // ISO-8601 UTC
    std::string config_snapshot;
    std::uint64_t base_seed = 0;
    WorkerIdentity generator_identity;
    WorkerIdentity validator_identity;
    std::string catalog_digest;
    std::string command;
    bool completed = false;
};

nlohmann::ordered_json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const nlohmann::json& j);

}  // namespace valigen

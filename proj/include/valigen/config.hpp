#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "valigen/catalog.hpp"
#include "valigen/evaluation.hpp"
#include "valigen/protocol.hpp"
#include "valigen/validation_loop.hpp"

namespace valigen {

/// One worker endpoint as written in the config file.
///   {"transport":"reference","worker":"generator|centroid|stub", ...}
///   {"transport":"subprocess","command":["$self","worker","reference","--role","generator"]}
///   {"transport":"tcp","address":"127.0.0.1:7000"}
struct EndpointConfig {
    std::string transport = "reference";
    // reference
    std::string worker;
    double fidelity = 1.0;
    double error_rate = 0.0;
    nlohmann::json stub_matrix;  // path string or nested array; null when unused
    std::uint64_t seed = 0;
    std::string name;
    std::string version_tag;
    std::optional<std::int64_t> checkpoint_step;
    // subprocess
    std::vector<std::string> command;
    // tcp
    std::string address;
    double generate_timeout = 120.0;
    double classify_timeout = 30.0;
    double handshake_timeout = 10.0;
    double shutdown_grace = 5.0;

    static EndpointConfig from_json(const nlohmann::json& j, Role role);
    nlohmann::ordered_json to_json() const;
    /// Resolves relative paths against `base_dir` and "$self" to this executable.
    EndpointSpec to_spec(Role role, const std::filesystem::path& base_dir, std::size_t k) const;
};

struct EngineConfig {
    std::string catalog = "default";
    EndpointConfig generator;
    EndpointConfig validator;
    LoopConfig loop;
    EvalConfig eval;
    int workers = 1;
    std::string run_root = "runs";
    std::filesystem::path base_dir = ".";

    EngineConfig();

    /// Unknown keys are rejected; missing keys take defaults.
    static EngineConfig from_json(std::string_view text, const std::filesystem::path& base_dir);
    static EngineConfig load(const std::filesystem::path& path);

    /// Fully populated, key-ordered snapshot; parsing it yields the same config.
    std::string canonical() const;

    ClassCatalog load_catalog() const;
    EndpointSpec endpoint(Role role, std::size_t k) const;
};

}  // namespace valigen

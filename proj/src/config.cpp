#include "valigen/config.hpp"

#include <charconv>
#include <set>

#include "valigen/channel.hpp"
#include "valigen/error.hpp"
#include "valigen/reference_workers.hpp"
#include "valigen/util.hpp"

namespace valigen {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!j.is_object()) throw DataError("config: " + std::string(where) + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw DataError("config: unknown field '" + key + "' in " + std::string(where));
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, std::string_view where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw DataError("config: bad value for '" + std::string(key) + "' in " + std::string(where));
    }
}

}  // namespace

EndpointConfig EndpointConfig::from_json(const json& j, Role role) {
    const std::string where = std::string(to_string(role)) + " endpoint";
    reject_unknown(j,
                   {"transport", "worker", "fidelity", "error_rate", "stub_matrix", "seed", "name", "version_tag",
                    "checkpoint_step", "command", "address", "generate_timeout", "classify_timeout",
                    "handshake_timeout", "shutdown_grace"},
                   where);
    EndpointConfig c;
    c.worker = role == Role::generator ? "generator" : "centroid";
    read(j, "transport", c.transport, where);
    read(j, "worker", c.worker, where);
    read(j, "fidelity", c.fidelity, where);
    read(j, "error_rate", c.error_rate, where);
    read(j, "seed", c.seed, where);
    read(j, "name", c.name, where);
    read(j, "version_tag", c.version_tag, where);
    if (j.contains("checkpoint_step") && !j["checkpoint_step"].is_null()) {
        std::int64_t step = 0;
        read(j, "checkpoint_step", step, where);
        c.checkpoint_step = step;
    }
    read(j, "command", c.command, where);
    read(j, "address", c.address, where);
    read(j, "generate_timeout", c.generate_timeout, where);
    read(j, "classify_timeout", c.classify_timeout, where);
    read(j, "handshake_timeout", c.handshake_timeout, where);
    read(j, "shutdown_grace", c.shutdown_grace, where);
    if (j.contains("stub_matrix")) c.stub_matrix = j["stub_matrix"];

    if (c.transport != "reference" && c.transport != "subprocess" && c.transport != "tcp") {
        throw DataError("config: transport must be reference, subprocess or tcp");
    }
    if (c.transport == "reference") {
        const bool gen = c.worker == "generator";
        const bool val = c.worker == "centroid" || c.worker == "stub";
        if ((role == Role::generator && !gen) || (role == Role::validator && !val)) {
            throw DataError("config: reference worker '" + c.worker + "' cannot serve the " + to_string(role) + " role");
        }
        if (c.worker == "stub" && c.stub_matrix.is_null()) throw DataError("config: stub worker needs stub_matrix");
    }
    if (c.transport == "subprocess" && c.command.empty()) throw DataError("config: subprocess endpoint needs command");
    if (c.transport == "tcp" && c.address.find(':') == std::string::npos) {
        throw DataError("config: tcp endpoint needs address host:port");
    }
    return c;
}

nlohmann::ordered_json EndpointConfig::to_json() const {
    nlohmann::ordered_json j;
    j["transport"] = transport;
    if (transport == "reference") {
        j["worker"] = worker;
        j["fidelity"] = fidelity;
        j["error_rate"] = error_rate;
        if (!stub_matrix.is_null()) j["stub_matrix"] = stub_matrix;
        j["seed"] = seed;
        if (!name.empty()) j["name"] = name;
        if (!version_tag.empty()) j["version_tag"] = version_tag;
        if (checkpoint_step) j["checkpoint_step"] = *checkpoint_step;
    } else if (transport == "subprocess") {
        j["command"] = command;
    } else {
        j["address"] = address;
    }
    j["generate_timeout"] = generate_timeout;
    j["classify_timeout"] = classify_timeout;
    j["handshake_timeout"] = handshake_timeout;
    j["shutdown_grace"] = shutdown_grace;
    return j;
}

EndpointSpec EndpointConfig::to_spec(Role role, const std::filesystem::path& base_dir, std::size_t k) const {
    EndpointSpec spec;
    if (transport == "reference") {
        reference::WorkerParams p;
        p.kind = worker == "generator" ? reference::WorkerKind::generator
                 : worker == "stub"    ? reference::WorkerKind::stub
                                       : reference::WorkerKind::centroid;
        p.fidelity = {fidelity, error_rate};
        p.seed = seed;
        p.identity = reference::default_identity(p.kind);
        if (!name.empty()) p.identity.name = name;
        if (!version_tag.empty()) p.identity.version_tag = version_tag;
        if (checkpoint_step) p.identity.checkpoint_step = checkpoint_step;
        if (p.kind == reference::WorkerKind::stub) {
            if (stub_matrix.is_string()) {
                std::filesystem::path path = stub_matrix.get<std::string>();
                if (path.is_relative()) path = base_dir / path;
                p.stub_policy = reference::StubPolicy::load_csv(path);
            } else {
                try {
                    p.stub_policy = reference::StubPolicy(stub_matrix.get<std::vector<std::vector<double>>>());
                } catch (const json::exception&) {
                    throw DataError("config: stub_matrix must be a CSV path or a nested array");
                }
            }
            if (p.stub_policy->size() != k) throw DataError("config: stub_matrix size does not match the catalog");
        }
        spec = reference::inproc_endpoint(std::move(p));
    } else if (transport == "subprocess") {
        spec.transport = Transport::subprocess;
        spec.command = command;
        for (auto& arg : spec.command) {
            if (arg == "$self") arg = self_executable();
        }
    } else {
        spec.transport = Transport::tcp;
        const auto colon = address.rfind(':');
        spec.host = address.substr(0, colon);
        const auto port_s = address.substr(colon + 1);
        int port = 0;
        auto [ptr, ec] = std::from_chars(port_s.data(), port_s.data() + port_s.size(), port);
        if (ec != std::errc{} || ptr != port_s.data() + port_s.size()) throw DataError("config: bad tcp port");
        spec.port = port;
    }
    spec.role = role;
    spec.generate_timeout = generate_timeout;
    spec.classify_timeout = classify_timeout;
    spec.handshake_timeout = handshake_timeout;
    spec.shutdown_grace = shutdown_grace;
    spec.validate();
    return spec;
}

EngineConfig::EngineConfig() {
    generator = EndpointConfig::from_json(json::object(), Role::generator);
    validator = EndpointConfig::from_json(json::object(), Role::validator);
}

EngineConfig EngineConfig::from_json(std::string_view text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("config parse error: ") + e.what());
    }
    reject_unknown(j, {"catalog", "generator", "validator", "loop", "eval", "workers", "run_root"}, "config");
    EngineConfig c;
    c.base_dir = base_dir;
    read(j, "catalog", c.catalog, "config");
    read(j, "workers", c.workers, "config");
    read(j, "run_root", c.run_root, "config");
    if (j.contains("generator")) c.generator = EndpointConfig::from_json(j["generator"], Role::generator);
    if (j.contains("validator")) c.validator = EndpointConfig::from_json(j["validator"], Role::validator);
    if (j.contains("loop")) {
        const auto& l = j["loop"];
        reject_unknown(l, {"retry_budget", "base_seed", "confidence_threshold", "width", "height", "audit_dumps"}, "loop");
        read(l, "retry_budget", c.loop.retry_budget, "loop");
        read(l, "base_seed", c.loop.base_seed, "loop");
        read(l, "confidence_threshold", c.loop.confidence_threshold, "loop");
        read(l, "width", c.loop.width, "loop");
        read(l, "height", c.loop.height, "loop");
        read(l, "audit_dumps", c.loop.audit_dumps, "loop");
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        reject_unknown(e, {"n_per_class", "base_seed", "width", "height"}, "eval");
        read(e, "n_per_class", c.eval.n_per_class, "eval");
        read(e, "base_seed", c.eval.base_seed, "eval");
        read(e, "width", c.eval.width, "eval");
        read(e, "height", c.eval.height, "eval");
    }
    if (c.workers < 1) throw DataError("config: workers must be >= 1");
    c.loop.validate();
    c.eval.validate();
    return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("config file not found: " + path.string());
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    return from_json(read_text_file(path), base);
}

std::string EngineConfig::canonical() const {
    nlohmann::ordered_json j;
    j["catalog"] = catalog;
    j["generator"] = generator.to_json();
    j["validator"] = validator.to_json();
    j["loop"] = {{"retry_budget", loop.retry_budget},
                 {"base_seed", loop.base_seed},
                 {"confidence_threshold", loop.confidence_threshold},
                 {"width", loop.width},
                 {"height", loop.height},
                 {"audit_dumps", loop.audit_dumps}};
    j["eval"] = {{"n_per_class", eval.n_per_class},
                 {"base_seed", eval.base_seed},
                 {"width", eval.width},
                 {"height", eval.height}};
    j["workers"] = workers;
    j["run_root"] = run_root;
    return j.dump(2) + "\n";
}

ClassCatalog EngineConfig::load_catalog() const {
    if (catalog == "default") return default_catalog();
    std::filesystem::path p = catalog;
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw DataError("catalog file not found: " + p.string());
    return catalog_load(p);
}

EndpointSpec EngineConfig::endpoint(Role role, std::size_t k) const {
    return (role == Role::generator ? generator : validator).to_spec(role, base_dir, k);
}

}  // namespace valigen

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "valigen/catalog.hpp"
#include "valigen/channel.hpp"
#include "valigen/image.hpp"
#include "valigen/run_manifest.hpp"

namespace valigen {

inline constexpr int kProtocolVersion = 1;
inline constexpr double kProbSumTolerance = 1e-3;

enum class Role { generator, validator };
const char* to_string(Role r);

enum class Transport { subprocess, tcp, inproc };

struct EndpointSpec {
    Transport transport = Transport::subprocess;
    Role role = Role::generator;
    std::vector<std::string> command;  // subprocess
    std::string host = "127.0.0.1";    // tcp
    int port = 0;
    InprocServer inproc;               // inproc
    double generate_timeout = 120.0;
    double classify_timeout = 30.0;
    double handshake_timeout = 10.0;
    double shutdown_grace = 5.0;

    void validate() const;
};

/// Classifier output with the engine's invariants already enforced.
struct Verdict {
    std::vector<double> probs;
    ClassId pred = 0;

    bool operator==(const Verdict&) const = default;
};

/// Index of the largest probability; ties go to the lowest index.
ClassId argmax_lowest(std::span<const double> probs);

/// Builds a Verdict from a raw vector of length k. Throws ProtocolError
/// "bad probability vector" on length, range or sum violations.
Verdict make_verdict(std::vector<double> probs, std::size_t k);

/// Per-connection terminal-outcome ledger. Every request id that was written
/// ends up in exactly one of the four outcome buckets.
struct RequestAccounting {
    std::uint64_t sent = 0;
    std::uint64_t responses = 0;
    std::uint64_t error_replies = 0;
    std::uint64_t timeouts = 0;
    std::uint64_t protocol_errors = 0;
    std::uint64_t stale_replies = 0;     // late frames for already-terminated ids, dropped
    std::uint64_t malformed_frames = 0;  // lines that were not JSON objects
    std::uint64_t pred_overrides = 0;

    std::uint64_t terminal() const noexcept { return responses + error_replies + timeouts + protocol_errors; }
};

class WorkerHandle {
public:
    WorkerHandle(WorkerHandle&&) noexcept;
    WorkerHandle& operator=(WorkerHandle&&) noexcept;
    ~WorkerHandle();

    Role role() const noexcept { return role_; }
    const WorkerIdentity& identity() const noexcept { return identity_; }
    const std::string& catalog_digest() const noexcept { return catalog_digest_; }
    const ClassCatalog& catalog() const noexcept { return *catalog_; }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool live() const noexcept;
    const RequestAccounting& accounting() const noexcept { return accounting_; }
    const EndpointSpec& endpoint() const noexcept { return *spec_; }
    /// Exit status observed at shutdown (subprocess/inproc), and whether a kill was needed.
    std::optional<int> exit_code() const noexcept { return exit_code_; }
    bool forced_termination() const noexcept { return forced_; }

    /// "name@version_tag[#step]"
    std::string identity_string() const;

private:
    WorkerHandle() = default;

    friend WorkerHandle spawn_worker(const EndpointSpec&, const ClassCatalog&, int, int);
    friend ImageSample request_generate(WorkerHandle&, ClassId, std::uint64_t, int, int);
    friend Verdict request_classify(WorkerHandle&, const ImageBuffer&);
    friend void shutdown_worker(WorkerHandle&);
    friend nlohmann::json transact(WorkerHandle&, nlohmann::json, const char*, double,
                                   const std::function<void(const nlohmann::json&)>&);
    friend struct ConformanceAccess;

    std::shared_ptr<const EndpointSpec> spec_;
    std::shared_ptr<const ClassCatalog> catalog_;
    std::unique_ptr<Connection> conn_;
    Role role_ = Role::generator;
    WorkerIdentity identity_;
    std::string catalog_digest_;
    int width_ = 0;
    int height_ = 0;
    std::int64_t next_id_ = 1;
    bool dead_ = false;
    bool shut_down_ = false;
    RequestAccounting accounting_;
    std::optional<int> exit_code_;
    bool forced_ = false;
};

/// Opens the transport and performs the init/ready handshake.
WorkerHandle spawn_worker(const EndpointSpec& spec, const ClassCatalog& catalog, int width = 64, int height = 64);

/// Asks a generator for one image; width/height must match the handshake.
ImageSample request_generate(WorkerHandle& h, ClassId class_id, std::uint64_t seed, int width, int height);

Verdict request_classify(WorkerHandle& h, const ImageBuffer& img);

/// Sends `shutdown`, then reaps (or kills after the grace period). Idempotent.
void shutdown_worker(WorkerHandle& h);

/// One request/response exchange: assigns the id, writes the frame and waits
/// for the matching reply of `expected_type`, which `check` may reject by
/// throwing. Each written id is booked into exactly one accounting bucket.
nlohmann::json transact(WorkerHandle& h, nlohmann::json request, const char* expected_type, double timeout_s,
                        const std::function<void(const nlohmann::json&)>& check);

// Frame builders shared with the worker side.
nlohmann::json make_init_frame(Role role, const ClassCatalog& catalog, int width, int height);
nlohmann::json make_error_frame(const nlohmann::json& id, std::string_view code, std::string_view message);

}  // namespace valigen

#include "valigen/protocol.hpp"

#include <cmath>

#include "valigen/error.hpp"
#include "valigen/png_codec.hpp"
#include "valigen/util.hpp"

namespace valigen {

using nlohmann::json;

namespace {

Clock::time_point deadline_after(double seconds) {
    return Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
}

std::string describe(const json& frame) {
    std::string s = frame.dump();
    if (s.size() > 200) s = s.substr(0, 200) + "...";
    return s;
}

}  // namespace

const char* to_string(Role r) { return r == Role::generator ? "generator" : "validator"; }

void EndpointSpec::validate() const {
    if (!(generate_timeout > 0 && classify_timeout > 0 && handshake_timeout > 0 && shutdown_grace > 0)) {
        throw DataError("endpoint timeouts must be positive");
    }
    switch (transport) {
        case Transport::subprocess:
            if (command.empty()) throw DataError("subprocess endpoint needs a command line");
            break;
        case Transport::tcp:
            if (host.empty() || port <= 0 || port > 65535) throw DataError("tcp endpoint needs host:port");
            break;
        case Transport::inproc:
            if (!inproc) throw DataError("in-process endpoint without a server");
            break;
    }
}

ClassId argmax_lowest(std::span<const double> probs) {
    ClassId best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[static_cast<std::size_t>(best)]) best = static_cast<ClassId>(i);
    }
    return best;
}

Verdict make_verdict(std::vector<double> probs, std::size_t k) {
    if (probs.size() != k) {
        throw ProtocolError("bad probability vector: length " + std::to_string(probs.size()) + ", expected " +
                            std::to_string(k));
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) throw ProtocolError("bad probability vector: entry out of [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kProbSumTolerance) {
        throw ProtocolError("bad probability vector: sum " + std::to_string(sum));
    }
    Verdict v;
    v.pred = argmax_lowest(probs);
    v.probs = std::move(probs);
    return v;
}

json make_init_frame(Role role, const ClassCatalog& catalog, int width, int height) {
    return json{{"type", "init"},
                {"protocol", kProtocolVersion},
                {"role", to_string(role)},
                {"catalog", json::parse(catalog.canonical_json())},
                {"catalog_digest", catalog.digest()},
                {"image", {{"width", width}, {"height", height}, {"format", "png-base64"}}}};
}

json make_error_frame(const json& id, std::string_view code, std::string_view message) {
    return json{{"type", "error"}, {"id", id}, {"code", code}, {"message", message}};
}

WorkerHandle::WorkerHandle(WorkerHandle&&) noexcept = default;
WorkerHandle& WorkerHandle::operator=(WorkerHandle&& other) noexcept {
    if (this != &other) {
        if (conn_) shutdown_worker(*this);
        spec_ = std::move(other.spec_);
        catalog_ = std::move(other.catalog_);
        conn_ = std::move(other.conn_);
        role_ = other.role_;
        identity_ = std::move(other.identity_);
        catalog_digest_ = std::move(other.catalog_digest_);
        width_ = other.width_;
        height_ = other.height_;
        next_id_ = other.next_id_;
        dead_ = other.dead_;
        shut_down_ = other.shut_down_;
        accounting_ = other.accounting_;
        exit_code_ = other.exit_code_;
        forced_ = other.forced_;
    }
    return *this;
}

WorkerHandle::~WorkerHandle() {
    if (conn_) shutdown_worker(*this);
}

bool WorkerHandle::live() const noexcept { return conn_ && !dead_ && !shut_down_; }

std::string WorkerHandle::identity_string() const {
    std::string s = identity_.name + "@" + identity_.version_tag;
    if (identity_.checkpoint_step) s += "#" + std::to_string(*identity_.checkpoint_step);
    return s;
}

WorkerHandle spawn_worker(const EndpointSpec& spec, const ClassCatalog& catalog, int width, int height) {
    spec.validate();
    if (width < ImageBuffer::kMinSide || height < ImageBuffer::kMinSide) {
        throw DataError("image dimensions must be at least 4x4");
    }
    WorkerHandle h;
    h.spec_ = std::make_shared<const EndpointSpec>(spec);
    h.catalog_ = std::make_shared<const ClassCatalog>(catalog);
    h.role_ = spec.role;
    h.width_ = width;
    h.height_ = height;
    switch (spec.transport) {
        case Transport::subprocess: h.conn_ = Connection::spawn_subprocess(spec.command); break;
        case Transport::tcp: h.conn_ = Connection::connect_tcp(spec.host, spec.port, spec.handshake_timeout); break;
        case Transport::inproc: h.conn_ = Connection::start_inproc(spec.inproc); break;
    }

    auto fail = [&](const std::string& why) -> HandshakeError {
        h.dead_ = true;
        auto r = h.conn_->close(spec.shutdown_grace);
        h.exit_code_ = r.exit_code;
        h.forced_ = r.forced;
        h.conn_.reset();
        return HandshakeError(why);
    };

    if (!h.conn_->channel().write_line(make_init_frame(spec.role, catalog, width, height).dump())) {
        throw fail("worker closed its input before init");
    }
    std::string line;
    switch (h.conn_->channel().read_line(line, deadline_after(spec.handshake_timeout))) {
        case LineChannel::ReadStatus::timeout: throw fail("handshake timeout");
        case LineChannel::ReadStatus::eof: throw fail("worker exited during handshake");
        case LineChannel::ReadStatus::line: break;
    }
    json ready;
    try {
        ready = json::parse(line);
    } catch (const json::parse_error&) {
        throw fail("handshake: malformed frame");
    }
    if (!ready.is_object()) throw fail("handshake: malformed frame");
    const std::string type = ready.value("type", "");
    if (type == "error") {
        throw fail("worker rejected init: [" + ready.value("code", "") + "] " + ready.value("message", ""));
    }
    if (type != "ready") throw fail("handshake: expected ready, got " + describe(ready));
    if (ready.contains("catalog_digest")) {
        if (!ready["catalog_digest"].is_string() || ready["catalog_digest"].get<std::string>() != catalog.digest()) {
            throw fail("catalog mismatch");
        }
    }
    if (ready.contains("role")) {
        if (!ready["role"].is_string() || ready["role"].get<std::string>() != to_string(spec.role)) {
            throw fail("role mismatch");
        }
    }
    if (ready.contains("name") && !ready["name"].is_string()) throw fail("handshake: name must be a string");
    if (ready.contains("version_tag") && !ready["version_tag"].is_string()) {
        throw fail("handshake: version_tag must be a string");
    }
    if (ready.contains("checkpoint_step") && !ready["checkpoint_step"].is_null() &&
        !ready["checkpoint_step"].is_number_integer()) {
        throw fail("handshake: checkpoint_step must be an integer");
    }
    h.identity_ = worker_identity_from_json(ready);
    h.catalog_digest_ = catalog.digest();
    return h;
}

json transact(WorkerHandle& h, json request, const char* expected_type, double timeout_s,
              const std::function<void(const json&)>& check) {
    if (!h.live()) throw ProtocolError("worker connection is not live");
    const std::int64_t id = h.next_id_++;
    request["id"] = id;
    auto& acct = h.accounting_;
    ++acct.sent;
    if (!h.conn_->channel().write_line(request.dump())) {
        ++acct.protocol_errors;
        h.dead_ = true;
        throw ProtocolError("worker connection closed");
    }
    const auto deadline = deadline_after(timeout_s);
    std::string line;
    for (;;) {
        switch (h.conn_->channel().read_line(line, deadline)) {
            case LineChannel::ReadStatus::timeout:
                ++acct.timeouts;
                throw TimeoutError("no reply to request " + std::to_string(id) + " within " +
                                   std::to_string(timeout_s) + " s");
            case LineChannel::ReadStatus::eof:
                ++acct.protocol_errors;
                h.dead_ = true;
                throw ProtocolError("worker closed the connection");
            case LineChannel::ReadStatus::line: break;
        }
        json reply;
        try {
            reply = json::parse(line);
        } catch (const json::parse_error&) {
        }
        if (!reply.is_object()) {
            ++acct.malformed_frames;
            ++acct.protocol_errors;
            throw ProtocolError("malformed frame: not a JSON object");
        }
        const json id_field = reply.contains("id") ? reply["id"] : json();
        const std::string type = reply.contains("type") && reply["type"].is_string() ? reply["type"].get<std::string>() : "";
        if (id_field.is_number_integer()) {
            const auto rid = id_field.get<std::int64_t>();
            if (rid >= 1 && rid < id) {
                ++acct.stale_replies;
                log_warning("dropping late reply for request " + std::to_string(rid));
                continue;
            }
            if (rid != id) {
                ++acct.protocol_errors;
                throw ProtocolError("reply for unknown request id " + std::to_string(rid) + " (expected " +
                                    std::to_string(id) + ")");
            }
        } else if (type != "error") {
            ++acct.protocol_errors;
            throw ProtocolError("reply without request id: " + describe(reply));
        }
        if (type == "error") {
            ++acct.error_replies;
            throw WorkerError(reply.value("code", "unknown"), reply.value("message", ""));
        }
        if (type != expected_type) {
            ++acct.protocol_errors;
            throw ProtocolError(std::string("expected '") + expected_type + "' frame, got " + describe(reply));
        }
        try {
            check(reply);
        } catch (const ProtocolError&) {
            ++acct.protocol_errors;
            throw;
        } catch (const std::exception& e) {
            ++acct.protocol_errors;
            throw ProtocolError(e.what());
        }
        ++acct.responses;
        return reply;
    }
}

ImageSample request_generate(WorkerHandle& h, ClassId class_id, std::uint64_t seed, int width, int height) {
    if (h.role() != Role::generator) throw ProtocolError("request_generate on a non-generator handle");
    if (!h.catalog().contains(class_id)) throw DataError("class id " + std::to_string(class_id) + " outside catalog");
    if (width != h.width() || height != h.height()) {
        throw DataError("requested dimensions differ from the handshake image format");
    }
    json req{{"type", "generate"}, {"class_id", class_id}, {"prompt", h.catalog().at(class_id).prompt}, {"seed", seed}};
    std::optional<ImageBuffer> image;
    transact(h, std::move(req), "image", h.endpoint().generate_timeout, [&](const json& reply) {
        if (!reply.contains("png_b64") || !reply["png_b64"].is_string()) {
            throw ProtocolError("image frame without png_b64");
        }
        ImageBuffer decoded = [&] {
            try {
                return decode_image(base64_decode(reply["png_b64"].get<std::string>()));
            } catch (const DataError& e) {
                throw ProtocolError(std::string("undecodable image payload: ") + e.what());
            }
        }();
        if (decoded.width() != width || decoded.height() != height) {
            throw ProtocolError("image dimension mismatch: got " + std::to_string(decoded.width()) + "x" +
                                std::to_string(decoded.height()) + ", requested " + std::to_string(width) + "x" +
                                std::to_string(height));
        }
        image = std::move(decoded);
    });
    return ImageSample{std::move(*image), class_id, SampleSource::generated, seed, 1, h.identity_string()};
}

Verdict request_classify(WorkerHandle& h, const ImageBuffer& img) {
    if (h.role() != Role::validator) throw ProtocolError("request_classify on a non-validator handle");
    json req{{"type", "classify"}, {"png_b64", base64_encode(encode_image(img))}};
    Verdict verdict;
    bool overridden = false;
    transact(h, std::move(req), "verdict", h.endpoint().classify_timeout, [&](const json& reply) {
        if (!reply.contains("probs") || !reply["probs"].is_array()) throw ProtocolError("bad probability vector");
        std::vector<double> probs;
        for (const auto& p : reply["probs"]) {
            if (!p.is_number()) throw ProtocolError("bad probability vector");
            probs.push_back(p.get<double>());
        }
        verdict = make_verdict(std::move(probs), h.catalog().size());
        if (reply.contains("pred")) {
            const auto& pred = reply["pred"];
            if (!pred.is_number_integer() || pred.get<std::int64_t>() != verdict.pred) overridden = true;
        }
    });
    if (overridden) {
        ++h.accounting_.pred_overrides;
        log_warning("validator " + h.identity_string() + " pred disagrees with argmax; using argmax " +
                    std::to_string(verdict.pred));
    }
    return verdict;
}

void shutdown_worker(WorkerHandle& h) {
    if (!h.conn_ || h.shut_down_) return;
    h.shut_down_ = true;
    if (!h.dead_) h.conn_->channel().write_line(json{{"type", "shutdown"}}.dump());
    const auto r = h.conn_->close(h.spec_ ? h.spec_->shutdown_grace : 5.0);
    h.exit_code_ = r.exit_code;
    h.forced_ = r.forced;
}

}  // namespace valigen

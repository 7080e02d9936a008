#include "valigen/conformance.hpp"

#include <sstream>

#include "valigen/error.hpp"
#include "valigen/reference_workers.hpp"

namespace valigen {

using nlohmann::json;

const char* to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::pass: return "pass";
        case CheckStatus::warn: return "warn";
        case CheckStatus::fail: return "fail";
    }
    return "?";
}

bool ConformanceReport::passed() const {
    for (const auto& c : checks) {
        if (c.status == CheckStatus::fail) return false;
    }
    return !checks.empty();
}

const ConformanceCheck* ConformanceReport::find(std::string_view name) const {
    for (const auto& c : checks) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

std::string ConformanceReport::to_text() const {
    std::ostringstream out;
    out << "conformance " << to_string(role) << " " << worker << "\n";
    for (const auto& c : checks) {
        out << "  [" << to_string(c.status) << "] " << c.name;
        if (!c.detail.empty()) out << ": " << c.detail;
        out << "\n";
    }
    out << "  result: " << (passed() ? "PASS" : "FAIL") << "\n";
    return out.str();
}

/// Raw channel access for the malformed-frame probe.
struct ConformanceAccess {
    static LineChannel& channel(WorkerHandle& h) { return h.conn_->channel(); }
    static RequestAccounting& accounting(WorkerHandle& h) { return h.accounting_; }
    static std::int64_t last_id(const WorkerHandle& h) { return h.next_id_ - 1; }
};

namespace {

ConformanceCheck run_check(std::string name, const std::function<CheckStatus(std::string&)>& body) {
    ConformanceCheck c{std::move(name), CheckStatus::pass, {}};
    try {
        c.status = body(c.detail);
    } catch (const std::exception& e) {
        c.status = CheckStatus::fail;
        c.detail = e.what();
    }
    return c;
}

ImageBuffer probe_image(ClassId c, int w, int h, std::size_t k) {
    const int pw = std::max(w, 8), ph = std::max(h, 8);
    auto img = reference::texture_generate(c % static_cast<ClassId>(std::min(k, reference::kPaletteSize)), 17, pw, ph,
                                           {1.0, 0.0}, std::min(k, reference::kPaletteSize));
    if (pw == w && ph == h) return img;
    // crop to the negotiated size
    std::vector<std::uint8_t> px;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < 3; ++ch) px.push_back(img.at(x, y, ch));
        }
    }
    return ImageBuffer(w, h, std::move(px));
}

}  // namespace

ConformanceReport conformance_check(const EndpointSpec& spec, const ClassCatalog& catalog, int width, int height) {
    ConformanceReport report;
    report.role = spec.role;

    std::optional<WorkerHandle> handle;
    report.checks.push_back(run_check("handshake", [&](std::string& detail) {
        handle.emplace(spawn_worker(spec, catalog, width, height));
        detail = handle->identity_string();
        return CheckStatus::pass;
    }));
    if (!handle) {
        for (const char* n : {"requests", "determinism", "malformed-tolerance", "framing", "request-ids", "shutdown"}) {
            report.checks.push_back({n, CheckStatus::fail, "not run: handshake failed"});
        }
        return report;
    }
    WorkerHandle& h = *handle;
    report.worker = h.identity_string();
    const auto last = static_cast<ClassId>(catalog.size() - 1);

    if (spec.role == Role::generator) {
        std::vector<ImageSample> got;
        report.checks.push_back(run_check("requests", [&](std::string& detail) {
            got.push_back(request_generate(h, 0, 1, width, height));
            got.push_back(request_generate(h, last, 2, width, height));
            got.push_back(request_generate(h, 0, 1, width, height));
            detail = "3 generate requests answered";
            return CheckStatus::pass;
        }));
        report.checks.push_back(run_check("determinism", [&](std::string& detail) {
            if (got.size() < 3) {
                detail = "not run: requests failed";
                return CheckStatus::fail;
            }
            if (got[0].image == got[2].image) return CheckStatus::pass;
            detail = "repeated seed produced different pixels";
            return CheckStatus::warn;
        }));
    } else {
        std::vector<Verdict> got;
        report.checks.push_back(run_check("requests", [&](std::string& detail) {
            const auto a = probe_image(0, width, height, catalog.size());
            const auto b = probe_image(1, width, height, catalog.size());
            const auto before = h.accounting().pred_overrides;
            got.push_back(request_classify(h, a));
            got.push_back(request_classify(h, b));
            got.push_back(request_classify(h, a));
            detail = "3 classify requests answered with valid probability vectors";
            if (h.accounting().pred_overrides != before) {
                detail = "worker pred disagreed with argmax(probs)";
                return CheckStatus::warn;
            }
            return CheckStatus::pass;
        }));
        report.checks.push_back(run_check("determinism", [&](std::string& detail) {
            if (got.size() < 3) {
                detail = "not run: requests failed";
                return CheckStatus::fail;
            }
            if (got[0] == got[2]) return CheckStatus::pass;
            detail = "repeated image produced a different verdict";
            return CheckStatus::warn;
        }));
    }

    report.checks.push_back(run_check("malformed-tolerance", [&](std::string& detail) {
        if (!h.live()) {
            detail = "connection lost";
            return CheckStatus::fail;
        }
        auto& ch = ConformanceAccess::channel(h);
        if (!ch.write_line("{this is not json")) throw ProtocolError("write failed");
        std::string line;
        const double timeout = spec.role == Role::generator ? spec.generate_timeout : spec.classify_timeout;
        const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(timeout));
        if (ch.read_line(line, deadline) != LineChannel::ReadStatus::line) {
            detail = "no error reply to a malformed frame";
            return CheckStatus::fail;
        }
        json reply;
        try {
            reply = json::parse(line);
        } catch (const json::parse_error&) {
            ++ConformanceAccess::accounting(h).malformed_frames;
            detail = "reply to malformed frame is not JSON";
            return CheckStatus::fail;
        }
        if (!reply.is_object() || reply.value("type", "") != "error") {
            detail = "expected an error frame, got " + line.substr(0, 120);
            return CheckStatus::fail;
        }
        // the worker must still serve requests afterwards
        if (spec.role == Role::generator) {
            request_generate(h, 0, 3, width, height);
        } else {
            request_classify(h, probe_image(0, width, height, catalog.size()));
        }
        detail = "error reply, worker stayed alive";
        return CheckStatus::pass;
    }));

    report.checks.push_back(run_check("framing", [&](std::string& detail) {
        const auto bad = h.accounting().malformed_frames;
        if (bad == 0) return CheckStatus::pass;
        detail = std::to_string(bad) + " non-JSON frame(s) received";
        return CheckStatus::fail;
    }));

    report.checks.push_back(run_check("request-ids", [&](std::string& detail) {
        const auto& a = h.accounting();
        detail = std::to_string(a.sent) + " sent, " + std::to_string(a.responses) + " answered, " +
                 std::to_string(a.terminal() - a.responses) + " failed";
        if (a.terminal() != a.sent) return CheckStatus::fail;
        if (a.stale_replies != 0) return CheckStatus::warn;
        return a.responses == a.sent ? CheckStatus::pass : CheckStatus::fail;
    }));

    report.checks.push_back(run_check("shutdown", [&](std::string& detail) {
        const bool was_live = h.live();
        shutdown_worker(h);
        if (!was_live) {
            detail = "connection was already lost";
            return CheckStatus::fail;
        }
        if (h.forced_termination()) {
            detail = "worker did not exit within the grace period; terminated";
            return CheckStatus::fail;
        }
        if (h.exit_code() && *h.exit_code() != 0) {
            detail = "exit code " + std::to_string(*h.exit_code());
            return CheckStatus::fail;
        }
        return CheckStatus::pass;
    }));
    return report;
}

}  // namespace valigen

#pragma once

#include <string>
#include <vector>

#include "valigen/catalog.hpp"
#include "valigen/protocol.hpp"

namespace valigen {

enum class CheckStatus { pass, warn, fail };
const char* to_string(CheckStatus s);

struct ConformanceCheck {
    std::string name;
    CheckStatus status = CheckStatus::pass;
    std::string detail;
};

struct ConformanceReport {
    Role role = Role::generator;
    std::string worker;
    std::vector<ConformanceCheck> checks;

    bool passed() const;  // no check failed; warnings allowed
    const ConformanceCheck* find(std::string_view name) const;
    std::string to_text() const;
};

/// Scripted exchange against one endpoint: handshake, three role requests
/// (the third repeats the first as a determinism probe), a malformed-frame
/// probe, framing and id discipline, and shutdown. Never throws for worker
/// misbehaviour; failures become report entries.
ConformanceReport conformance_check(const EndpointSpec& spec, const ClassCatalog& catalog, int width = 32,
                                    int height = 32);

}  // namespace valigen

#pragma once

#include <string>
#include <vector>

namespace valigen {

/// Entry point of the `valigen` tool. Returns 0 on success, 1 on a domain
/// error, 2 on a usage error. Diagnostics go to stderr.
int dispatch(const std::vector<std::string>& argv);

/// Standalone reference worker (`valigen worker reference ...`).
int run_reference_worker_main(const std::vector<std::string>& argv);

}  // namespace valigen

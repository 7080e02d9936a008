#pragma once

#include <filesystem>
#include <string_view>

#include "valigen/run_manifest.hpp"

namespace valigen {

/// A run directory: manifest.json is written first (completed=false) together
/// with config.json, and rewritten with completed=true once all artifacts are
/// in place, so an interrupted run is recognisable.
class RunDirectory {
public:
    /// Creates `dir` (must not already hold a manifest).
    static RunDirectory create(const std::filesystem::path& dir, RunManifest manifest, std::string_view config_text);

    const std::filesystem::path& path() const noexcept { return path_; }
    const RunManifest& manifest() const noexcept { return manifest_; }

    void mark_completed();

private:
    RunDirectory(std::filesystem::path p, RunManifest m) : path_(std::move(p)), manifest_(std::move(m)) {}
    void write_manifest() const;

    std::filesystem::path path_;
    RunManifest manifest_;
};

std::string new_run_id();
RunManifest load_run_manifest(const std::filesystem::path& dir);
bool run_completed(const std::filesystem::path& dir);

}  // namespace valigen

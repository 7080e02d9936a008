#include "valigen/run_directory.hpp"

#include <random>

#include "valigen/error.hpp"
#include "valigen/util.hpp"

namespace valigen {

namespace fs = std::filesystem;

RunDirectory RunDirectory::create(const fs::path& dir, RunManifest manifest, std::string_view config_text) {
    if (fs::exists(dir / "manifest.json")) throw DataError("run directory already used: " + dir.string());
    fs::create_directories(dir);
    manifest.completed = false;
    RunDirectory rd(dir, std::move(manifest));
    rd.write_manifest();
    write_text_file(dir / "config.json", config_text);
    return rd;
}

void RunDirectory::write_manifest() const {
    const auto tmp = path_ / "manifest.json.tmp";
    write_text_file(tmp, to_json(manifest_).dump(2) + "\n");
    fs::rename(tmp, path_ / "manifest.json");
}

void RunDirectory::mark_completed() {
    manifest_.completed = true;
    write_manifest();
}

std::string new_run_id() {
    std::random_device rd;
    const auto r = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    char suffix[9];
    std::snprintf(suffix, sizeof suffix, "%08x", static_cast<unsigned>(r & 0xFFFFFFFFu));
    std::string ts = utc_timestamp();
    std::erase(ts, ':');
    std::erase(ts, '-');
    return ts + "-" + suffix;
}

RunManifest load_run_manifest(const fs::path& dir) {
    try {
        return run_manifest_from_json(nlohmann::json::parse(read_text_file(dir / "manifest.json")));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("bad manifest.json: ") + e.what());
    }
}

bool run_completed(const fs::path& dir) {
    try {
        return load_run_manifest(dir).completed;
    } catch (const Error&) {
        return false;
    }
}

}  // namespace valigen

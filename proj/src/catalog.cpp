#include "valigen/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include <json.hpp>

#include "valigen/error.hpp"
#include "valigen/util.hpp"

namespace valigen {

using nlohmann::json;

ClassCatalog::ClassCatalog(std::vector<ClassDef> classes) : classes_(std::move(classes)) {
    if (classes_.size() < 2) throw DataError("catalog needs k >= 2 classes");
    std::sort(classes_.begin(), classes_.end(),
              [](const ClassDef& a, const ClassDef& b) { return a.id < b.id; });
    std::set<std::string> names;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        const auto& c = classes_[i];
        if (i > 0 && c.id == classes_[i - 1].id) {
            throw DataError("duplicate class id " + std::to_string(c.id));
        }
        if (c.id != static_cast<ClassId>(i)) throw DataError("non-dense ids");
        if (c.name.empty()) throw DataError("empty class name for id " + std::to_string(c.id));
        if (c.prompt.empty()) throw DataError("empty prompt for class " + c.name);
        if (!names.insert(c.name).second) throw DataError("duplicate class name " + c.name);
    }
    try {
        digest_ = sha256_hex(canonical_json());
    } catch (const json::type_error&) {
        throw DataError("catalog text is not valid UTF-8");
    }
}

const ClassDef& ClassCatalog::at(ClassId id) const {
    if (!contains(id)) throw DataError("class id " + std::to_string(id) + " outside catalog");
    return classes_[static_cast<std::size_t>(id)];
}

std::optional<ClassId> ClassCatalog::resolve(std::string_view id_or_name) const {
    int id = -1;
    const auto* end = id_or_name.data() + id_or_name.size();
    if (auto [p, ec] = std::from_chars(id_or_name.data(), end, id); ec == std::errc{} && p == end) {
        if (contains(id)) return id;
        return std::nullopt;
    }
    for (const auto& c : classes_) {
        if (c.name == id_or_name) return c.id;
    }
    return std::nullopt;
}

std::string ClassCatalog::canonical_json() const {
    json arr = json::array();
    for (const auto& c : classes_) {
        arr.push_back(json{{"id", c.id}, {"name", c.name}, {"prompt", c.prompt}});
    }
    // nlohmann::json stores objects in std::map, so dump() emits sorted keys.
    return json{{"classes", arr}}.dump();
}

std::string default_prompt(std::string_view class_name) {
    return "histopathology patch of " + std::string(class_name) + ", H&E stain";
}

const ClassCatalog& default_catalog() {
    static const ClassCatalog catalog = [] {
        static constexpr const char* kNames[] = {
            "adipose",       "background",          "debris",
            "lymphocytes",   "mucus",               "smooth muscle",
            "normal colon mucosa", "cancer-associated stroma", "adenocarcinoma epithelium",
        };
        std::vector<ClassDef> defs;
        for (int i = 0; i < 9; ++i) defs.push_back({i, kNames[i], default_prompt(kNames[i])});
        return ClassCatalog(std::move(defs));
    }();
    return catalog;
}

ClassCatalog catalog_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("catalog parse error: ") + e.what());
    }
    if (!doc.is_object()) throw DataError("catalog parse error: top level must be an object");
    for (const auto& [key, _] : doc.items()) {
        if (key != "classes") throw DataError("catalog: unknown field '" + key + "'");
    }
    if (!doc.contains("classes") || !doc["classes"].is_array()) {
        throw DataError("catalog: missing 'classes' array");
    }
    std::vector<ClassDef> defs;
    for (const auto& entry : doc["classes"]) {
        if (!entry.is_object()) throw DataError("catalog: class entry must be an object");
        for (const auto& [key, _] : entry.items()) {
            if (key != "id" && key != "name" && key != "prompt") {
                throw DataError("catalog: unknown field '" + key + "'");
            }
        }
        if (!entry.contains("id") || !entry["id"].is_number_integer()) {
            throw DataError("catalog: class entry needs integer 'id'");
        }
        if (!entry.contains("name") || !entry["name"].is_string()) {
            throw DataError("catalog: class entry needs string 'name'");
        }
        ClassDef def;
        def.id = entry["id"].get<int>();
        def.name = entry["name"].get<std::string>();
        if (entry.contains("prompt")) {
            if (!entry["prompt"].is_string()) throw DataError("catalog: 'prompt' must be a string");
            def.prompt = entry["prompt"].get<std::string>();
        } else {
            def.prompt = default_prompt(def.name);
        }
        defs.push_back(std::move(def));
    }
    return ClassCatalog(std::move(defs));
}

ClassCatalog catalog_load(const std::filesystem::path& path) {
    return catalog_from_json(read_text_file(path));
}

}  // namespace valigen

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace valigen {

using ClassId = int;

struct ClassDef {
    ClassId id = 0;
    std::string name;
    std::string prompt;

    bool operator==(const ClassDef&) const = default;
};

/// Ordered, dense set of classes. Immutable once constructed; the constructor
/// enforces dense ids, unique non-empty names, non-empty prompts and k >= 2.
class ClassCatalog {
public:
    explicit ClassCatalog(std::vector<ClassDef> classes);

    std::size_t size() const noexcept { return classes_.size(); }
    const std::vector<ClassDef>& classes() const noexcept { return classes_; }
    const ClassDef& at(ClassId id) const;
    bool contains(ClassId id) const noexcept { return id >= 0 && static_cast<std::size_t>(id) < size(); }

    /// Resolves a class argument given either as a decimal id or as a name.
    std::optional<ClassId> resolve(std::string_view id_or_name) const;

    /// `{"classes":[{"id":..,"name":..,"prompt":..},...]}` with sorted keys and no whitespace.
    std::string canonical_json() const;
    /// Lowercase hex SHA-256 of canonical_json().
    const std::string& digest() const noexcept { return digest_; }

    bool operator==(const ClassCatalog& other) const { return classes_ == other.classes_; }

private:
    std::vector<ClassDef> classes_;
    std::string digest_;
};

std::string default_prompt(std::string_view class_name);

/// The nine colorectal tissue classes in source-dataset label order.
const ClassCatalog& default_catalog();

ClassCatalog catalog_from_json(std::string_view text);
ClassCatalog catalog_load(const std::filesystem::path& path);

}  // namespace valigen

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "valigen/catalog.hpp"
#include "valigen/image.hpp"

namespace valigen {

struct ManifestEntry {
    std::string relative_path;
    ClassId class_id = 0;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
    std::vector<std::size_t> counts_per_class;  // length k
};

/// Parses a `path,label_id` CSV. Every referenced file must exist under root.
DatasetManifest ingest_manifest(const std::filesystem::path& csv_path, const std::filesystem::path& root,
                                std::size_t k);
/// Same, from CSV text; `check_files` disables the existence check for synthetic manifests.
DatasetManifest parse_manifest(std::string_view csv_text, const std::filesystem::path& root, std::size_t k,
                               bool check_files = true);
std::string manifest_to_csv(const DatasetManifest& m);

/// Exact rational in (0, 1).
struct Fraction {
    std::uint64_t num = 4;
    std::uint64_t den = 5;

    /// Accepts "0.8", "4/5" or "80%".
    static Fraction parse(std::string_view text);
};

struct SplitSpec {
    Fraction train_fraction{};
    std::uint64_t seed = 0;
};

/// round(fraction * n) with halves rounded up.
std::size_t train_count_for(std::size_t n, Fraction f);

struct SplitResult {
    DatasetManifest train;
    DatasetManifest test;
};

/// Per-class seeded shuffle; train takes round-half-up(fraction * n_c) of each
/// class and test the remainder. Both outputs keep the input's relative order.
SplitResult stratified_split(const DatasetManifest& manifest, const SplitSpec& spec);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct AugmentSpec {
    Interval rotation_degrees{-15.0, 15.0};
    Interval zoom_factor{0.9, 1.1};
    Interval contrast_factor{0.8, 1.2};

    void validate() const;
    static AugmentSpec from_json(std::string_view text);
};

/// Random rotation about the centre, centre zoom, then per-channel contrast
/// around 128. Bilinear sampling with edge replication; pure in (img, spec, seed).
ImageBuffer augment_image(const ImageBuffer& img, const AugmentSpec& spec, std::uint64_t seed);

/// Same transform with explicit parameters.
ImageBuffer apply_augmentation(const ImageBuffer& img, double rotation_degrees, double zoom, double contrast);

}  // namespace valigen

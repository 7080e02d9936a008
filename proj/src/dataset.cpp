#include "valigen/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "valigen/error.hpp"
#include "valigen/rng.hpp"
#include "valigen/util.hpp"

namespace valigen {

namespace {

std::string_view trim_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

}  // namespace

DatasetManifest parse_manifest(std::string_view csv_text, const std::filesystem::path& root, std::size_t k,
                               bool check_files) {
    DatasetManifest m;
    m.root = root;
    m.counts_per_class.assign(k, 0);
    std::set<std::string> seen;

    std::size_t line_no = 0;
    bool header_seen = false;
    while (!csv_text.empty()) {
        const auto nl = csv_text.find('\n');
        std::string_view line = trim_cr(csv_text.substr(0, nl));
        csv_text = nl == std::string_view::npos ? std::string_view{} : csv_text.substr(nl + 1);
        ++line_no;
        if (!header_seen) {
            if (line != "path,label_id") throw DataError("manifest: expected header 'path,label_id'");
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
            throw DataError("manifest: malformed row at line " + std::to_string(line_no));
        }
        const auto path = line.substr(0, comma);
        const auto label = line.substr(comma + 1);
        int id = -1;
        auto [p, ec] = std::from_chars(label.data(), label.data() + label.size(), id);
        if (path.empty() || ec != std::errc{} || p != label.data() + label.size()) {
            throw DataError("manifest: malformed row at line " + std::to_string(line_no));
        }
        if (id < 0 || static_cast<std::size_t>(id) >= k) {
            throw DataError("manifest: unknown class_id " + std::string(label) + " at line " +
                            std::to_string(line_no));
        }
        if (!seen.insert(std::string(path)).second) {
            throw DataError("manifest: duplicate path " + std::string(path));
        }
        if (check_files && !std::filesystem::exists(root / std::string(path))) {
            throw DataError("manifest: missing file " + (root / std::string(path)).string());
        }
        m.entries.push_back({std::string(path), id});
        ++m.counts_per_class[static_cast<std::size_t>(id)];
    }
    if (!header_seen) throw DataError("manifest: expected header 'path,label_id'");
    if (m.entries.empty()) throw DataError("empty dataset");
    return m;
}

DatasetManifest ingest_manifest(const std::filesystem::path& csv_path, const std::filesystem::path& root,
                                std::size_t k) {
    return parse_manifest(read_text_file(csv_path), root, k, true);
}

std::string manifest_to_csv(const DatasetManifest& m) {
    std::string out = "path,label_id\n";
    for (const auto& e : m.entries) {
        out += e.relative_path;
        out += ',';
        out += std::to_string(e.class_id);
        out += '\n';
    }
    return out;
}

Fraction Fraction::parse(std::string_view text) {
    auto fail = [&] { return DataError("invalid fraction '" + std::string(text) + "'"); };
    Fraction f;
    auto parse_u = [&](std::string_view s) {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) throw fail();
        return v;
    };
    if (auto slash = text.find('/'); slash != std::string_view::npos) {
        f.num = parse_u(text.substr(0, slash));
        f.den = parse_u(text.substr(slash + 1));
    } else {
        std::uint64_t scale = 1;
        std::string_view body = text;
        if (!body.empty() && body.back() == '%') {
            body.remove_suffix(1);
            scale = 100;
        }
        const auto dot = body.find('.');
        std::string digits(body.substr(0, dot));
        std::uint64_t den = scale;
        if (dot != std::string_view::npos) {
            const auto frac = body.substr(dot + 1);
            if (frac.size() > 12) throw fail();
            digits += frac;
            for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        }
        f.num = parse_u(digits);
        f.den = den;
    }
    if (f.den == 0 || f.num == 0 || f.num >= f.den) {
        throw DataError("train fraction must lie strictly between 0 and 1");
    }
    const auto g = std::gcd(f.num, f.den);
    f.num /= g;
    f.den /= g;
    return f;
}

std::size_t train_count_for(std::size_t n, Fraction f) {
    // floor(n*num/den + 1/2) in integers
    return static_cast<std::size_t>((2 * f.num * n + f.den) / (2 * f.den));
}

SplitResult stratified_split(const DatasetManifest& manifest, const SplitSpec& spec) {
    const auto& f = spec.train_fraction;
    if (f.den == 0 || f.num == 0 || f.num >= f.den) {
        throw DataError("train fraction must lie strictly between 0 and 1");
    }
    const std::size_t k = manifest.counts_per_class.size();
    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        by_class[static_cast<std::size_t>(manifest.entries[i].class_id)].push_back(i);
    }
    std::vector<bool> in_train(manifest.entries.size(), false);
    const std::uint64_t split_seed = derive_seed(spec.seed, purpose::kSplit);
    for (std::size_t c = 0; c < k; ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) continue;
        if (idx.size() < 2) {
            throw DataError("class " + std::to_string(c) + " has fewer than 2 entries; cannot split");
        }
        SplitMix64 rng(mix_seed(split_seed, c));
        for (std::size_t i = idx.size() - 1; i > 0; --i) {
            std::swap(idx[i], idx[rng.below(i + 1)]);
        }
        const std::size_t n_train = train_count_for(idx.size(), f);
        for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = true;
    }
    SplitResult out;
    for (auto* part : {&out.train, &out.test}) {
        part->root = manifest.root;
        part->counts_per_class.assign(k, 0);
    }
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        auto& part = in_train[i] ? out.train : out.test;
        part.entries.push_back(manifest.entries[i]);
        ++part.counts_per_class[static_cast<std::size_t>(manifest.entries[i].class_id)];
    }
    return out;
}

void AugmentSpec::validate() const {
    auto check = [](const Interval& iv, const char* name, bool positive) {
        if (!(iv.lo <= iv.hi)) throw DataError(std::string("augment: empty interval for ") + name);
        if (positive && !(iv.lo > 0.0)) throw DataError(std::string("augment: ") + name + " must be positive");
    };
    check(rotation_degrees, "rotation_degrees", false);
    check(zoom_factor, "zoom_factor", true);
    check(contrast_factor, "contrast_factor", true);
}

AugmentSpec AugmentSpec::from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("augment spec parse error: ") + e.what());
    }
    AugmentSpec spec;
    auto read = [&](const char* key, Interval& iv) {
        if (!j.contains(key)) return;
        const auto& a = j[key];
        if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
            throw DataError(std::string("augment spec: '") + key + "' must be [lo, hi]");
        }
        iv = {a[0].get<double>(), a[1].get<double>()};
    };
    for (const auto& [key, _] : j.items()) {
        if (key != "rotation_degrees" && key != "zoom_factor" && key != "contrast_factor") {
            throw DataError("augment spec: unknown field '" + key + "'");
        }
    }
    read("rotation_degrees", spec.rotation_degrees);
    read("zoom_factor", spec.zoom_factor);
    read("contrast_factor", spec.contrast_factor);
    spec.validate();
    return spec;
}

namespace {

void exact_sin_cos(double degrees, double& s, double& c) {
    const double turns = degrees / 90.0;
    if (turns == std::floor(turns)) {
        static constexpr double kSin[] = {0, 1, 0, -1};
        static constexpr double kCos[] = {1, 0, -1, 0};
        const auto q = static_cast<long long>(turns);
        const auto i = static_cast<std::size_t>(((q % 4) + 4) % 4);
        s = kSin[i];
        c = kCos[i];
        return;
    }
    const double rad = degrees * std::numbers::pi / 180.0;
    s = std::sin(rad);
    c = std::cos(rad);
}

}  // namespace

ImageBuffer apply_augmentation(const ImageBuffer& img, double rotation_degrees, double zoom, double contrast) {
    const int w = img.width();
    const int h = img.height();
    const double cx = (w - 1) / 2.0;
    const double cy = (h - 1) / 2.0;
    double s = 0, c = 1;
    exact_sin_cos(rotation_degrees, s, c);

    auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
    std::vector<std::uint8_t> out(img.pixels().size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // inverse zoom, then inverse rotation
            const double zx = (x - cx) / zoom;
            const double zy = (y - cy) / zoom;
            const double sx = cx + zx * c - zy * s;
            const double sy = cy + zx * s + zy * c;
            const double fx = std::floor(sx);
            const double fy = std::floor(sy);
            const double ax = sx - fx;
            const double ay = sy - fy;
            const int x0 = clampi(static_cast<int>(fx), 0, w - 1);
            const int x1 = clampi(static_cast<int>(fx) + 1, 0, w - 1);
            const int y0 = clampi(static_cast<int>(fy), 0, h - 1);
            const int y1 = clampi(static_cast<int>(fy) + 1, 0, h - 1);
            for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
                const double top = img.at(x0, y0, ch) * (1 - ax) + img.at(x1, y0, ch) * ax;
                const double bot = img.at(x0, y1, ch) * (1 - ax) + img.at(x1, y1, ch) * ax;
                const double v = top * (1 - ay) + bot * ay;
                const double adjusted = 128.0 + contrast * (v - 128.0);
                out[(static_cast<std::size_t>(y) * w + x) * 3 + ch] =
                    static_cast<std::uint8_t>(std::clamp(std::round(adjusted), 0.0, 255.0));
            }
        }
    }
    return ImageBuffer(w, h, std::move(out));
}

ImageBuffer augment_image(const ImageBuffer& img, const AugmentSpec& spec, std::uint64_t seed) {
    spec.validate();
    SplitMix64 rng(derive_seed(seed, purpose::kAugment));
    const double rotation = rng.uniform(spec.rotation_degrees.lo, spec.rotation_degrees.hi);
    const double zoom = rng.uniform(spec.zoom_factor.lo, spec.zoom_factor.hi);
    const double contrast = rng.uniform(spec.contrast_factor.lo, spec.contrast_factor.hi);
    return apply_augmentation(img, rotation, zoom, contrast);
}

}  // namespace valigen

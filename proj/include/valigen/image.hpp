#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "valigen/catalog.hpp"

namespace valigen {

/// Row-major 8-bit RGB pixels.
class ImageBuffer {
public:
    static constexpr int kChannels = 3;
    static constexpr int kMinSide = 4;

    ImageBuffer(int width, int height, std::vector<std::uint8_t> pixels);
    /// Constant-colour image.
    ImageBuffer(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }

    std::uint8_t at(int x, int y, int channel) const noexcept {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + channel];
    }

    bool operator==(const ImageBuffer&) const = default;

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> pixels_;
};

/// Lowercase hex SHA-256 over width, height and pixel bytes.
std::string pixel_hash(const ImageBuffer& img);

enum class SampleSource { real, generated, augmented };

const char* to_string(SampleSource s);

struct ImageSample {
    ImageBuffer image;
    std::optional<ClassId> class_id;
    SampleSource source = SampleSource::real;
    std::optional<std::uint64_t> seed;
    std::optional<int> attempt_index;
    std::string worker_id;
};

/// Checks provenance invariants (generated samples carry seed and attempt >= 1,
/// class ids are inside the catalog). Throws DataError.
void validate_sample(const ImageSample& sample, const ClassCatalog& catalog);

}  // namespace valigen

#include "valigen/png_codec.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <string>

#include "valigen/error.hpp"

namespace valigen {

namespace {

struct ReadCursor {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
};

struct ErrorSlot {
    char message[256] = "png error";
};

void on_png_error(png_structp png, png_const_charp msg) {
    auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(png));
    std::snprintf(slot->message, sizeof slot->message, "%s", msg);
    png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

void read_from_cursor(png_structp png, png_bytep out, png_size_t n) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + n > cur->size) png_error(png, "truncated stream");
    std::memcpy(out, cur->data + cur->pos, n);
    cur->pos += n;
}

void write_to_vector(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void flush_noop(png_structp) {}

// The libpng calls live in plain functions returning a status so that
// longjmp never crosses a frame with live C++ destructors beyond these
// pre-sized buffers.
bool decode_raw(ReadCursor& cur, ErrorSlot& err, std::vector<std::uint8_t>& rgb, int& width,
                int& height, int& channels_out, bool& too_deep) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        return false;
    }
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_set_read_fn(png, &cur, read_from_cursor);
    png_read_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth > 8) {
        too_deep = true;
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    // tRNS would otherwise become an alpha channel after expansion.
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS(png, info, nullptr, 0, nullptr);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    channels_out = png_get_channels(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    rgb.resize(rowbytes * static_cast<std::size_t>(height));
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = rgb.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

bool encode_raw(const ImageBuffer& img, ErrorSlot& err, std::vector<std::uint8_t>& out) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        return false;
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_set_write_fn(png, &out, write_to_vector, flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 3);
    png_write_info(png, info);
    const auto stride = static_cast<std::size_t>(img.width()) * ImageBuffer::kChannels;
    auto* base = const_cast<std::uint8_t*>(img.pixels().data());
    for (int y = 0; y < img.height(); ++y) rows[static_cast<std::size_t>(y)] = base + stride * y;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

}  // namespace

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw DataError("decode: not a PNG stream");
    }
    ReadCursor cur{bytes.data(), bytes.size(), 0};
    ErrorSlot err;
    std::vector<std::uint8_t> raw;
    int width = 0, height = 0, channels = 0;
    bool too_deep = false;
    if (!decode_raw(cur, err, raw, width, height, channels, too_deep)) {
        if (too_deep) throw DataError("decode: unsupported bit depth (only 8-bit and below)");
        throw DataError(std::string("decode: corrupt PNG stream: ") + err.message);
    }
    if (channels == 3) return ImageBuffer(width, height, std::move(raw));
    if (channels != 1) throw DataError("decode: unexpected channel count " + std::to_string(channels));
    std::vector<std::uint8_t> rgb(raw.size() * 3);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = raw[i];
    }
    return ImageBuffer(width, height, std::move(rgb));
}

std::vector<std::uint8_t> encode_image(const ImageBuffer& img) {
    ErrorSlot err;
    std::vector<std::uint8_t> out;
    out.reserve(img.pixels().size() / 2 + 128);
    if (!encode_raw(img, err, out)) throw Error(std::string("encode: ") + err.message);
    return out;
}

}  // namespace valigen

#include <doctest.h>

#include <png.h>

#include <algorithm>
#include <random>
#include <set>

#include "test_support.hpp"
#include "valigen/dataset.hpp"
#include "valigen/error.hpp"
#include "valigen/png_codec.hpp"

using namespace valigen;

namespace {

// Minimal independent PNG writer for formats the engine never emits.
std::vector<std::uint8_t> write_png(int w, int h, int color_type, int bit_depth,
                                    const std::vector<std::uint8_t>& rows_bytes) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
            auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
            v->insert(v->end(), data, data + len);
        },
        nullptr);
    png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_color pal[2] = {{10, 20, 30}, {200, 100, 50}};
        png_set_PLTE(png, info, pal, 2);
    }
    png_write_info(png, info);
    const std::size_t stride = rows_bytes.size() / static_cast<std::size_t>(h);
    for (int y = 0; y < h; ++y) {
        png_write_row(png, const_cast<png_bytep>(rows_bytes.data() + stride * static_cast<std::size_t>(y)));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

ImageBuffer random_image(std::mt19937_64& rng, int w, int h) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);
    for (auto& b : px) b = static_cast<std::uint8_t>(rng());
    return ImageBuffer(w, h, std::move(px));
}

DatasetManifest synthetic_manifest(const std::vector<std::size_t>& counts) {
    std::string csv = "path,label_id\n";
    for (std::size_t c = 0; c < counts.size(); ++c) {
        for (std::size_t i = 0; i < counts[c]; ++i) {
            csv += "c" + std::to_string(c) + "/img" + std::to_string(i) + ".png," + std::to_string(c) + "\n";
        }
    }
    return parse_manifest(csv, "/nonexistent", counts.size(), false);
}

void check_partition(const DatasetManifest& m, const SplitResult& r, Fraction f) {
    std::multiset<std::string> all, got;
    for (const auto& e : m.entries) all.insert(e.relative_path);
    for (const auto& e : r.train.entries) got.insert(e.relative_path);
    std::set<std::string> train_set(got.begin(), got.end());
    for (const auto& e : r.test.entries) {
        CHECK(train_set.count(e.relative_path) == 0);
        got.insert(e.relative_path);
    }
    CHECK(got == all);
    for (std::size_t c = 0; c < m.counts_per_class.size(); ++c) {
        // |train - (num/den) n| <= 1/2, kept in integers
        const auto lhs = static_cast<long long>(2 * f.den * r.train.counts_per_class[c]);
        const auto rhs = static_cast<long long>(2 * f.num * m.counts_per_class[c]);
        CHECK(std::llabs(lhs - rhs) <= static_cast<long long>(f.den));
        CHECK(r.train.counts_per_class[c] + r.test.counts_per_class[c] == m.counts_per_class[c]);
    }
}

}  // namespace

TEST_CASE("manifest ingestion") {
    auto dir = testing::scratch_dir("ingest");
    for (const char* f : {"a.png", "b.png", "c.png", "d.png"}) write_text_file(dir / f, "x");
    write_text_file(dir / "m.csv", "path,label_id\na.png,0\nb.png,1\nc.png,0\nd.png,1\n");
    auto m = ingest_manifest(dir / "m.csv", dir, 9);
    CHECK(m.entries.size() == 4);
    CHECK(m.counts_per_class == std::vector<std::size_t>{2, 2, 0, 0, 0, 0, 0, 0, 0});

    write_text_file(dir / "m.csv", "path,label_id\na.png,0\nzzz.png,1\n");
    CHECK_THROWS_WITH_AS(ingest_manifest(dir / "m.csv", dir, 9), doctest::Contains("zzz.png"), DataError);

    write_text_file(dir / "m.csv", "path,label_id\n");
    CHECK_THROWS_WITH_AS(ingest_manifest(dir / "m.csv", dir, 9), doctest::Contains("empty dataset"), DataError);

    CHECK_THROWS_AS(parse_manifest("path,label_id\na.png,9\n", dir, 9, false), DataError);
    CHECK_THROWS_AS(parse_manifest("path,label_id\na.png,x\n", dir, 9, false), DataError);
    CHECK_THROWS_AS(parse_manifest("path,label_id\na.png\n", dir, 9, false), DataError);
    CHECK_THROWS_AS(parse_manifest("path,label_id\na.png,1\na.png,2\n", dir, 9, false), DataError);
    CHECK_THROWS_AS(parse_manifest("file,label\na.png,1\n", dir, 9, false), DataError);
    CHECK_THROWS_AS(ingest_manifest(dir / "nope.csv", dir, 9), Error);

    auto again = parse_manifest(manifest_to_csv(m), dir, 9);
    CHECK(again.entries == m.entries);
}

TEST_CASE("fraction parsing and rounding") {
    auto f = Fraction::parse("0.8");
    CHECK((f.num == 4 && f.den == 5));
    f = Fraction::parse("4/5");
    CHECK((f.num == 4 && f.den == 5));
    f = Fraction::parse("80%");
    CHECK((f.num == 4 && f.den == 5));
    CHECK_THROWS_AS(Fraction::parse("1.5"), DataError);
    CHECK_THROWS_AS(Fraction::parse("abc"), DataError);
    CHECK_THROWS_AS(Fraction::parse("0"), DataError);
    CHECK(train_count_for(10, {4, 5}) == 8);
    CHECK(train_count_for(5, {4, 5}) == 4);
    CHECK(train_count_for(3, {1, 2}) == 2);  // 1.5 rounds up
    CHECK(train_count_for(1000, {4, 5}) == 800);
    CHECK(train_count_for(7, {4, 5}) == 6);  // 5.6
    CHECK(train_count_for(2, {4, 5}) == 2);  // 1.6
}

TEST_CASE("stratified split examples") {
    const Fraction f{4, 5};
    auto single = synthetic_manifest({10, 0});
    auto r = stratified_split(single, {f, 1});
    CHECK(r.train.counts_per_class[0] == 8);
    CHECK(r.test.counts_per_class[0] == 2);

    auto two = synthetic_manifest({5, 5});
    r = stratified_split(two, {f, 1});
    CHECK(r.train.counts_per_class == std::vector<std::size_t>{4, 4});
    CHECK(r.test.counts_per_class == std::vector<std::size_t>{1, 1});

    auto r2 = stratified_split(two, {f, 1});
    CHECK(r2.train.entries == r.train.entries);
    CHECK(r2.test.entries == r.test.entries);

    CHECK_THROWS_AS(stratified_split(synthetic_manifest({1, 5}), {f, 1}), DataError);
}

TEST_CASE("split is a seed-stable partition for random manifests") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng() % 8;
        std::vector<std::size_t> counts(k);
        for (auto& c : counts) c = 2 + rng() % 60;
        auto m = synthetic_manifest(counts);
        const Fraction f{1 + rng() % 9, 10};
        const std::uint64_t seed = rng();
        auto r = stratified_split(m, {f, seed});
        check_partition(m, r, f);
        CHECK(stratified_split(m, {f, seed}).train.entries == r.train.entries);
    }
}

TEST_CASE("different split seeds pick different members") {
    auto m = synthetic_manifest({100, 100});
    auto a = stratified_split(m, {{4, 5}, 1});
    auto b = stratified_split(m, {{4, 5}, 2});
    CHECK(a.train.entries != b.train.entries);
}

TEST_CASE("augmentation fixed cases") {
    std::mt19937_64 rng(3);
    auto img = random_image(rng, 9, 7);

    AugmentSpec identity{{0, 0}, {1, 1}, {1, 1}};
    CHECK(augment_image(img, identity, 99) == img);

    SUBCASE("90 degrees permutes corners of a square grid") {
        auto sq = random_image(rng, 4, 4);
        AugmentSpec rot{{90, 90}, {1, 1}, {1, 1}};
        auto out = augment_image(sq, rot, 5);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                for (int ch = 0; ch < 3; ++ch) CHECK(out.at(x, y, ch) == sq.at(3 - y, x, ch));
        // corners (TL,TR,BL,BR) -> (TR,BR,TL,BL)
        CHECK(out.at(0, 0, 0) == sq.at(3, 0, 0));
        CHECK(out.at(3, 0, 0) == sq.at(3, 3, 0));
        CHECK(out.at(0, 3, 0) == sq.at(0, 0, 0));
        CHECK(out.at(3, 3, 0) == sq.at(0, 3, 0));
        // four quarter turns come back home
        auto back = out;
        for (int i = 0; i < 3; ++i) back = augment_image(back, rot, 5);
        CHECK(back == sq);
    }

    SUBCASE("contrast fixed point at 128") {
        ImageBuffer gray(6, 6, 128, 128, 128);
        AugmentSpec c2{{0, 0}, {1, 1}, {2, 2}};
        CHECK(augment_image(gray, c2, 1) == gray);
        ImageBuffer light(6, 6, 138, 100, 255);
        auto out = augment_image(light, c2, 1);
        CHECK(out.at(2, 2, 0) == 148);
        CHECK(out.at(2, 2, 1) == 72);
        CHECK(out.at(2, 2, 2) == 255);
    }
}

TEST_CASE("augmentation is pure and shape preserving") {
    std::mt19937_64 rng(4);
    const AugmentSpec spec;
    for (int trial = 0; trial < 30; ++trial) {
        const int w = 4 + static_cast<int>(rng() % 40);
        const int h = 4 + static_cast<int>(rng() % 40);
        auto img = random_image(rng, w, h);
        const std::uint64_t seed = rng();
        auto a = augment_image(img, spec, seed);
        CHECK(a.width() == w);
        CHECK(a.height() == h);
        CHECK(a == augment_image(img, spec, seed));
    }
    auto img = random_image(rng, 32, 32);
    CHECK(augment_image(img, spec, 1) != augment_image(img, spec, 2));
}

TEST_CASE("augment spec parsing") {
    auto s = AugmentSpec::from_json(R"({"rotation_degrees":[-5,5]})");
    CHECK(s.rotation_degrees.lo == -5);
    CHECK(s.zoom_factor.lo == 0.9);
    CHECK_THROWS_AS(AugmentSpec::from_json(R"({"rotation_degrees":[5,-5]})"), DataError);
    CHECK_THROWS_AS(AugmentSpec::from_json(R"({"zoom_factor":[0,1]})"), DataError);
    CHECK_THROWS_AS(AugmentSpec::from_json(R"({"shear":[0,1]})"), DataError);
}

TEST_CASE("PNG round trip is pixel exact") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto img = random_image(rng, 4 + static_cast<int>(rng() % 70), 4 + static_cast<int>(rng() % 70));
        CHECK(decode_image(encode_image(img)) == img);
    }
    ImageBuffer black(4, 4, 0, 0, 0);
    auto bytes = encode_image(black);
    REQUIRE(bytes.size() > 8);
    CHECK(bytes[1] == 'P');
    CHECK(decode_image(bytes) == black);
    CHECK(decode_image(encode_image(ImageBuffer(5, 6, 9, 8, 7))) == decode_image(encode_image(ImageBuffer(5, 6, 9, 8, 7))));
}

TEST_CASE("PNG decoding expands other formats") {
    SUBCASE("grayscale") {
        auto bytes = write_png(5, 4, PNG_COLOR_TYPE_GRAY, 8, std::vector<std::uint8_t>(20, 77));
        CHECK(decode_image(bytes) == ImageBuffer(5, 4, 77, 77, 77));
    }
    SUBCASE("rgba drops alpha") {
        std::vector<std::uint8_t> rows;
        for (int i = 0; i < 16; ++i) rows.insert(rows.end(), {1, 2, 3, 4});
        CHECK(decode_image(write_png(4, 4, PNG_COLOR_TYPE_RGB_ALPHA, 8, rows)) == ImageBuffer(4, 4, 1, 2, 3));
    }
    SUBCASE("palette") {
        std::vector<std::uint8_t> rows(16, 1);
        CHECK(decode_image(write_png(4, 4, PNG_COLOR_TYPE_PALETTE, 8, rows)) == ImageBuffer(4, 4, 200, 100, 50));
    }
    SUBCASE("16-bit is rejected") {
        auto bytes = write_png(4, 4, PNG_COLOR_TYPE_RGB, 16, std::vector<std::uint8_t>(4 * 4 * 6, 0));
        CHECK_THROWS_AS(decode_image(bytes), DataError);
    }
}

TEST_CASE("PNG decoding errors") {
    auto bytes = encode_image(ImageBuffer(16, 16, 10, 20, 30));
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
    CHECK_THROWS_AS(decode_image(truncated), DataError);
    CHECK_THROWS_AS(decode_image(std::vector<std::uint8_t>{1, 2, 3}), DataError);
    CHECK_THROWS_AS(decode_image(std::vector<std::uint8_t>{}), DataError);
}

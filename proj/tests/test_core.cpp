#include <doctest.h>

#include <random>
#include <set>

#include "test_support.hpp"
#include "valigen/catalog.hpp"
#include "valigen/error.hpp"
#include "valigen/image.hpp"
#include "valigen/rng.hpp"
#include "valigen/run_directory.hpp"
#include "valigen/util.hpp"

using namespace valigen;

TEST_CASE("default catalog has the nine tissue classes in order") {
    const auto& cat = default_catalog();
    REQUIRE(cat.size() == 9);
    const std::vector<std::string> names = {"adipose", "background", "debris", "lymphocytes", "mucus",
                                            "smooth muscle", "normal colon mucosa", "cancer-associated stroma",
                                            "adenocarcinoma epithelium"};
    std::set<ClassId> ids;
    for (std::size_t i = 0; i < names.size(); ++i) {
        CHECK(cat.at(static_cast<ClassId>(i)).name == names[i]);
        CHECK(cat.at(static_cast<ClassId>(i)).prompt == "histopathology patch of " + names[i] + ", H&E stain");
        ids.insert(cat.at(static_cast<ClassId>(i)).id);
    }
    CHECK(ids == std::set<ClassId>{0, 1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(cat.resolve("adipose") == 0);
    CHECK(cat.resolve("8") == 8);
    CHECK_FALSE(cat.resolve("9").has_value());
    CHECK_FALSE(cat.resolve("bone").has_value());
}

TEST_CASE("default catalog digest is stable") {
    // sha256 of the sorted-key compact JSON, computed outside the engine
    CHECK(default_catalog().digest() == "a83d48ca71af7be17483c15de6a5d700b21443d783db0ac85a3973dcdc55719d");
}

TEST_CASE("catalog loading") {
    auto dir = testing::scratch_dir("catalog");
    SUBCASE("valid 9-class file equals the default") {
        write_text_file(dir / "c.json", default_catalog().canonical_json());
        auto c = catalog_load(dir / "c.json");
        CHECK(c == default_catalog());
        CHECK(c.digest() == default_catalog().digest());
    }
    SUBCASE("non-dense ids") {
        write_text_file(dir / "c.json", R"({"classes":[{"id":0,"name":"a"},{"id":2,"name":"b"}]})");
        CHECK_THROWS_WITH_AS(catalog_load(dir / "c.json"), doctest::Contains("non-dense ids"), DataError);
    }
    SUBCASE("minimal k = 2 catalog, prompt defaults to the template") {
        write_text_file(dir / "c.json", R"({"classes":[{"id":1,"name":"b"},{"id":0,"name":"a"}]})");
        auto c = catalog_load(dir / "c.json");
        CHECK(c.size() == 2);
        CHECK(c.at(0).name == "a");
        CHECK(c.at(1).prompt == default_prompt("b"));
    }
    SUBCASE("rejections") {
        CHECK_THROWS_AS(catalog_from_json(R"({"classes":[{"id":0,"name":"a"}]})"), DataError);
        CHECK_THROWS_WITH(catalog_from_json(R"({"classes":[{"id":0,"name":"a"},{"id":0,"name":"b"}]})"),
                          doctest::Contains("duplicate class id"));
        CHECK_THROWS_AS(catalog_from_json(R"({"classes":[{"id":0,"name":"a"},{"id":1,"name":"a"}]})"), DataError);
        CHECK_THROWS_AS(catalog_from_json(R"({"classes":[{"id":0,"name":"a","x":1},{"id":1,"name":"b"}]})"), DataError);
        CHECK_THROWS_AS(catalog_from_json(R"({"classes":[{"id":0,"name":""},{"id":1,"name":"b"}]})"), DataError);
        CHECK_THROWS_AS(catalog_from_json("{not json"), DataError);
        CHECK_THROWS_AS(ClassCatalog({{0, "a", "p"}, {1, "b", "bad \xff byte"}}), DataError);
        CHECK_THROWS_AS(catalog_load(dir / "missing.json"), Error);
    }
}

TEST_CASE("catalog digest survives a serialize/parse round trip") {
    std::mt19937_64 rng(7);
    const std::vector<std::string> alphabet = {"a", "b", "z", " ", "X", "-", "_", ",", ".", "\"", "\\", "/", "é", "∂"};
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 8);
        std::vector<ClassDef> defs;
        for (int i = 0; i < k; ++i) {
            std::string name = "c" + std::to_string(i);
            std::string prompt;
            const int len = 1 + static_cast<int>(rng() % 20);
            for (int j = 0; j < len; ++j) prompt += alphabet[rng() % alphabet.size()];
            defs.push_back({i, name, prompt});
        }
        std::shuffle(defs.begin(), defs.end(), rng);
        ClassCatalog c(defs);
        auto back = catalog_from_json(c.canonical_json());
        CHECK(back == c);
        CHECK(back.digest() == c.digest());
    }
}

TEST_CASE("image buffer construction") {
    CHECK_THROWS_AS(ImageBuffer(4, 4, std::vector<std::uint8_t>(47)), DataError);
    CHECK_THROWS_AS(ImageBuffer(3, 4, std::vector<std::uint8_t>(36)), DataError);
    ImageBuffer img(4, 5, 1, 2, 3);
    CHECK(img.pixels().size() == 60);
    CHECK(img.at(3, 4, 2) == 3);
    ImageBuffer other(4, 5, 1, 2, 4);
    CHECK(pixel_hash(img) != pixel_hash(other));
    CHECK(pixel_hash(img) == pixel_hash(ImageBuffer(4, 5, 1, 2, 3)));
    // same bytes, different shape
    CHECK(pixel_hash(ImageBuffer(4, 5, 0, 0, 0)) != pixel_hash(ImageBuffer(5, 4, 0, 0, 0)));
}

TEST_CASE("sample validation") {
    ImageSample s{ImageBuffer(4, 4, 0, 0, 0), 3, SampleSource::generated, 9u, 1, "w"};
    CHECK_NOTHROW(validate_sample(s, default_catalog()));
    s.class_id = 9;
    CHECK_THROWS_AS(validate_sample(s, default_catalog()), DataError);
    s.class_id = 3;
    s.seed.reset();
    CHECK_THROWS_AS(validate_sample(s, default_catalog()), DataError);
}

TEST_CASE("splitmix64 reference stream") {
    SplitMix64 r(0);
    CHECK(r.next() == 0xE220A8397B1DCDAFULL);
    CHECK(r.next() == 0x6E789E6AA1B965F4ULL);
    CHECK(splitmix64(0) == 0xE220A8397B1DCDAFULL);
    SplitMix64 a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("rng helpers stay in range") {
    SplitMix64 r(123);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        CHECK(r.below(7) < 7u);
    }
    CHECK(r.uniform(2.5, 2.5) == 2.5);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("utility encodings") {
    CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 251};
    CHECK(base64_encode(bytes) == "AAEC+vs=");
    CHECK(base64_decode("AAEC+vs=") == bytes);
    CHECK(base64_decode("") .empty());
    CHECK_THROWS_AS(base64_decode("@@@@"), DataError);
    CHECK(format_fixed6(1.0) == "1.000000");
    CHECK(format_fixed6(-0.0) == "0.000000");
    CHECK(format_fixed6(1.0 / 128) == "0.007812");  // ties go to even
    CHECK(format_fixed6(3.0 / 128) == "0.023438");
    CHECK(natural_less("V2", "V10"));
    CHECK_FALSE(natural_less("V10", "V2"));
    CHECK(natural_less("V9", "V10"));
    CHECK(path_safe("smooth muscle") == "smooth_muscle");
    CHECK(path_safe("cancer-associated stroma") == "cancer-associated_stroma");
}

TEST_CASE("run directory lifecycle") {
    auto dir = testing::scratch_dir("rundir") / "run";
    RunManifest m;
    m.run_id = new_run_id();
    m.created_at = utc_timestamp();
    m.base_seed = 5;
    m.generator_identity = {"g", "v1", 10};
    m.validator_identity = {"c", "v2", std::nullopt};
    m.catalog_digest = default_catalog().digest();
    m.command = "eval";
    auto rd = RunDirectory::create(dir, m, "{}");
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    CHECK(std::filesystem::exists(dir / "config.json"));
    CHECK_FALSE(run_completed(dir));
    rd.mark_completed();
    CHECK(run_completed(dir));
    auto back = load_run_manifest(dir);
    CHECK(back.run_id == m.run_id);
    CHECK(back.generator_identity.checkpoint_step == 10);
    CHECK_FALSE(back.validator_identity.checkpoint_step.has_value());
    CHECK_THROWS_AS(RunDirectory::create(dir, m, "{}"), Error);
    CHECK(new_run_id() != new_run_id());
}

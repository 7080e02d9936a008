#include "valigen/reference_workers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "valigen/error.hpp"
#include "valigen/png_codec.hpp"
#include "valigen/rng.hpp"
#include "valigen/util.hpp"

namespace valigen::reference {

using nlohmann::json;

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, kPaletteSize> kPalette{{
    {235, 205, 175},
    {245, 245, 245},
    {120, 70, 50},
    {60, 40, 140},
    {170, 220, 200},
    {200, 120, 120},
    {220, 150, 200},
    {150, 150, 90},
    {90, 30, 90},
}};

constexpr int kTagSide = 2;

bool in_tag(int x, int y) { return x < kTagSide && y < kTagSide; }

}  // namespace

TextureRecipe recipe(ClassId class_id) {
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= kPaletteSize) {
        throw DataError("reference palette covers classes 0..8 only");
    }
    return {class_id, kPalette[static_cast<std::size_t>(class_id)], 4 + 2 * class_id};
}

void FidelityParams::validate() const {
    if (!(fidelity >= 0.0 && fidelity <= 1.0)) throw DataError("fidelity must lie in [0,1]");
    if (!(error_rate >= 0.0 && error_rate <= 1.0)) throw DataError("error rate must lie in [0,1]");
}

StubPolicy::StubPolicy(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {
    if (rows_.size() < 2) throw DataError("stub policy needs k >= 2");
    for (std::size_t t = 0; t < rows_.size(); ++t) {
        const auto& r = rows_[t];
        if (r.size() != rows_.size()) throw DataError("stub policy must be square");
        double sum = 0.0;
        for (double q : r) {
            if (!(q >= 0.0)) throw DataError("stub policy entries must be non-negative");
            sum += q;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw DataError("stub policy row " + std::to_string(t) + " sums to " + std::to_string(sum));
        }
    }
}

StubPolicy StubPolicy::identity(std::size_t k) {
    std::vector<std::vector<double>> rows(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) rows[i][i] = 1.0;
    return StubPolicy(std::move(rows));
}

StubPolicy StubPolicy::with_diagonal(std::size_t k, double p) {
    std::vector<std::vector<double>> rows(k, std::vector<double>(k, (1.0 - p) / static_cast<double>(k - 1)));
    for (std::size_t i = 0; i < k; ++i) rows[i][i] = p;
    return StubPolicy(std::move(rows));
}

StubPolicy StubPolicy::from_csv(std::string_view csv_text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in{std::string(csv_text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw DataError("stub matrix: bad number '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    return StubPolicy(std::move(rows));
}

StubPolicy StubPolicy::load_csv(const std::filesystem::path& path) { return from_csv(read_text_file(path)); }

ImageBuffer texture_generate(ClassId class_id, std::uint64_t seed, int width, int height,
                             const FidelityParams& params, std::size_t k) {
    params.validate();
    if (k < 2 || k > kPaletteSize) throw DataError("texture generator supports 2..9 classes");
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= k) throw DataError("class id outside catalog");
    if (width < 8 || height < 8) throw DataError("texture generator needs at least 8x8");

    SplitMix64 rng(derive_seed(seed, purpose::kTexture));
    ClassId rendered = class_id;
    if (rng.uniform() < params.error_rate) {
        auto other = static_cast<ClassId>(rng.below(k - 1));
        if (other >= class_id) ++other;
        rendered = other;
    }
    const TextureRecipe r = recipe(rendered);
    const double sigma = params.noise_sigma();

    std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y) {
        const double shade = (y % r.stripe_period == 0) ? kStripeDarkening : 1.0;
        for (int x = 0; x < width; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                double v = r.anchor_rgb[static_cast<std::size_t>(ch)] * shade;
                if (sigma > 0.0) v += sigma * rng.normal();
                px[(static_cast<std::size_t>(y) * width + x) * 3 + ch] =
                    static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
            }
        }
    }
    for (int y = 0; y < kTagSide; ++y) {
        for (int x = 0; x < kTagSide; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                px[(static_cast<std::size_t>(y) * width + x) * 3 + ch] = static_cast<std::uint8_t>(rendered);
            }
        }
    }
    return ImageBuffer(width, height, std::move(px));
}

std::optional<ClassId> read_tag(const ImageBuffer& img, std::size_t k) {
    const std::uint8_t v = img.at(0, 0, 0);
    for (int y = 0; y < kTagSide; ++y) {
        for (int x = 0; x < kTagSide; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                if (img.at(x, y, ch) != v) return std::nullopt;
            }
        }
    }
    if (v >= k) return std::nullopt;
    return static_cast<ClassId>(v);
}

std::array<double, 3> mean_rgb_excluding_tag(const ImageBuffer& img) {
    std::array<double, 3> sum{};
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (in_tag(x, y)) continue;
            for (int ch = 0; ch < 3; ++ch) sum[static_cast<std::size_t>(ch)] += img.at(x, y, ch);
        }
    }
    const double n = static_cast<double>(img.width()) * img.height() - kTagSide * kTagSide;
    for (auto& s : sum) s /= n;
    return sum;
}

Verdict centroid_classify(const ImageBuffer& img, std::size_t k) {
    if (k < 2 || k > kPaletteSize) throw DataError("centroid validator supports 2..9 classes");
    const auto mean = mean_rgb_excluding_tag(img);
    std::vector<double> logits(k);
    for (std::size_t c = 0; c < k; ++c) {
        double d2 = 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            const double d = mean[ch] - kPalette[c][ch];
            d2 += d * d;
        }
        logits[c] = -std::sqrt(d2) / kSoftmaxTemperature;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    std::vector<double> probs(k);
    for (std::size_t c = 0; c < k; ++c) z += probs[c] = std::exp(logits[c] - top);
    for (auto& p : probs) p /= z;
    Verdict v;
    // argmax on distances so ties cannot be broken by softmax rounding
    v.pred = argmax_lowest(logits);
    v.probs = std::move(probs);
    return v;
}

std::uint64_t stub_request_seed(std::uint64_t worker_seed, std::uint64_t request_counter) {
    return mix_seed(derive_seed(worker_seed, purpose::kStub), request_counter);
}

Verdict stub_classify(const ImageBuffer& img, const StubPolicy& policy, std::uint64_t seed) {
    const auto tag = read_tag(img, policy.size());
    if (!tag) throw DataError("stub requires tagged images");
    const auto& row = policy.row(static_cast<std::size_t>(*tag));
    SplitMix64 rng(seed);
    const double u = rng.uniform();
    std::size_t chosen = row.size() - 1;
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
        acc += row[c];
        if (u < acc && row[c] > 0.0) {
            chosen = c;
            break;
        }
    }
    // rounding slack at the top of the cumulative sum: take the last class with mass
    if (row[chosen] == 0.0) {
        for (std::size_t c = row.size(); c-- > 0;) {
            if (row[c] > 0.0) {
                chosen = c;
                break;
            }
        }
    }
    Verdict v;
    v.probs.assign(row.size(), 0.0);
    v.probs[chosen] = 1.0;
    v.pred = static_cast<ClassId>(chosen);
    return v;
}

WorkerIdentity default_identity(WorkerKind kind) {
    switch (kind) {
        case WorkerKind::generator: return {"reference-texture", "ref1", std::nullopt};
        case WorkerKind::centroid: return {"reference-centroid", "ref1", std::nullopt};
        case WorkerKind::stub: return {"reference-stub", "ref1", std::nullopt};
    }
    return {};
}

Role role_of(WorkerKind kind) { return kind == WorkerKind::generator ? Role::generator : Role::validator; }

namespace {

class ReferenceServer {
public:
    ReferenceServer(const WorkerParams& p, LineChannel& ch) : params_(p), ch_(ch) {}

    int run() {
        std::string line;
        for (;;) {
            if (ch_.read_line(line) == LineChannel::ReadStatus::eof) return 1;
            json frame;
            try {
                frame = json::parse(line);
            } catch (const json::parse_error& e) {
                reply(make_error_frame(nullptr, "bad_frame", std::string("not JSON: ") + e.what()));
                continue;
            }
            if (!frame.is_object() || !frame.contains("type") || !frame["type"].is_string()) {
                reply(make_error_frame(nullptr, "bad_frame", "frame must be an object with a string 'type'"));
                continue;
            }
            const json id = frame.contains("id") ? frame["id"] : json();
            const std::string type = frame["type"];
            try {
                if (type == "shutdown") return 0;
                if (type == "init") {
                    handle_init(frame);
                } else if (!catalog_) {
                    reply(make_error_frame(id, "not_initialized", "init must precede requests"));
                } else if (type == "generate") {
                    handle_generate(frame, id);
                } else if (type == "classify") {
                    handle_classify(frame, id);
                } else {
                    reply(make_error_frame(id, "unknown_type", "unsupported frame type '" + type + "'"));
                }
            } catch (const std::exception& e) {
                reply(make_error_frame(id, "bad_request", e.what()));
            }
        }
    }

private:
    void reply(const json& frame) { ch_.write_line(frame.dump()); }

    void handle_init(const json& frame) {
        const Role mine = role_of(params_.kind);
        if (frame.value("role", "") != to_string(mine)) {
            reply(make_error_frame(nullptr, "role_mismatch",
                                   std::string("this worker serves the ") + to_string(mine) + " role"));
            return;
        }
        ClassCatalog catalog = catalog_from_json(frame.at("catalog").dump());
        if (catalog.size() > kPaletteSize) {
            reply(make_error_frame(nullptr, "unsupported_catalog", "reference workers support at most 9 classes"));
            return;
        }
        if (params_.kind == WorkerKind::stub && (!params_.stub_policy || params_.stub_policy->size() != catalog.size())) {
            reply(make_error_frame(nullptr, "unsupported_catalog", "stub matrix size does not match the catalog"));
            return;
        }
        const auto& image = frame.at("image");
        width_ = image.at("width").get<int>();
        height_ = image.at("height").get<int>();
        if (image.value("format", "") != "png-base64") {
            reply(make_error_frame(nullptr, "unsupported_format", "only png-base64 images are supported"));
            return;
        }
        if (params_.kind == WorkerKind::generator && (width_ < 8 || height_ < 8)) {
            reply(make_error_frame(nullptr, "unsupported_format", "texture generator needs at least 8x8"));
            return;
        }
        catalog_.emplace(std::move(catalog));
        json ready{{"type", "ready"}, {"name", params_.identity.name}, {"version_tag", params_.identity.version_tag}};
        if (params_.identity.checkpoint_step) ready["checkpoint_step"] = *params_.identity.checkpoint_step;
        if (params_.announce_digest) {
            ready["catalog_digest"] = catalog_->digest();
            ready["role"] = to_string(mine);
        }
        reply(ready);
    }

    void handle_generate(const json& frame, const json& id) {
        if (params_.kind != WorkerKind::generator) {
            reply(make_error_frame(id, "unsupported", "validator workers do not generate"));
            return;
        }
        const auto class_id = frame.at("class_id").get<ClassId>();
        const auto seed = frame.at("seed").get<std::uint64_t>();
        const auto img = texture_generate(class_id, seed, width_, height_, params_.fidelity, catalog_->size());
        reply(json{{"type", "image"}, {"id", id}, {"png_b64", base64_encode(encode_image(img))}});
    }

    void handle_classify(const json& frame, const json& id) {
        if (params_.kind == WorkerKind::generator) {
            reply(make_error_frame(id, "unsupported", "generator workers do not classify"));
            return;
        }
        const auto img = decode_image(base64_decode(frame.at("png_b64").get<std::string>()));
        Verdict v = params_.kind == WorkerKind::centroid
                        ? centroid_classify(img, catalog_->size())
                        : stub_classify(img, *params_.stub_policy, stub_request_seed(params_.seed, counter_++));
        reply(json{{"type", "verdict"}, {"id", id}, {"probs", v.probs}, {"pred", v.pred}});
    }

    const WorkerParams& params_;
    LineChannel& ch_;
    std::optional<ClassCatalog> catalog_;
    int width_ = 0;
    int height_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace

int serve(const WorkerParams& params, LineChannel& ch) {
    if (params.identity.name.empty()) {
        WorkerParams p = params;
        p.identity = default_identity(p.kind);
        return ReferenceServer(p, ch).run();
    }
    return ReferenceServer(params, ch).run();
}

EndpointSpec inproc_endpoint(WorkerParams params) {
    params.fidelity.validate();
    if (params.kind == WorkerKind::stub && !params.stub_policy) throw DataError("stub worker needs a policy");
    if (params.identity.name.empty()) params.identity = default_identity(params.kind);
    EndpointSpec spec;
    spec.transport = Transport::inproc;
    spec.role = role_of(params.kind);
    spec.inproc = [p = std::move(params)](LineChannel& ch) { return serve(p, ch); };
    return spec;
}

}  // namespace valigen::reference

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "valigen/catalog.hpp"
#include "valigen/channel.hpp"
#include "valigen/image.hpp"
#include "valigen/protocol.hpp"

namespace valigen::reference {

inline constexpr std::size_t kPaletteSize = 9;
inline constexpr double kStripeDarkening = 0.7;
inline constexpr double kSoftmaxTemperature = 20.0;

struct TextureRecipe {
    ClassId class_id = 0;
    std::array<std::uint8_t, 3> anchor_rgb{};
    int stripe_period = 4;
};

/// Palette entry and stripe period (4 + 2c) for one of the nine classes.
TextureRecipe recipe(ClassId class_id);

struct FidelityParams {
    double fidelity = 1.0;    // noise sigma = 80 * (1 - fidelity)
    double error_rate = 0.0;  // probability of rendering another class

    double noise_sigma() const noexcept { return 80.0 * (1.0 - fidelity); }
    void validate() const;
};

/// Row-stochastic k x k matrix: row = true class, entries = prediction probabilities.
class StubPolicy {
public:
    explicit StubPolicy(std::vector<std::vector<double>> rows);

    static StubPolicy identity(std::size_t k);
    static StubPolicy from_csv(std::string_view csv_text);
    static StubPolicy load_csv(const std::filesystem::path& path);
    /// Diagonal p, remainder spread evenly over the other classes.
    static StubPolicy with_diagonal(std::size_t k, double p);

    std::size_t size() const noexcept { return rows_.size(); }
    const std::vector<double>& row(std::size_t t) const { return rows_.at(t); }
    const std::vector<std::vector<double>>& rows() const noexcept { return rows_; }

private:
    std::vector<std::vector<double>> rows_;
};

/// Procedural texture for `class_id`. With probability error_rate a uniformly
/// chosen other class among the first k is rendered instead. The top-left 2x2
/// block carries the rendered class id in all channels.
ImageBuffer texture_generate(ClassId class_id, std::uint64_t seed, int width, int height,
                             const FidelityParams& params, std::size_t k = kPaletteSize);

/// The class rendered by texture_generate, if the tag block is intact and < k.
std::optional<ClassId> read_tag(const ImageBuffer& img, std::size_t k = kPaletteSize);

/// Mean RGB over all pixels outside the 2x2 tag block.
std::array<double, 3> mean_rgb_excluding_tag(const ImageBuffer& img);

/// softmax(-distance/20) over the first k palette anchors.
Verdict centroid_classify(const ImageBuffer& img, std::size_t k = kPaletteSize);

/// One-hot verdict at a class sampled from policy row read_tag(img).
Verdict stub_classify(const ImageBuffer& img, const StubPolicy& policy, std::uint64_t seed);

/// Seed used by a stub worker for its n-th classify request.
std::uint64_t stub_request_seed(std::uint64_t worker_seed, std::uint64_t request_counter);

enum class WorkerKind { generator, centroid, stub };

struct WorkerParams {
    WorkerKind kind = WorkerKind::generator;
    FidelityParams fidelity;
    std::optional<StubPolicy> stub_policy;
    std::uint64_t seed = 0;  // stub sampling stream
    WorkerIdentity identity;
    /// Whether `ready` echoes catalog_digest and role.
    bool announce_digest = true;
};

WorkerIdentity default_identity(WorkerKind kind);
Role role_of(WorkerKind kind);

/// Serves the worker protocol on `ch` until shutdown (exit 0) or end of
/// stream without shutdown (exit 1). Malformed frames get an error reply.
int serve(const WorkerParams& params, LineChannel& ch);

/// In-process endpoint backed by serve().
EndpointSpec inproc_endpoint(WorkerParams params);

}  // namespace valigen::reference

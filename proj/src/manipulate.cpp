#include "latentprobe/manipulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "latentprobe/errors.hpp"

namespace latentprobe {

namespace {

constexpr std::size_t kGutter = 2;

void check_latent(const Generator& gen, const LatentVector& z) {
    if (z.size() != gen.latent_width()) {
        throw ShapeError("latent width " + std::to_string(z.size()) + " != generator input " +
                         std::to_string(gen.latent_width()));
    }
}

}  // namespace

std::vector<Frame> manipulate_with_set(const Generator& gen, const Classifier& clf, const LatentVector& z,
                                       const ControllingSet& set, double strength, int steps) {
    if (steps < 1) throw InvalidArgument("manipulation needs steps >= 1");
    if (set.entries.empty()) throw InvalidArgument("controlling set is empty");
    check_compatible(gen, clf);
    check_latent(gen, z);
    set.validate(gen.latent_width());

    std::vector<double> direction(z.size(), 0.0);
    for (const auto& e : set.entries) direction[e.dim] = e.sign;

    std::vector<Frame> frames;
    frames.reserve(static_cast<std::size_t>(steps) + 1);
    for (int t = 0; t <= steps; ++t) {
        const double s = strength * t / steps;
        const LatentVector moved = t == 0 ? z : intervene_weighted(z, direction, s, 1);
        Image image = gen.generate(moved);
        ProbabilityVector probs = clf.classify(image);
        frames.push_back({s, std::move(image), std::move(probs)});
    }
    return frames;
}

ImpulseResult extreme_impulse(const Generator& gen, const Classifier& clf, const LatentVector& z, std::size_t dim,
                              double magnitude, int sign) {
    if (!(magnitude > 0.0)) throw InvalidArgument("impulse magnitude must be > 0");
    if (sign != 1 && sign != -1) throw InvalidArgument("sign must be +1 or -1");
    check_compatible(gen, clf);
    check_latent(gen, z);
    Image image = gen.generate(intervene(z, dim, sign * magnitude));
    ProbabilityVector probs = clf.classify(image);
    const ConceptId top{probs.argmax()};
    return {std::move(image), top, std::move(probs)};
}

TranslationResult translate(const Generator& gen, const Classifier& clf, const LatentVector& z, const WeightVector& w,
                            double xi, TranslationDirection direction) {
    check_compatible(gen, clf);
    check_latent(gen, z);
    const int sign = direction == TranslationDirection::forward ? 1 : -1;
    Image image = gen.generate(intervene_weighted(z, w, xi, sign));
    ProbabilityVector probs = clf.classify(image);
    return {std::move(image), std::move(probs)};
}

std::uint8_t quantize_pixel(double v) {
    const double scaled = std::floor((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

std::vector<std::uint8_t> encode_montage(const std::vector<std::vector<Image>>& grid) {
    if (grid.empty() || grid.front().empty()) throw InvalidArgument("montage grid is empty");
    const std::size_t cols = grid.front().size();
    const std::size_t tile_h = grid.front().front().height();
    const std::size_t tile_w = grid.front().front().width();
    for (const auto& row : grid) {
        if (row.size() != cols) throw InvalidArgument("montage grid is not rectangular");
        for (const auto& img : row) {
            if (img.height() != tile_h || img.width() != tile_w) throw ShapeError("montage images differ in shape");
        }
    }

    const std::size_t width = cols * tile_w;
    const std::size_t height = grid.size() * tile_h + (grid.size() - 1) * kGutter;
    const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";

    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + width * height);
    for (std::size_t r = 0; r < grid.size(); ++r) {
        if (r > 0) out.insert(out.end(), kGutter * width, std::uint8_t{255});
        for (std::size_t y = 0; y < tile_h; ++y) {
            for (const auto& img : grid[r]) {
                for (std::size_t x = 0; x < tile_w; ++x) out.push_back(quantize_pixel(img.at(y, x)));
            }
        }
    }
    return out;
}

void render_montage(const std::vector<std::vector<Image>>& grid, const std::filesystem::path& path) {
    const auto bytes = encode_montage(grid);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

std::string frames_to_json(const std::vector<Frame>& frames) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& f : frames) {
        doc.push_back({{"s", f.s},
                       {"probs", std::vector<double>(f.probs.values().begin(), f.probs.values().end())},
                       {"argmax", f.probs.argmax()}});
    }
    return doc.dump(2);
}

}  // namespace latentprobe

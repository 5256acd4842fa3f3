#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latentprobe/core.hpp"
#include "latentprobe/models.hpp"

namespace latentprobe {

struct Frame {
    double s = 0.0;
    Image image;
    ProbabilityVector probs;
};

/// Frames G(z + s * sum_d sign_d e_d) for s = strength * t / steps, t = 0..steps.
/// Frame 0 is the unmodified base.
std::vector<Frame> manipulate_with_set(const Generator& gen, const Classifier& clf, const LatentVector& z,
                                       const ControllingSet& set, double strength, int steps);

struct ImpulseResult {
    Image image;
    ConceptId argmax;
    ProbabilityVector probs;
};

ImpulseResult extreme_impulse(const Generator& gen, const Classifier& clf, const LatentVector& z, std::size_t dim,
                              double magnitude, int sign);

/// forward moves class-j latents toward k (+xi w); backward moves class-k latents toward j (-xi w).
enum class TranslationDirection { forward, backward };

struct TranslationResult {
    Image image;
    ProbabilityVector probs;
};

TranslationResult translate(const Generator& gen, const Classifier& clf, const LatentVector& z, const WeightVector& w,
                            double xi, TranslationDirection direction);

/// Maps [-1,1] to a byte with round-half-up: floor((v + 1) * 127.5 + 0.5).
std::uint8_t quantize_pixel(double v);

/// Binary PGM (P5, maxval 255) of a rectangular grid of equally sized images.
/// Images in a row are packed side by side; rows are separated by a 2-pixel
/// white gutter.
std::vector<std::uint8_t> encode_montage(const std::vector<std::vector<Image>>& grid);
void render_montage(const std::vector<std::vector<Image>>& grid, const std::filesystem::path& path);

std::string frames_to_json(const std::vector<Frame>& frames);

}  // namespace latentprobe

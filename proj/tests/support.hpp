#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "latentprobe/models.hpp"

namespace testsupport {

using latentprobe::ControlGain;
using latentprobe::SyntheticGeneratorSpec;

/// Softmax written out longhand, independent of the library's version.
inline std::vector<double> softmax_oracle(const std::vector<double>& logits) {
    double hi = logits.front();
    for (double x : logits) hi = std::max(hi, x);
    double total = 0.0;
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - hi);
        total += out[i];
    }
    for (auto& p : out) p /= total;
    return out;
}

/// Class logits of a synthetic spec evaluated by hand.
inline std::vector<double> logits_oracle(const SyntheticGeneratorSpec& spec, const std::vector<double>& z) {
    std::vector<double> out(spec.l, 0.0);
    for (std::size_t c = 0; c < spec.l; ++c)
        for (const auto& g : spec.control_map[c]) out[c] += g.gain * z[g.dim];
    return out;
}

inline std::vector<double> zvec(const latentprobe::LatentVector& z) { return {z.values().begin(), z.values().end()}; }

/// Hand-derived gradient of the single-concept objective on a synthetic spec:
/// d/dw_i of -mean|S_j(z + xi w) - S_j(z)| is -mean sign(dS) xi dS_j/dz_i with
/// dS_j/dz_i = S_j * sum_c (1[c = j] - S_c) gain_{c,i}; the norm penalty adds lambda w / |w|.
inline std::vector<double> analytic_gradient(const SyntheticGeneratorSpec& spec,
                                             const std::vector<latentprobe::LatentVector>& bases, std::size_t j,
                                             const std::vector<double>& w, double xi, double lambda) {
    std::vector<double> grad(spec.n, 0.0);
    for (const auto& z : bases) {
        auto moved = zvec(z);
        for (std::size_t i = 0; i < spec.n; ++i) moved[i] += xi * w[i];
        const auto s = softmax_oracle(logits_oracle(spec, moved));
        const auto s0 = softmax_oracle(logits_oracle(spec, zvec(z)));
        const double sgn = s[j] - s0[j] >= 0 ? 1.0 : -1.0;
        for (std::size_t c = 0; c < spec.l; ++c) {
            const double coeff = s[j] * ((c == j ? 1.0 : 0.0) - s[c]);
            for (const auto& g : spec.control_map[c]) grad[g.dim] -= sgn * xi * coeff * g.gain / bases.size();
        }
    }
    const double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
    for (std::size_t i = 0; i < spec.n; ++i) grad[i] += lambda * w[i] / norm;
    return grad;
}

/// dS_j/dz_i of a synthetic spec at z.
inline double score_derivative(const SyntheticGeneratorSpec& spec, const std::vector<double>& z, std::size_t j,
                               std::size_t i) {
    const auto s = softmax_oracle(logits_oracle(spec, z));
    double acc = 0.0;
    for (std::size_t c = 0; c < spec.l; ++c)
        for (const auto& g : spec.control_map[c])
            if (g.dim == i) acc += ((c == j ? 1.0 : 0.0) - s[c]) * g.gain;
    return s[j] * acc;
}

/// One control dim per class: class c is driven by dim `dims[c]` with `gain`.
inline SyntheticGeneratorSpec one_dim_spec(std::size_t n, std::size_t l, const std::vector<std::size_t>& dims,
                                           double gain) {
    SyntheticGeneratorSpec spec;
    spec.n = n;
    spec.l = l;
    spec.control_map.resize(l);
    for (std::size_t c = 0; c < l; ++c) spec.control_map[c] = {{dims[c], gain}};
    return spec;
}

/// Control dims chosen by a seeded shuffle, `per_class` per class, gains
/// +-[1.5, 2.5] with random sign.
inline SyntheticGeneratorSpec random_spec(std::size_t n, std::size_t l, std::size_t per_class, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> dims(n);
    for (std::size_t i = 0; i < n; ++i) dims[i] = i;
    std::shuffle(dims.begin(), dims.end(), rng);
    std::uniform_real_distribution<double> mag(1.5, 2.5);
    std::bernoulli_distribution flip(0.5);
    SyntheticGeneratorSpec spec;
    spec.n = n;
    spec.l = l;
    spec.control_map.resize(l);
    std::size_t next = 0;
    for (std::size_t c = 0; c < l; ++c) {
        for (std::size_t k = 0; k < per_class; ++k) {
            const double g = mag(rng);
            spec.control_map[c].push_back({dims[next++], flip(rng) ? -g : g});
        }
    }
    return spec;
}

/// Two classes sharing one dim with opposite gains: class 0 <- (dim, -g), class 1 <- (dim, +g).
inline SyntheticGeneratorSpec opposed_spec(std::size_t n, std::size_t dim, double g) {
    SyntheticGeneratorSpec spec;
    spec.n = n;
    spec.l = 2;
    spec.control_map = {{{dim, -g}}, {{dim, g}}};
    return spec;
}

inline std::filesystem::path fixture_dir() { return LATENTPROBE_FIXTURE_DIR; }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("latentprobe_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testsupport

// Builds the committed fixture generator/classifier pair.
//
// The pair is procedural: the generator maps a latent to a softmax mixture over
// ten 28x28 garment silhouettes, the classifier scores template correlation.
// Every class is driven by two hidden units that each own four latent dims,
// so a handful of dims dominate each class. Trained exports with the same
// shapes can replace them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latentprobe/models.hpp"

namespace {

using latentprobe::LayerKind;
using latentprobe::LayerSpec;
using latentprobe::ModelRole;
using latentprobe::NetworkModel;

constexpr std::size_t kSide = 28;
constexpr std::size_t kPixels = kSide * kSide;
constexpr std::size_t kClasses = 10;
constexpr std::size_t kLatent = 100;
constexpr std::size_t kHidden = 20;

using Mask = std::array<double, kPixels>;

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct Canvas {
    Mask px;
    Canvas() { px.fill(-1.0); }
    void rect(int r0, int c0, int r1, int c1) {
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c)
                if (r >= 0 && c >= 0 && r < 28 && c < 28) px[static_cast<std::size_t>(r * 28 + c)] = 1.0;
    }
    void clear(int r0, int c0, int r1, int c1) {
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c)
                if (r >= 0 && c >= 0 && r < 28 && c < 28) px[static_cast<std::size_t>(r * 28 + c)] = -1.0;
    }
    // Trapezoid widening linearly from half-width w0 at row r0 to w1 at row r1.
    void trapezoid(int r0, int r1, double w0, double w1) {
        for (int r = r0; r <= r1; ++r) {
            const double t = r1 == r0 ? 0.0 : double(r - r0) / double(r1 - r0);
            const int hw = static_cast<int>(std::lround(w0 + t * (w1 - w0)));
            rect(r, 14 - hw, r, 13 + hw);
        }
    }
};

std::array<Mask, kClasses> silhouettes() {
    std::array<Canvas, kClasses> c;
    c[0].rect(5, 9, 24, 18);   c[0].rect(5, 3, 11, 24);              // t-shirt
    c[1].rect(3, 8, 25, 13);   c[1].rect(3, 14, 25, 19);  c[1].rect(3, 8, 6, 19);  // trouser
    c[1].clear(8, 13, 25, 14);
    c[2].rect(5, 8, 24, 19);   c[2].rect(5, 2, 23, 7);    c[2].rect(5, 20, 23, 25); // pullover
    c[3].trapezoid(3, 25, 3.0, 9.0);                                   // dress
    c[4].rect(3, 6, 25, 21);   c[4].rect(3, 1, 22, 5);    c[4].rect(3, 22, 22, 26); // coat
    c[4].clear(10, 13, 25, 14);
    c[5].rect(17, 2, 18, 25);  c[5].rect(21, 2, 22, 25);  c[5].rect(14, 4, 24, 5);  // sandal
    c[5].rect(14, 22, 24, 23);
    c[6].rect(4, 8, 25, 19);   c[6].rect(4, 3, 16, 24);   c[6].clear(4, 12, 7, 15); // shirt
    c[7].rect(15, 2, 22, 25);  c[7].rect(11, 12, 15, 25);                           // sneaker
    c[8].rect(10, 4, 25, 23);  c[8].rect(3, 9, 4, 18);    c[8].rect(3, 9, 10, 10);  // bag
    c[8].rect(3, 17, 10, 18);
    c[9].rect(4, 12, 24, 22);  c[9].rect(18, 2, 24, 22);                            // ankle boot
    std::array<Mask, kClasses> out;
    for (std::size_t i = 0; i < kClasses; ++i) out[i] = c[i].px;
    return out;
}

struct FixtureParams {
    double mix_strong = 2.5;
    double mix_scale = 0.3;
    double sharpness = 4.0;
    int taps = 4;
    double noise = 0.05;
};

NetworkModel build_generator(const std::array<Mask, kClasses>& shapes, const FixtureParams& params,
                             std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto sign = [&] { return normal(rng) < 0 ? -1.0 : 1.0; };

    // Latent -> hidden: each unit owns `taps` latent dims (disjoint across
    // units) on top of weak dense coupling.
    std::vector<std::size_t> dims(kLatent);
    for (std::size_t i = 0; i < kLatent; ++i) dims[i] = i;
    std::shuffle(dims.begin(), dims.end(), rng);
    std::vector<double> w1(kHidden * kLatent);
    for (auto& w : w1) w = f32(params.noise * normal(rng));
    const double tap_scale = 1.0 / std::sqrt(static_cast<double>(std::max(params.taps, 1)));
    std::size_t next = 0;
    for (std::size_t h = 0; h < kHidden; ++h) {
        for (int tap = 0; tap < params.taps && next < kLatent; ++tap) {
            w1[h * kLatent + dims[next++]] = f32(sign() * tap_scale * (0.8 + 0.4 * std::abs(normal(rng))));
        }
    }
    std::vector<double> b1(kHidden, 0.0);

    // Hidden -> class mixture logits: two dedicated units per class plus weak cross terms.
    std::vector<double> w2(kClasses * kHidden);
    for (auto& w : w2) w = f32(params.mix_scale * normal(rng));
    for (std::size_t c = 0; c < kClasses; ++c) {
        for (std::size_t u = 0; u < kHidden / kClasses; ++u) {
            w2[c * kHidden + c * (kHidden / kClasses) + u] = f32(sign() * params.mix_strong);
        }
    }
    std::vector<double> b2(kClasses, 0.0);

    // Mixture -> pixels: column c is the c-th silhouette.
    std::vector<double> w3(kPixels * kClasses);
    for (std::size_t p = 0; p < kPixels; ++p)
        for (std::size_t c = 0; c < kClasses; ++c) w3[p * kClasses + c] = f32(2.5 * shapes[c][p]);
    std::vector<double> b3(kPixels, 0.0);

    NetworkModel g;
    g.role = ModelRole::generator;
    g.input_width = kLatent;
    g.output_width = kPixels;
    g.image_height = kSide;
    g.image_width = kSide;
    g.layers = {LayerSpec::dense(kHidden, kLatent, std::move(w1), std::move(b1)),
                LayerSpec::activation(LayerKind::tanh),
                LayerSpec::dense(kClasses, kHidden, std::move(w2), std::move(b2)),
                LayerSpec::activation(LayerKind::softmax),
                LayerSpec::dense(kPixels, kClasses, std::move(w3), std::move(b3)),
                LayerSpec::activation(LayerKind::tanh)};
    g.validate();
    return g;
}

NetworkModel build_classifier(const std::array<Mask, kClasses>& shapes, const FixtureParams& params) {
    std::vector<double> w(kClasses * kPixels);
    std::vector<double> b(kClasses, 0.0);
    for (std::size_t c = 0; c < kClasses; ++c) {
        for (std::size_t p = 0; p < kPixels; ++p) w[c * kPixels + p] = f32(params.sharpness * shapes[c][p] / kPixels);
    }
    NetworkModel q;
    q.role = ModelRole::classifier;
    q.input_width = kPixels;
    q.output_width = kClasses;
    q.image_height = kSide;
    q.image_width = kSide;
    q.layers = {LayerSpec::dense(kClasses, kPixels, std::move(w), std::move(b)),
                LayerSpec::activation(LayerKind::softmax)};
    q.validate();
    return q;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Build the fixture generator/classifier weight files"};
    std::string out_dir = "fixtures";
    std::uint64_t seed = 20200101;
    app.add_option("--out-dir", out_dir)->capture_default_str();
    app.add_option("--seed", seed)->capture_default_str();
    FixtureParams params;
    app.add_option("--mix-strong", params.mix_strong, "Dedicated hidden -> class weight")->capture_default_str();
    app.add_option("--mix-scale", params.mix_scale, "Cross hidden -> class weight scale")->capture_default_str();
    app.add_option("--sharpness", params.sharpness, "Classifier template gain")->capture_default_str();
    app.add_option("--taps", params.taps, "Strong latent taps per hidden unit")->capture_default_str();
    app.add_option("--noise", params.noise, "Dense latent noise scale")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    const auto shapes = silhouettes();
    std::mt19937_64 rng(seed);
    const auto gen = build_generator(shapes, params, rng);
    const auto clf = build_classifier(shapes, params);

    std::filesystem::create_directories(out_dir);
    const auto gen_path = std::filesystem::path(out_dir) / "generator.lpwf";
    const auto clf_path = std::filesystem::path(out_dir) / "classifier.lpwf";
    latentprobe::save_model(gen, gen_path);
    latentprobe::save_model(clf, clf_path);
    std::cout << "wrote " << gen_path.string() << " and " << clf_path.string() << '\n';
    return 0;
}

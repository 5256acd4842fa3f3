#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "latentprobe/core.hpp"

namespace latentprobe {

/// Grayscale image, row-major, every pixel in [-1, 1].
class Image {
public:
    Image() = default;
    Image(std::size_t height, std::size_t width, std::vector<double> pixels);
    static Image filled(std::size_t height, std::size_t width, double value);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixel_count() const noexcept { return pixels_.size(); }
    double at(std::size_t row, std::size_t col) const { return pixels_[row * width_ + col]; }
    std::span<const double> pixels() const noexcept { return pixels_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> pixels_;
};

enum class LayerKind : std::uint8_t { dense = 1, relu = 2, tanh = 3, sigmoid = 4, softmax = 5 };

std::string to_string(LayerKind kind);

/// One network layer. Only dense layers carry parameters: `weights` is
/// rows x cols row-major and `bias` has `rows` entries.
struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    static LayerSpec dense(std::size_t rows, std::size_t cols, std::vector<double> weights, std::vector<double> bias);
    static LayerSpec activation(LayerKind kind);

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class ModelRole : std::uint8_t { generator = 0, classifier = 1 };

/// A dense feed-forward network. For generators image_height x image_width is
/// the output shape; for classifiers it is the expected input shape (or 0 x 0).
struct NetworkModel {
    ModelRole role = ModelRole::generator;
    std::size_t input_width = 0;
    std::size_t output_width = 0;
    std::size_t image_height = 0;
    std::size_t image_width = 0;
    std::vector<LayerSpec> layers;

    /// Throws ValidationError when widths or the layer stack are inconsistent.
    void validate() const;

    friend bool operator==(const NetworkModel&, const NetworkModel&) = default;
};

/// Serialized size in bytes of `model` in the weight-file format.
std::size_t encoded_size(const NetworkModel& model);
std::vector<std::uint8_t> encode_model(const NetworkModel& model);
NetworkModel decode_model(std::span<const std::uint8_t> bytes);

NetworkModel load_model(const std::filesystem::path& path);
void save_model(const NetworkModel& model, const std::filesystem::path& path);

/// Applies the layer stack to a flat input. Widths must already agree.
std::vector<double> run_layers(const NetworkModel& model, std::span<const double> input);

Image forward_generator(const NetworkModel& model, const LatentVector& z);
ProbabilityVector forward_classifier(const NetworkModel& model, const Image& x);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

// Black-box interfaces consumed by the analysis modules. Implementations must
// be immutable and safe to call concurrently.

class Generator {
public:
    virtual ~Generator() = default;
    virtual std::size_t latent_width() const = 0;
    virtual std::size_t image_height() const = 0;
    virtual std::size_t image_width() const = 0;
    virtual Image generate(const LatentVector& z) const = 0;
};

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::size_t input_width() const = 0;
    virtual std::size_t concept_count() const = 0;
    virtual ProbabilityVector classify(const Image& x) const = 0;
};

/// Throws ShapeError when the generator's image does not fit the classifier.
void check_compatible(const Generator& gen, const Classifier& clf);

class NetworkGenerator final : public Generator {
public:
    explicit NetworkGenerator(NetworkModel model);
    std::size_t latent_width() const override { return model_.input_width; }
    std::size_t image_height() const override { return model_.image_height; }
    std::size_t image_width() const override { return model_.image_width; }
    Image generate(const LatentVector& z) const override { return forward_generator(model_, z); }
    const NetworkModel& model() const noexcept { return model_; }

private:
    NetworkModel model_;
};

class NetworkClassifier final : public Classifier {
public:
    explicit NetworkClassifier(NetworkModel model);
    std::size_t input_width() const override { return model_.input_width; }
    std::size_t concept_count() const override { return model_.output_width; }
    ProbabilityVector classify(const Image& x) const override { return forward_classifier(model_, x); }
    const NetworkModel& model() const noexcept { return model_; }

private:
    NetworkModel model_;
};

struct ControlGain {
    std::size_t dim = 0;
    double gain = 0.0;
};

/// Analytic testbed: the class-l logit is the sum of gain * z[dim] over
/// control_map[l]. Zero gains are allowed only with `allow_zero_gains` (used to
/// build degenerate all-flat pipelines).
struct SyntheticGeneratorSpec {
    std::size_t n = 0;
    std::size_t l = 0;
    std::vector<std::vector<ControlGain>> control_map;
    bool allow_zero_gains = false;

    void validate() const;
    /// Per-concept_id sets of the nonzero-gain dims with sign(gain).
    std::vector<ControllingSet> ground_truth_sets() const;
    /// Exact pre-softmax class logits for z.
    std::vector<double> logits(const LatentVector& z) const;
};

std::string synthetic_spec_to_json(const SyntheticGeneratorSpec& spec);
SyntheticGeneratorSpec synthetic_spec_from_json(const std::string& text);

/// Renders logits as a 4 x 4L strip; block l holds softsign(logit_l).
class SyntheticGenerator final : public Generator {
public:
    static constexpr std::size_t kBlock = 4;

    explicit SyntheticGenerator(SyntheticGeneratorSpec spec);
    std::size_t latent_width() const override { return spec_.n; }
    std::size_t image_height() const override { return kBlock; }
    std::size_t image_width() const override { return kBlock * spec_.l; }
    Image generate(const LatentVector& z) const override;
    const SyntheticGeneratorSpec& spec() const noexcept { return spec_; }

private:
    SyntheticGeneratorSpec spec_;
};

/// Inverts the synthetic rendering back to logits and applies softmax.
class SyntheticClassifier final : public Classifier {
public:
    explicit SyntheticClassifier(std::size_t concepts) : concepts_(concepts) {}
    std::size_t input_width() const override { return SyntheticGenerator::kBlock * SyntheticGenerator::kBlock * concepts_; }
    std::size_t concept_count() const override { return concepts_; }
    ProbabilityVector classify(const Image& x) const override;

private:
    std::size_t concepts_;
};

struct ModelPair {
    std::shared_ptr<const Generator> generator;
    std::shared_ptr<const Classifier> classifier;
    /// Filled only for synthetic pairs.
    std::vector<ControllingSet> ground_truth;
};

ModelPair make_synthetic_generator(const SyntheticGeneratorSpec& spec);
ModelPair load_model_pair(const std::filesystem::path& generator_path, const std::filesystem::path& classifier_path);

}  // namespace latentprobe

#include "latentprobe/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "latentprobe/errors.hpp"

namespace latentprobe {

namespace {

constexpr std::uint8_t kMagic[4] = {'L', 'P', 'W', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderSize = 29;

class ByteWriter {
public:
    explicit ByteWriter(std::size_t reserve) { out_.reserve(reserve); }

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int s = 0; s < 32; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw FormatError(std::string("truncated file while reading ") + what, pos_);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[pos_++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

bool is_activation(LayerKind k) { return k != LayerKind::dense; }

void apply_activation(LayerKind kind, std::vector<double>& v) {
    switch (kind) {
        case LayerKind::relu:
            for (auto& x : v) x = x > 0.0 ? x : 0.0;
            break;
        case LayerKind::tanh:
            for (auto& x : v) x = std::tanh(x);
            break;
        case LayerKind::sigmoid:
            for (auto& x : v) x = 1.0 / (1.0 + std::exp(-x));
            break;
        case LayerKind::softmax:
            v = softmax(v);
            break;
        case LayerKind::dense:
            break;
    }
}

// Four interleaved partial sums combined as (s0 + s1) + (s2 + s3), then the
// tail. The order is fixed so results do not depend on the compiler.
double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    double acc = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

std::uint32_t narrow_u32(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFu) throw ValidationError(std::string(what) + " does not fit in u32");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

Image::Image(std::size_t height, std::size_t width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
    if (height_ * width_ != pixels_.size()) {
        throw ShapeError("image " + std::to_string(height_) + "x" + std::to_string(width_) + " needs " +
                         std::to_string(height_ * width_) + " pixels, got " + std::to_string(pixels_.size()));
    }
    for (double p : pixels_) {
        if (!(p >= -1.0 && p <= 1.0)) throw NumericError("pixel outside [-1,1]");
    }
}

Image Image::filled(std::size_t height, std::size_t width, double value) {
    return Image(height, width, std::vector<double>(height * width, value));
}

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::tanh: return "tanh";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::softmax: return "softmax";
    }
    return "unknown";
}

LayerSpec LayerSpec::dense(std::size_t rows, std::size_t cols, std::vector<double> weights, std::vector<double> bias) {
    return LayerSpec{LayerKind::dense, rows, cols, std::move(weights), std::move(bias)};
}

LayerSpec LayerSpec::activation(LayerKind kind) {
    if (kind == LayerKind::dense) throw InvalidArgument("dense is not an activation");
    return LayerSpec{kind, 0, 0, {}, {}};
}

void NetworkModel::validate() const {
    if (layers.empty()) throw ValidationError("model has no layers");
    std::size_t width = input_width;
    bool seen_dense = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& layer = layers[i];
        const std::string where = "layer " + std::to_string(i);
        if (is_activation(layer.kind)) {
            if (layer.rows || layer.cols || !layer.weights.empty() || !layer.bias.empty()) {
                throw ValidationError(where + ": activation layers carry no parameters");
            }
            continue;
        }
        if (layer.rows == 0 || layer.cols == 0) throw ValidationError(where + ": dense layer with zero width");
        if (layer.weights.size() != layer.rows * layer.cols) throw ValidationError(where + ": weight count != rows*cols");
        if (layer.bias.size() != layer.rows) throw ValidationError(where + ": bias length != rows");
        if (layer.cols != width) {
            throw ValidationError(where + ": expects width " + std::to_string(layer.cols) + " but receives " +
                                  std::to_string(width));
        }
        width = layer.rows;
        seen_dense = true;
    }
    if (!seen_dense) throw ValidationError("model has no dense layer");
    if (width != output_width) throw ValidationError("final width " + std::to_string(width) + " != declared output width");

    const LayerKind last = layers.back().kind;
    if (role == ModelRole::classifier) {
        if (last != LayerKind::softmax) throw ValidationError("classifier must end with softmax");
        if ((image_height || image_width) && image_height * image_width != input_width) {
            throw ValidationError("classifier image shape does not match input width");
        }
    } else {
        if (last != LayerKind::tanh) throw ValidationError("generator must end with tanh");
        if (image_height * image_width != output_width) throw ValidationError("generator image shape != output width");
    }
}

std::size_t encoded_size(const NetworkModel& model) {
    std::size_t size = kHeaderSize;
    for (const auto& layer : model.layers) {
        size += 1;
        if (layer.kind == LayerKind::dense) size += 8 + 4 * (layer.rows * layer.cols + layer.rows);
    }
    return size;
}

std::vector<std::uint8_t> encode_model(const NetworkModel& model) {
    model.validate();
    ByteWriter w(encoded_size(model));
    for (auto b : kMagic) w.u8(b);
    w.u32(kVersion);
    w.u8(static_cast<std::uint8_t>(model.role));
    w.u32(narrow_u32(model.input_width, "input width"));
    w.u32(narrow_u32(model.output_width, "output width"));
    w.u32(narrow_u32(model.image_height, "image height"));
    w.u32(narrow_u32(model.image_width, "image width"));
    w.u32(narrow_u32(model.layers.size(), "layer count"));
    for (const auto& layer : model.layers) {
        w.u8(static_cast<std::uint8_t>(layer.kind));
        if (layer.kind != LayerKind::dense) continue;
        w.u32(narrow_u32(layer.rows, "rows"));
        w.u32(narrow_u32(layer.cols, "cols"));
        for (double v : layer.weights) w.f32(v);
        for (double v : layer.bias) w.f32(v);
    }
    return w.take();
}

NetworkModel decode_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.need(4, "magic");
    if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw FormatError("bad magic", 0);
    for (int i = 0; i < 4; ++i) r.u8("magic");

    const std::size_t version_at = r.offset();
    if (r.u32("version") != kVersion) throw FormatError("unsupported version", version_at);

    NetworkModel model;
    const std::size_t role_at = r.offset();
    const std::uint8_t role = r.u8("role");
    if (role > 1) throw FormatError("unknown role " + std::to_string(role), role_at);
    model.role = static_cast<ModelRole>(role);
    model.input_width = r.u32("input width");
    model.output_width = r.u32("output width");
    model.image_height = r.u32("image height");
    model.image_width = r.u32("image width");
    const std::uint32_t layer_count = r.u32("layer count");

    for (std::uint32_t i = 0; i < layer_count; ++i) {
        const std::size_t kind_at = r.offset();
        const std::uint8_t kind = r.u8("layer kind");
        if (kind < 1 || kind > 5) throw FormatError("unknown layer kind " + std::to_string(kind), kind_at);
        if (kind != static_cast<std::uint8_t>(LayerKind::dense)) {
            model.layers.push_back(LayerSpec::activation(static_cast<LayerKind>(kind)));
            continue;
        }
        const std::size_t rows = r.u32("rows");
        const std::size_t cols = r.u32("cols");
        const std::size_t count = rows * cols + rows;
        if (count > r.remaining() / 4) r.need(count * 4, "dense parameters");
        std::vector<double> weights(rows * cols);
        for (auto& v : weights) v = r.f32("weights");
        std::vector<double> bias(rows);
        for (auto& v : bias) v = r.f32("bias");
        model.layers.push_back(LayerSpec::dense(rows, cols, std::move(weights), std::move(bias)));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after last layer", r.offset());
    model.validate();
    return model;
}

NetworkModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_model(bytes);
}

void save_model(const NetworkModel& model, const std::filesystem::path& path) {
    const auto bytes = encode_model(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.begin(), logits.end());
    if (out.empty()) return out;
    const double peak = *std::max_element(out.begin(), out.end());
    double sum = 0.0;
    for (auto& x : out) {
        x = std::exp(x - peak);
        sum += x;
    }
    for (auto& x : out) x /= sum;
    return out;
}

std::vector<double> run_layers(const NetworkModel& model, std::span<const double> input) {
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    for (const auto& layer : model.layers) {
        if (layer.kind != LayerKind::dense) {
            apply_activation(layer.kind, cur);
            continue;
        }
        next.assign(layer.rows, 0.0);
        for (std::size_t r = 0; r < layer.rows; ++r) {
            next[r] = dot(layer.weights.data() + r * layer.cols, cur.data(), layer.cols) + layer.bias[r];
        }
        cur.swap(next);
    }
    return cur;
}

Image forward_generator(const NetworkModel& model, const LatentVector& z) {
    if (model.role != ModelRole::generator) throw ShapeError("model is not a generator");
    if (z.size() != model.input_width) {
        throw ShapeError("latent width " + std::to_string(z.size()) + " != generator input " +
                         std::to_string(model.input_width));
    }
    return Image(model.image_height, model.image_width, run_layers(model, z.values()));
}

ProbabilityVector forward_classifier(const NetworkModel& model, const Image& x) {
    if (model.role != ModelRole::classifier) throw ShapeError("model is not a classifier");
    if (x.pixel_count() != model.input_width) {
        throw ShapeError("image has " + std::to_string(x.pixel_count()) + " pixels, classifier expects " +
                         std::to_string(model.input_width));
    }
    return ProbabilityVector(run_layers(model, x.pixels()));
}

void check_compatible(const Generator& gen, const Classifier& clf) {
    const std::size_t pixels = gen.image_height() * gen.image_width();
    if (pixels != clf.input_width()) {
        throw ShapeError("generator emits " + std::to_string(pixels) + " pixels, classifier expects " +
                         std::to_string(clf.input_width()));
    }
}

NetworkGenerator::NetworkGenerator(NetworkModel model) : model_(std::move(model)) {
    model_.validate();
    if (model_.role != ModelRole::generator) throw ValidationError("model role is not generator");
}

NetworkClassifier::NetworkClassifier(NetworkModel model) : model_(std::move(model)) {
    model_.validate();
    if (model_.role != ModelRole::classifier) throw ValidationError("model role is not classifier");
}

void SyntheticGeneratorSpec::validate() const {
    if (n == 0 || l == 0) throw ValidationError("synthetic spec needs n >= 1 and l >= 1");
    if (control_map.size() != l) throw ValidationError("control map must have one entry per concept");
    for (std::size_t c = 0; c < l; ++c) {
        if (control_map[c].empty()) throw ValidationError("concept " + std::to_string(c) + " has no control dims");
        for (const auto& cg : control_map[c]) {
            if (cg.dim >= n) throw ValidationError("control dim " + std::to_string(cg.dim) + " out of range");
            if (!std::isfinite(cg.gain)) throw ValidationError("control gain must be finite");
            if (cg.gain == 0.0 && !allow_zero_gains) throw ValidationError("control gain must be nonzero");
        }
    }
}

std::vector<ControllingSet> SyntheticGeneratorSpec::ground_truth_sets() const {
    std::vector<ControllingSet> sets(l);
    for (std::size_t c = 0; c < l; ++c) {
        sets[c].concept_id = ConceptId{c};
        sets[c].provenance = Provenance::sequential;
        for (const auto& cg : control_map[c]) {
            if (cg.gain == 0.0) continue;
            sets[c].entries.push_back({cg.dim, cg.gain > 0 ? 1 : -1});
        }
    }
    return sets;
}

std::vector<double> SyntheticGeneratorSpec::logits(const LatentVector& z) const {
    if (z.size() != n) throw ShapeError("latent width " + std::to_string(z.size()) + " != " + std::to_string(n));
    std::vector<double> out(l, 0.0);
    for (std::size_t c = 0; c < l; ++c) {
        double acc = 0.0;
        for (const auto& cg : control_map[c]) acc += cg.gain * z[cg.dim];
        out[c] = acc;
    }
    return out;
}

std::string synthetic_spec_to_json(const SyntheticGeneratorSpec& spec) {
    nlohmann::json doc;
    doc["n"] = spec.n;
    doc["l"] = spec.l;
    nlohmann::json map = nlohmann::json::array();
    for (const auto& entry : spec.control_map) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& cg : entry) list.push_back({{"dim", cg.dim}, {"gain", cg.gain}});
        map.push_back(std::move(list));
    }
    doc["control_map"] = std::move(map);
    if (spec.allow_zero_gains) doc["allow_zero_gains"] = true;
    return doc.dump(2);
}

SyntheticGeneratorSpec synthetic_spec_from_json(const std::string& text) {
    SyntheticGeneratorSpec spec;
    try {
        const auto doc = nlohmann::json::parse(text);
        spec.n = doc.at("n").get<std::size_t>();
        spec.l = doc.at("l").get<std::size_t>();
        for (const auto& list : doc.at("control_map")) {
            auto& entry = spec.control_map.emplace_back();
            for (const auto& cg : list) entry.push_back({cg.at("dim").get<std::size_t>(), cg.at("gain").get<double>()});
        }
        spec.allow_zero_gains = doc.value("allow_zero_gains", false);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad synthetic spec json: ") + e.what());
    }
    spec.validate();
    return spec;
}

SyntheticGenerator::SyntheticGenerator(SyntheticGeneratorSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

Image SyntheticGenerator::generate(const LatentVector& z) const {
    const auto logits = spec_.logits(z);
    const std::size_t width = image_width();
    std::vector<double> pixels(kBlock * width);
    for (std::size_t c = 0; c < spec_.l; ++c) {
        const double v = logits[c] / (1.0 + std::abs(logits[c]));
        for (std::size_t r = 0; r < kBlock; ++r) {
            std::fill_n(pixels.begin() + static_cast<std::ptrdiff_t>(r * width + c * kBlock), kBlock, v);
        }
    }
    return Image(kBlock, width, std::move(pixels));
}

ProbabilityVector SyntheticClassifier::classify(const Image& x) const {
    if (x.pixel_count() != input_width()) {
        throw ShapeError("image has " + std::to_string(x.pixel_count()) + " pixels, synthetic classifier expects " +
                         std::to_string(input_width()));
    }
    std::vector<double> logits(concepts_);
    for (std::size_t c = 0; c < concepts_; ++c) {
        const double p = x.at(0, c * SyntheticGenerator::kBlock);
        if (std::abs(p) >= 1.0) throw NumericError("synthetic pixel saturated; logit not recoverable");
        logits[c] = p / (1.0 - std::abs(p));
    }
    return ProbabilityVector(softmax(logits));
}

ModelPair make_synthetic_generator(const SyntheticGeneratorSpec& spec) {
    spec.validate();
    ModelPair pair;
    pair.generator = std::make_shared<SyntheticGenerator>(spec);
    pair.classifier = std::make_shared<SyntheticClassifier>(spec.l);
    pair.ground_truth = spec.ground_truth_sets();
    return pair;
}

ModelPair load_model_pair(const std::filesystem::path& generator_path, const std::filesystem::path& classifier_path) {
    ModelPair pair;
    pair.generator = std::make_shared<NetworkGenerator>(load_model(generator_path));
    pair.classifier = std::make_shared<NetworkClassifier>(load_model(classifier_path));
    check_compatible(*pair.generator, *pair.classifier);
    return pair;
}

}  // namespace latentprobe

#include "latentprobe/core.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "json.hpp"
#include "latentprobe/errors.hpp"

namespace latentprobe {

using nlohmann::json;

LatentVector::LatentVector(std::vector<double> values) : values_(std::move(values)) {
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw NumericError("latent entry " + std::to_string(i) + " is not finite");
        }
    }
}

ProbabilityVector::ProbabilityVector(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ShapeError("probability vector is empty");
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0)) throw NumericError("probability outside [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw NumericError("probabilities sum to " + std::to_string(sum));
    }
}

std::size_t ProbabilityVector::argmax() const {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

void check_concept(ConceptId concept_id, std::size_t concept_count) {
    if (concept_id.index >= concept_count) {
        throw IndexError("concept " + std::to_string(concept_id.index) + " out of range for " +
                         std::to_string(concept_count) + " classes");
    }
}

void InterventionGrid::validate() const {
    // delta == 0 is accepted as a degenerate sweep (all rows equal the base).
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidArgument("sweep step must be finite and >= 0");
    if (m < 1) throw InvalidArgument("sweep needs at least one step per direction");
}

WeightVector::WeightVector(std::vector<double> weights) : weights_(std::move(weights)) {
    for (double& w : weights_) {
        if (std::isnan(w)) throw NumericError("weight is NaN");
        w = std::clamp(w, -1.0, 1.0);
    }
}

WeightVector WeightVector::zeros(std::size_t n) { return WeightVector(std::vector<double>(n, 0.0)); }

double WeightVector::norm() const {
    double s = 0.0;
    for (double w : weights_) s += w * w;
    return std::sqrt(s);
}

std::string to_string(Provenance p) { return p == Provenance::sequential ? "sequential" : "optimized"; }

Provenance provenance_from_string(const std::string& s) {
    if (s == "sequential") return Provenance::sequential;
    if (s == "optimized") return Provenance::optimized;
    throw InvalidArgument("unknown provenance '" + s + "'");
}

std::vector<std::size_t> ControllingSet::dims() const {
    std::vector<std::size_t> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.dim);
    return out;
}

void ControllingSet::validate(std::size_t latent_width) const {
    std::set<std::size_t> seen;
    for (const auto& e : entries) {
        if (e.sign != 1 && e.sign != -1) throw ValidationError("controlling-set sign must be +1 or -1");
        if (latent_width > 0 && e.dim >= latent_width) {
            throw IndexError("controlling-set dim " + std::to_string(e.dim) + " out of range");
        }
        if (!seen.insert(e.dim).second) {
            throw ValidationError("duplicate dim " + std::to_string(e.dim) + " in controlling set");
        }
    }
}

LatentVector sample_latent(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("latent size must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    return LatentVector(std::move(v));
}

std::vector<LatentVector> sample_latents(std::size_t n, std::size_t count, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("latent size must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<LatentVector> out;
    out.reserve(count);
    for (std::size_t b = 0; b < count; ++b) {
        std::vector<double> v(n);
        for (auto& x : v) x = normal(rng);
        out.emplace_back(std::move(v));
    }
    return out;
}

LatentVector intervene(const LatentVector& z, std::size_t dim, double offset) {
    if (dim >= z.size()) {
        throw IndexError("dim " + std::to_string(dim) + " out of range for latent width " + std::to_string(z.size()));
    }
    std::vector<double> v(z.values().begin(), z.values().end());
    v[dim] += offset;
    return LatentVector(std::move(v));
}

LatentVector intervene_weighted(const LatentVector& z, std::span<const double> w, double xi, int sign) {
    if (w.size() != z.size()) {
        throw ShapeError("weight length " + std::to_string(w.size()) + " != latent width " + std::to_string(z.size()));
    }
    if (sign != 1 && sign != -1) throw InvalidArgument("sign must be +1 or -1");
    std::vector<double> v(z.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = z[i] + sign * (xi * w[i]);
    return LatentVector(std::move(v));
}

LatentVector intervene_weighted(const LatentVector& z, const WeightVector& w, double xi, int sign) {
    return intervene_weighted(z, w.values(), xi, sign);
}

std::string latent_to_json(const LatentVector& z) {
    json doc;
    doc["n"] = z.size();
    doc["values"] = std::vector<double>(z.values().begin(), z.values().end());
    return doc.dump();
}

LatentVector latent_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        auto values = doc.at("values").get<std::vector<double>>();
        if (doc.at("n").get<std::size_t>() != values.size()) throw ValidationError("latent 'n' does not match values");
        return LatentVector(std::move(values));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad latent json: ") + e.what());
    }
}

std::string controlling_set_to_json(const ControllingSet& set) {
    json doc;
    doc["concept"] = set.concept_id.index;
    doc["k"] = set.entries.size();
    json entries = json::array();
    for (const auto& e : set.entries) entries.push_back({{"dim", e.dim}, {"sign", e.sign}});
    doc["entries"] = std::move(entries);
    doc["provenance"] = to_string(set.provenance);
    if (set.threshold) doc["threshold"] = *set.threshold;
    return doc.dump(2);
}

ControllingSet controlling_set_from_json(const std::string& text) {
    ControllingSet set;
    try {
        const json doc = json::parse(text);
        set.concept_id.index = doc.at("concept").get<std::size_t>();
        for (const auto& e : doc.at("entries")) {
            set.entries.push_back({e.at("dim").get<std::size_t>(), e.at("sign").get<int>()});
        }
        set.provenance = provenance_from_string(doc.at("provenance").get<std::string>());
        if (doc.contains("threshold")) set.threshold = doc.at("threshold").get<double>();
        if (doc.contains("k") && doc.at("k").get<std::size_t>() != set.entries.size()) {
            throw ValidationError("controlling set 'k' does not match entry count");
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad controlling-set json: ") + e.what());
    }
    set.validate();
    return set;
}

}  // namespace latentprobe

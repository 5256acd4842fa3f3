#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace latentprobe {

/// A point in the generator's input space. Entries are always finite.
class LatentVector {
public:
    LatentVector() = default;
    explicit LatentVector(std::vector<double> values);

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }

    friend bool operator==(const LatentVector&, const LatentVector&) = default;

private:
    std::vector<double> values_;
};

/// Softmax output of a classifier: entries in [0,1] summing to 1 within 1e-6.
class ProbabilityVector {
public:
    static constexpr double kSumTolerance = 1e-6;

    ProbabilityVector() = default;
    explicit ProbabilityVector(std::vector<double> probs);

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::span<const double> values() const noexcept { return probs_; }

    /// Index of the largest entry; ties go to the lowest index.
    std::size_t argmax() const;

    friend bool operator==(const ProbabilityVector&, const ProbabilityVector&) = default;

private:
    std::vector<double> probs_;
};

/// A class label used as the semantic concept_id. Range is checked where L is known.
struct ConceptId {
    std::size_t index = 0;
    friend bool operator==(const ConceptId&, const ConceptId&) = default;
};

void check_concept(ConceptId concept_id, std::size_t concept_count);

/// Bidirectional sweep on one latent coordinate: offsets k*delta for k in [-m, m].
struct InterventionGrid {
    std::size_t dim = 0;
    double delta = 0.5;
    int m = 10;

    void validate() const;
    std::size_t rows() const noexcept { return 2 * static_cast<std::size_t>(m) + 1; }
};

/// Per-dimension intervention coefficients, clamped to [-1, 1] on construction.
class WeightVector {
public:
    WeightVector() = default;
    explicit WeightVector(std::vector<double> weights);
    static WeightVector zeros(std::size_t n);

    std::size_t size() const noexcept { return weights_.size(); }
    double operator[](std::size_t i) const { return weights_[i]; }
    std::span<const double> values() const noexcept { return weights_; }
    double norm() const;

    friend bool operator==(const WeightVector&, const WeightVector&) = default;

private:
    std::vector<double> weights_;
};

enum class Provenance { sequential, optimized };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct ControlEntry {
    std::size_t dim = 0;
    int sign = 1;
    friend bool operator==(const ControlEntry&, const ControlEntry&) = default;
};

/// Signed latent dimensions that drive one concept_id. Entries keep discovery order
/// (strongest first) and dims are unique.
struct ControllingSet {
    ConceptId concept_id;
    std::vector<ControlEntry> entries;
    Provenance provenance = Provenance::sequential;
    std::optional<double> threshold;

    std::size_t size() const noexcept { return entries.size(); }
    std::vector<std::size_t> dims() const;
    /// Checks uniqueness, sign values and, if latent_width > 0, the dim range.
    void validate(std::size_t latent_width = 0) const;

    friend bool operator==(const ControllingSet&, const ControllingSet&) = default;
};

/// Length-n vector of i.i.d. standard normal draws, reproducible from seed.
LatentVector sample_latent(std::size_t n, std::uint64_t seed);

/// `count` latents drawn from one seeded stream.
std::vector<LatentVector> sample_latents(std::size_t n, std::size_t count, std::uint64_t seed);

/// Copy of z with z[dim] += offset.
LatentVector intervene(const LatentVector& z, std::size_t dim, double offset);

/// z + sign * xi * w, elementwise. sign must be +1 or -1.
LatentVector intervene_weighted(const LatentVector& z, std::span<const double> w, double xi, int sign);
LatentVector intervene_weighted(const LatentVector& z, const WeightVector& w, double xi, int sign);

std::string latent_to_json(const LatentVector& z);
LatentVector latent_from_json(const std::string& text);

std::string controlling_set_to_json(const ControllingSet& set);
ControllingSet controlling_set_from_json(const std::string& text);

}  // namespace latentprobe

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "latentprobe/core.hpp"
#include "latentprobe/models.hpp"

namespace latentprobe {

/// How the per-direction probability changes are aggregated.
///  - endpoint: (|S^m - S^0| + |S^-m - S^0|) / 2m, the telescoped sums.
///  - total_variation: sum of |S^{k+1} - S^k| over the whole grid, / 2m.
enum class ApcrVariant { endpoint, total_variation };

std::string to_string(ApcrVariant v);
ApcrVariant apcr_variant_from_string(const std::string& s);

/// Classifier outputs along one bidirectional sweep. rows[0] is k = -m,
/// rows[m] is the unintervened base, rows[2m] is k = +m.
struct SweepTrace {
    InterventionGrid grid;
    std::vector<ProbabilityVector> rows;

    const ProbabilityVector& row(int k) const { return rows.at(static_cast<std::size_t>(k + grid.m)); }
    double score(int k, std::size_t concept_id) const { return row(k)[concept_id]; }
    /// Per-concept_id series S^k for k = -m..m.
    std::vector<double> series(ConceptId concept_id) const;
};

SweepTrace sweep(const Generator& gen, const Classifier& clf, const LatentVector& z, const InterventionGrid& grid);

/// APCR of a raw score series of length 2m+1 (ascending k).
double apcr_from_series(std::span<const double> series, ApcrVariant variant);
double apcr_from_trace(const SweepTrace& trace, ConceptId concept_id, ApcrVariant variant);

/// N x L importance scores averaged over base latents. `direction` holds the
/// averaged signed endpoint difference S^m - S^-m, used to orient sequential
/// controlling sets.
struct ApcrMatrix {
    std::size_t n = 0;
    std::size_t l = 0;
    std::vector<double> values;
    std::vector<double> direction;
    ApcrVariant variant = ApcrVariant::endpoint;
    std::size_t base_count = 0;
    double delta = 0.0;
    int m = 0;

    double at(std::size_t dim, std::size_t concept_id) const { return values[dim * l + concept_id]; }
    double direction_at(std::size_t dim, std::size_t concept_id) const { return direction[dim * l + concept_id]; }
};

ApcrMatrix apcr_matrix(const Generator& gen, const Classifier& clf, std::span<const LatentVector> bases, double delta,
                       int m, ApcrVariant variant, unsigned threads = 1);

struct RankedDim {
    std::size_t dim = 0;
    double score = 0.0;
};

/// Dims by descending score; ties broken by ascending dim.
std::vector<RankedDim> rank_dimensions(const ApcrMatrix& matrix, ConceptId concept_id);

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

/// Equal-width bins over [0, max score]; the top edge is inclusive.
std::vector<HistogramBin> apcr_histogram(const ApcrMatrix& matrix, ConceptId concept_id, std::size_t bins);

std::string apcr_to_csv(const ApcrMatrix& matrix);
std::string apcr_to_json(const ApcrMatrix& matrix);
std::string histogram_to_csv(const std::vector<HistogramBin>& bins);

}  // namespace latentprobe

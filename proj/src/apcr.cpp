#include "latentprobe/apcr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "latentprobe/errors.hpp"
#include "latentprobe/parallel.hpp"

namespace latentprobe {

namespace {

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string to_string(ApcrVariant v) { return v == ApcrVariant::endpoint ? "endpoint" : "total-variation"; }

ApcrVariant apcr_variant_from_string(const std::string& s) {
    if (s == "endpoint") return ApcrVariant::endpoint;
    if (s == "total-variation") return ApcrVariant::total_variation;
    throw InvalidArgument("unknown APCR variant '" + s + "'");
}

std::vector<double> SweepTrace::series(ConceptId concept_id) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        check_concept(concept_id, r.size());
        out.push_back(r[concept_id.index]);
    }
    return out;
}

SweepTrace sweep(const Generator& gen, const Classifier& clf, const LatentVector& z, const InterventionGrid& grid) {
    grid.validate();
    check_compatible(gen, clf);
    if (z.size() != gen.latent_width()) {
        throw ShapeError("latent width " + std::to_string(z.size()) + " != generator input " +
                         std::to_string(gen.latent_width()));
    }
    if (grid.dim >= z.size()) throw IndexError("sweep dim " + std::to_string(grid.dim) + " out of range");

    SweepTrace trace;
    trace.grid = grid;
    trace.rows.reserve(grid.rows());
    for (int k = -grid.m; k <= grid.m; ++k) {
        const LatentVector zk = k == 0 ? z : intervene(z, grid.dim, k * grid.delta);
        trace.rows.push_back(clf.classify(gen.generate(zk)));
    }
    return trace;
}

double apcr_from_series(std::span<const double> series, ApcrVariant variant) {
    if (series.size() < 3 || series.size() % 2 == 0) throw ShapeError("APCR series must have odd length 2m+1, m >= 1");
    const std::size_t m = series.size() / 2;
    const double denom = 2.0 * static_cast<double>(m);
    if (variant == ApcrVariant::endpoint) {
        const double base = series[m];
        return (std::abs(series[2 * m] - base) + std::abs(series[0] - base)) / denom;
    }
    // Each half's path length is at least its endpoint jump; the max only
    // absorbs rounding on monotone halves so the bound holds in floating point.
    double upper = 0.0;
    double lower = 0.0;
    for (std::size_t k = m; k < 2 * m; ++k) upper += std::abs(series[k + 1] - series[k]);
    for (std::size_t k = 0; k < m; ++k) lower += std::abs(series[k + 1] - series[k]);
    upper = std::max(upper, std::abs(series[2 * m] - series[m]));
    lower = std::max(lower, std::abs(series[0] - series[m]));
    return (upper + lower) / denom;
}

double apcr_from_trace(const SweepTrace& trace, ConceptId concept_id, ApcrVariant variant) {
    return apcr_from_series(trace.series(concept_id), variant);
}

ApcrMatrix apcr_matrix(const Generator& gen, const Classifier& clf, std::span<const LatentVector> bases, double delta,
                       int m, ApcrVariant variant, unsigned threads) {
    if (bases.empty()) throw InvalidArgument("apcr_matrix needs at least one base latent");
    check_compatible(gen, clf);
    const std::size_t n = gen.latent_width();
    const std::size_t l = clf.concept_count();
    for (const auto& z : bases) {
        if (z.size() != n) throw ShapeError("base latent width " + std::to_string(z.size()) + " != " + std::to_string(n));
    }
    InterventionGrid{0, delta, m}.validate();

    // Partial results keyed by (base, dim), reduced below in base order so the
    // sum is independent of how work was split across threads.
    const std::size_t jobs = bases.size() * n;
    std::vector<double> scores(jobs * l);
    std::vector<double> dirs(jobs * l);
    parallel_for(jobs, threads, [&](std::size_t job) {
        const std::size_t b = job / n;
        const std::size_t dim = job % n;
        const SweepTrace trace = sweep(gen, clf, bases[b], InterventionGrid{dim, delta, m});
        for (std::size_t c = 0; c < l; ++c) {
            const auto s = trace.series(ConceptId{c});
            scores[job * l + c] = apcr_from_series(s, variant);
            dirs[job * l + c] = s.back() - s.front();
        }
    });

    ApcrMatrix out;
    out.n = n;
    out.l = l;
    out.variant = variant;
    out.base_count = bases.size();
    out.delta = delta;
    out.m = m;
    out.values.assign(n * l, 0.0);
    out.direction.assign(n * l, 0.0);
    for (std::size_t b = 0; b < bases.size(); ++b) {
        for (std::size_t i = 0; i < n * l; ++i) {
            out.values[i] += scores[b * n * l + i];
            out.direction[i] += dirs[b * n * l + i];
        }
    }
    const double count = static_cast<double>(bases.size());
    for (auto& v : out.values) v /= count;
    for (auto& v : out.direction) v /= count;
    return out;
}

std::vector<RankedDim> rank_dimensions(const ApcrMatrix& matrix, ConceptId concept_id) {
    check_concept(concept_id, matrix.l);
    std::vector<RankedDim> ranked(matrix.n);
    for (std::size_t i = 0; i < matrix.n; ++i) ranked[i] = {i, matrix.at(i, concept_id.index)};
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedDim& a, const RankedDim& b) { return a.score > b.score; });
    return ranked;
}

std::vector<HistogramBin> apcr_histogram(const ApcrMatrix& matrix, ConceptId concept_id, std::size_t bins) {
    if (bins == 0) throw InvalidArgument("histogram needs at least one bin");
    check_concept(concept_id, matrix.l);
    double top = 0.0;
    for (std::size_t i = 0; i < matrix.n; ++i) top = std::max(top, matrix.at(i, concept_id.index));

    std::vector<HistogramBin> out(bins);
    const double width = top / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].lo = width * static_cast<double>(b);
        out[b].hi = b + 1 == bins ? top : width * static_cast<double>(b + 1);
    }
    for (std::size_t i = 0; i < matrix.n; ++i) {
        std::size_t b = 0;
        if (top > 0.0) {
            const double pos = matrix.at(i, concept_id.index) / top * static_cast<double>(bins);
            b = std::min(bins - 1, static_cast<std::size_t>(pos));
        }
        ++out[b].count;
    }
    return out;
}

std::string apcr_to_csv(const ApcrMatrix& matrix) {
    std::string out = "dim";
    for (std::size_t c = 0; c < matrix.l; ++c) out += ",class" + std::to_string(c);
    out += '\n';
    for (std::size_t i = 0; i < matrix.n; ++i) {
        out += std::to_string(i);
        for (std::size_t c = 0; c < matrix.l; ++c) out += ',' + format_g17(matrix.at(i, c));
        out += '\n';
    }
    return out;
}

std::string apcr_to_json(const ApcrMatrix& matrix) {
    nlohmann::json doc;
    doc["variant"] = to_string(matrix.variant);
    doc["base_count"] = matrix.base_count;
    doc["delta"] = matrix.delta;
    doc["m"] = matrix.m;
    doc["n"] = matrix.n;
    doc["l"] = matrix.l;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < matrix.n; ++i) {
        rows.push_back(std::vector<double>(matrix.values.begin() + static_cast<std::ptrdiff_t>(i * matrix.l),
                                           matrix.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * matrix.l)));
    }
    doc["values"] = std::move(rows);
    return doc.dump();
}

std::string histogram_to_csv(const std::vector<HistogramBin>& bins) {
    std::string out = "bin_lo,bin_hi,count\n";
    for (const auto& b : bins) out += format_g17(b.lo) + ',' + format_g17(b.hi) + ',' + std::to_string(b.count) + '\n';
    return out;
}

}  // namespace latentprobe

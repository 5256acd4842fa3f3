#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latentprobe/apcr.hpp"
#include "latentprobe/core.hpp"
#include "latentprobe/models.hpp"

namespace latentprobe {

/// Regularizer on the weight vector: lambda * ||w||_2 or lambda * ||w||_2^2.
enum class Penalty { norm, squared };

std::string to_string(Penalty p);
Penalty penalty_from_string(const std::string& s);

struct OptimizerConfig {
    double xi = 3.0;
    double lambda = 0.01;
    int iterations = 200;
    double step_size = 0.05;
    double fd_step = 1e-3;
    std::uint64_t seed = 1;
    double init_scale = 0.1;
    std::size_t batch = 16;
    Penalty penalty = Penalty::norm;
    unsigned threads = 1;

    void validate() const;
};

struct OptimizationResult {
    ConceptId concept_id;
    std::optional<ConceptId> target;  // set for class-to-class runs
    WeightVector w;
    double initial_objective = 0.0;
    std::vector<double> objective_history;
    /// Mean signed probability changes at w: one entry for single-concept_id runs,
    /// {dS_{k->j}, dS_{j->k}} for class-to-class runs.
    std::vector<double> delta_s;
    /// Index into objective_history of the returned w; -1 means the initial point.
    long best_iteration = -1;
    OptimizerConfig config;

    double final_objective() const {
        return best_iteration < 0 ? initial_objective : objective_history[static_cast<std::size_t>(best_iteration)];
    }
};

double penalty_value(std::span<const double> w, const OptimizerConfig& cfg);

/// mean_b [1 - |Q_j(G(z_b + xi w)) - Q_j(G(z_b))|] + penalty(w).
double objective_single(const Generator& gen, const Classifier& clf, std::span<const LatentVector> bases,
                        ConceptId concept_id, std::span<const double> w, const OptimizerConfig& cfg);

/// 2 - mean|dS_{k->j}| - mean|dS_{j->k}| + penalty(w), where class-k bases move
/// by -xi w and class-j bases by +xi w.
double objective_class2class(const Generator& gen, const Classifier& clf, std::span<const LatentVector> bases_j,
                             std::span<const LatentVector> bases_k, ConceptId j, ConceptId k,
                             std::span<const double> w, const OptimizerConfig& cfg);

using BlackBox = std::function<double(std::span<const double>)>;

/// Central differences (f(w + h e_i) - f(w - h e_i)) / 2h for every coordinate.
/// `f` must be safe to call concurrently when threads > 1.
std::vector<double> estimate_gradient(const BlackBox& f, std::span<const double> w, double fd_step,
                                      unsigned threads = 1);

/// Finite-difference proximal-projected descent on the single-concept_id objective.
/// Returns the lowest-objective iterate seen, including the starting point.
OptimizationResult optimize_weights(const Generator& gen, const Classifier& clf, std::span<const LatentVector> bases,
                                    ConceptId concept_id, const OptimizerConfig& cfg);

OptimizationResult optimize_class2class(const Generator& gen, const Classifier& clf,
                                        std::span<const LatentVector> bases_j, std::span<const LatentVector> bases_k,
                                        ConceptId j, ConceptId k, const OptimizerConfig& cfg);

struct ThresholdMode {
    enum class Kind { absolute, top_k };
    Kind kind = Kind::top_k;
    double t = 0.0;
    std::size_t k = 10;

    static ThresholdMode absolute(double t) { return {Kind::absolute, t, 0}; }
    static ThresholdMode top(std::size_t k) { return {Kind::top_k, 0.0, k}; }
};

ControllingSet threshold_controlling_set(const OptimizationResult& result, ConceptId concept_id, ThresholdMode mode);

/// Top-k dims by APCR. The sign is +1 when the positive sweep end raises the
/// concept_id probability more than the negative end.
ControllingSet sequential_controlling_set(const ApcrMatrix& matrix, ConceptId concept_id, std::size_t k);

/// |dims(a) & dims(b)| / k for two sets of equal size k. Signs are ignored.
double intersection_ratio(const ControllingSet& a, const ControllingSet& b);

std::string optimization_result_to_json(const OptimizationResult& result);
OptimizationResult optimization_result_from_json(const std::string& text);

}  // namespace latentprobe

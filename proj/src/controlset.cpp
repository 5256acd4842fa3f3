#include "latentprobe/controlset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"
#include "latentprobe/errors.hpp"
#include "latentprobe/parallel.hpp"

namespace latentprobe {

namespace {

double concept_score(const Generator& gen, const Classifier& clf, const LatentVector& z, std::size_t concept_id) {
    return clf.classify(gen.generate(z))[concept_id];
}

void check_batch(const Generator& gen, std::span<const LatentVector> bases, const char* name) {
    if (bases.empty()) throw InvalidArgument(std::string(name) + " batch is empty");
    for (const auto& z : bases) {
        if (z.size() != gen.latent_width()) {
            throw ShapeError(std::string(name) + " latent width " + std::to_string(z.size()) + " != " +
                             std::to_string(gen.latent_width()));
        }
    }
}

void check_weights(const Generator& gen, std::span<const double> w) {
    if (w.size() != gen.latent_width()) {
        throw ShapeError("weight length " + std::to_string(w.size()) + " != latent width " +
                         std::to_string(gen.latent_width()));
    }
}

std::vector<double> base_scores(const Generator& gen, const Classifier& clf, std::span<const LatentVector> bases,
                                std::size_t concept_id) {
    std::vector<double> out;
    out.reserve(bases.size());
    for (const auto& z : bases) out.push_back(concept_score(gen, clf, z, concept_id));
    return out;
}

/// Mean signed change of `concept_id` when every base moves by sign * xi * w.
double mean_shift(const Generator& gen, const Classifier& clf, std::span<const LatentVector> bases,
                  std::span<const double> base, std::size_t concept_id, std::span<const double> w, double xi, int sign,
                  bool absolute) {
    double acc = 0.0;
    for (std::size_t b = 0; b < bases.size(); ++b) {
        const double moved = concept_score(gen, clf, intervene_weighted(bases[b], w, xi, sign), concept_id);
        const double d = moved - base[b];
        acc += absolute ? std::abs(d) : d;
    }
    return acc / static_cast<double>(bases.size());
}

/// Smooth (data) part of the objective plus reporting hooks, with cached base scores.
struct Problem {
    std::function<double(std::span<const double>)> data;
    std::function<std::vector<double>(std::span<const double>)> signed_shifts;
};

void prox_penalty(std::vector<double>& v, double step_lambda, Penalty penalty) {
    if (step_lambda <= 0.0) return;
    if (penalty == Penalty::squared) {
        const double scale = 1.0 / (1.0 + 2.0 * step_lambda);
        for (auto& x : v) x *= scale;
        return;
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    const double scale = norm > step_lambda ? 1.0 - step_lambda / norm : 0.0;
    for (auto& x : v) x *= scale;
}

constexpr int kMaxStarts = 4;

OptimizationResult descend(const Problem& problem, std::vector<double> w, const OptimizerConfig& cfg) {
    const std::size_t n = w.size();
    const auto full = [&](std::span<const double> v) { return problem.data(v) + penalty_value(v, cfg); };

    OptimizationResult result;
    result.config = cfg;
    result.initial_objective = full(w);
    if (!std::isfinite(result.initial_objective)) throw NumericError("objective is not finite at the start point", 0);

    std::vector<double> best = w;
    double best_value = result.initial_objective;
    result.objective_history.reserve(static_cast<std::size_t>(cfg.iterations));

    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<double> grad;
        try {
            grad = estimate_gradient(problem.data, w, cfg.fd_step, cfg.threads);
        } catch (const NumericError& e) {
            throw NumericError(std::string("gradient estimate failed: ") + e.what(), it);
        }
        for (std::size_t i = 0; i < n; ++i) w[i] -= cfg.step_size * grad[i];
        prox_penalty(w, cfg.step_size * cfg.lambda, cfg.penalty);
        for (auto& x : w) x = std::clamp(x, -1.0, 1.0);

        const double value = full(w);
        if (!std::isfinite(value)) throw NumericError("objective diverged", it);
        result.objective_history.push_back(value);
        if (value < best_value) {
            best_value = value;
            best = w;
            result.best_iteration = it;
        }
    }
    result.delta_s = problem.signed_shifts(best);
    result.w = WeightVector(std::move(best));
    return result;
}

OptimizationResult run_descent(const Problem& problem, std::size_t n, const OptimizerConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> init(-cfg.init_scale, cfg.init_scale);
    OptimizationResult best;
    for (int attempt = 0; attempt < kMaxStarts; ++attempt) {
        std::vector<double> w(n);
        for (auto& x : w) x = init(rng);
        if (cfg.init_scale > 1.0) {
            for (auto& x : w) x = std::clamp(x, -1.0, 1.0);
        }
        // |dS| has a shallow basin where the intervention suppresses the
        // concept. Start on the side that raises it, and draw a fresh start
        // if the run still ends up suppressing.
        const auto start_shift = problem.signed_shifts(w);
        if (std::accumulate(start_shift.begin(), start_shift.end(), 0.0) < 0.0) {
            for (auto& x : w) x = -x;
        }
        auto run = descend(problem, std::move(w), cfg);
        const bool suppressing = std::accumulate(run.delta_s.begin(), run.delta_s.end(), 0.0) < 0.0;
        if (attempt == 0 || run.final_objective() < best.final_objective()) best = std::move(run);
        if (!suppressing) break;
    }
    return best;
}

}  // namespace

std::string to_string(Penalty p) { return p == Penalty::norm ? "l2" : "l2-squared"; }

Penalty penalty_from_string(const std::string& s) {
    if (s == "l2") return Penalty::norm;
    if (s == "l2-squared") return Penalty::squared;
    throw InvalidArgument("unknown penalty '" + s + "'");
}

void OptimizerConfig::validate() const {
    if (!(xi > 0.0) || !std::isfinite(xi)) throw InvalidArgument("xi must be > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be >= 0");
    if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
    if (!(step_size > 0.0)) throw InvalidArgument("step size must be > 0");
    if (!(fd_step > 0.0)) throw InvalidArgument("finite-difference step must be > 0");
    if (!(init_scale >= 0.0)) throw InvalidArgument("init scale must be >= 0");
}

double penalty_value(std::span<const double> w, const OptimizerConfig& cfg) {
    const double sq = std::inner_product(w.begin(), w.end(), w.begin(), 0.0);
    return cfg.lambda * (cfg.penalty == Penalty::squared ? sq : std::sqrt(sq));
}

double objective_single(const Generator& gen, const Classifier& clf, std::span<const LatentVector> bases,
                        ConceptId concept_id, std::span<const double> w, const OptimizerConfig& cfg) {
    check_compatible(gen, clf);
    check_concept(concept_id, clf.concept_count());
    check_batch(gen, bases, "base");
    check_weights(gen, w);
    const auto base = base_scores(gen, clf, bases, concept_id.index);
    return 1.0 - mean_shift(gen, clf, bases, base, concept_id.index, w, cfg.xi, 1, true) + penalty_value(w, cfg);
}

double objective_class2class(const Generator& gen, const Classifier& clf, std::span<const LatentVector> bases_j,
                             std::span<const LatentVector> bases_k, ConceptId j, ConceptId k,
                             std::span<const double> w, const OptimizerConfig& cfg) {
    check_compatible(gen, clf);
    check_concept(j, clf.concept_count());
    check_concept(k, clf.concept_count());
    if (j == k) throw InvalidArgument("class-to-class needs two distinct concepts");
    check_batch(gen, bases_j, "class-j");
    check_batch(gen, bases_k, "class-k");
    check_weights(gen, w);
    const auto base_kj = base_scores(gen, clf, bases_k, j.index);
    const auto base_jk = base_scores(gen, clf, bases_j, k.index);
    const double k_to_j = mean_shift(gen, clf, bases_k, base_kj, j.index, w, cfg.xi, -1, true);
    const double j_to_k = mean_shift(gen, clf, bases_j, base_jk, k.index, w, cfg.xi, 1, true);
    return 2.0 - k_to_j - j_to_k + penalty_value(w, cfg);
}

std::vector<double> estimate_gradient(const BlackBox& f, std::span<const double> w, double fd_step, unsigned threads) {
    if (!(fd_step > 0.0)) throw InvalidArgument("finite-difference step must be > 0");
    std::vector<double> grad(w.size());
    parallel_for(w.size(), threads, [&](std::size_t i) {
        std::vector<double> probe(w.begin(), w.end());
        probe[i] = w[i] + fd_step;
        const double up = f(probe);
        probe[i] = w[i] - fd_step;
        const double down = f(probe);
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("objective is not finite at coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * fd_step);
    });
    return grad;
}

OptimizationResult optimize_weights(const Generator& gen, const Classifier& clf, std::span<const LatentVector> bases,
                                    ConceptId concept_id, const OptimizerConfig& cfg) {
    cfg.validate();
    check_compatible(gen, clf);
    check_concept(concept_id, clf.concept_count());
    check_batch(gen, bases, "base");

    const auto base = base_scores(gen, clf, bases, concept_id.index);
    Problem problem;
    problem.data = [&](std::span<const double> w) {
        return 1.0 - mean_shift(gen, clf, bases, base, concept_id.index, w, cfg.xi, 1, true);
    };
    problem.signed_shifts = [&](std::span<const double> w) {
        return std::vector<double>{mean_shift(gen, clf, bases, base, concept_id.index, w, cfg.xi, 1, false)};
    };
    auto result = run_descent(problem, gen.latent_width(), cfg);
    result.concept_id = concept_id;
    return result;
}

OptimizationResult optimize_class2class(const Generator& gen, const Classifier& clf,
                                        std::span<const LatentVector> bases_j, std::span<const LatentVector> bases_k,
                                        ConceptId j, ConceptId k, const OptimizerConfig& cfg) {
    cfg.validate();
    check_compatible(gen, clf);
    check_concept(j, clf.concept_count());
    check_concept(k, clf.concept_count());
    if (j == k) throw InvalidArgument("class-to-class needs two distinct concepts");
    check_batch(gen, bases_j, "class-j");
    check_batch(gen, bases_k, "class-k");

    const auto base_kj = base_scores(gen, clf, bases_k, j.index);
    const auto base_jk = base_scores(gen, clf, bases_j, k.index);
    Problem problem;
    problem.data = [&](std::span<const double> w) {
        return 2.0 - mean_shift(gen, clf, bases_k, base_kj, j.index, w, cfg.xi, -1, true) -
               mean_shift(gen, clf, bases_j, base_jk, k.index, w, cfg.xi, 1, true);
    };
    problem.signed_shifts = [&](std::span<const double> w) {
        return std::vector<double>{mean_shift(gen, clf, bases_k, base_kj, j.index, w, cfg.xi, -1, false),
                                   mean_shift(gen, clf, bases_j, base_jk, k.index, w, cfg.xi, 1, false)};
    };
    auto result = run_descent(problem, gen.latent_width(), cfg);
    result.concept_id = j;
    result.target = k;
    return result;
}

ControllingSet threshold_controlling_set(const OptimizationResult& result, ConceptId concept_id, ThresholdMode mode) {
    const auto w = result.w.values();
    ControllingSet set;
    set.concept_id = concept_id;
    set.provenance = Provenance::optimized;

    std::vector<std::size_t> order(w.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(w[a]) > std::abs(w[b]); });

    std::size_t keep = 0;
    if (mode.kind == ThresholdMode::Kind::absolute) {
        if (!(mode.t > 0.0)) throw InvalidArgument("threshold must be > 0");
        while (keep < order.size() && std::abs(w[order[keep]]) > mode.t) ++keep;
        set.threshold = mode.t;
    } else {
        if (mode.k < 1) throw InvalidArgument("top-k needs k >= 1");
        if (mode.k > w.size()) throw InvalidArgument("top-k larger than latent width");
        keep = mode.k;
    }
    for (std::size_t r = 0; r < keep; ++r) {
        const std::size_t d = order[r];
        set.entries.push_back({d, w[d] < 0.0 ? -1 : 1});
    }
    return set;
}

ControllingSet sequential_controlling_set(const ApcrMatrix& matrix, ConceptId concept_id, std::size_t k) {
    if (k > matrix.n) throw InvalidArgument("k larger than latent width");
    const auto ranked = rank_dimensions(matrix, concept_id);
    ControllingSet set;
    set.concept_id = concept_id;
    set.provenance = Provenance::sequential;
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t d = ranked[r].dim;
        set.entries.push_back({d, matrix.direction_at(d, concept_id.index) < 0.0 ? -1 : 1});
    }
    return set;
}

double intersection_ratio(const ControllingSet& a, const ControllingSet& b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("intersection ratio needs equal-size sets (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    if (a.size() == 0) throw InvalidArgument("intersection ratio of empty sets is undefined");
    const auto da = a.dims();
    const std::set<std::size_t> sa(da.begin(), da.end());
    std::size_t shared = 0;
    for (std::size_t d : b.dims()) shared += sa.count(d);
    return static_cast<double>(shared) / static_cast<double>(a.size());
}

std::string optimization_result_to_json(const OptimizationResult& result) {
    const auto& c = result.config;
    nlohmann::json doc;
    doc["concept"] = result.concept_id.index;
    if (result.target) doc["target"] = result.target->index;
    doc["w"] = std::vector<double>(result.w.values().begin(), result.w.values().end());
    doc["objective_history"] = result.objective_history;
    doc["initial_objective"] = result.initial_objective;
    doc["best_iteration"] = result.best_iteration;
    doc["delta_s"] = result.delta_s;
    doc["config"] = {{"xi", c.xi},           {"lambda", c.lambda},       {"iterations", c.iterations},
                     {"step_size", c.step_size}, {"fd_step", c.fd_step}, {"seed", c.seed},
                     {"init_scale", c.init_scale}, {"batch", c.batch},   {"penalty", to_string(c.penalty)}};
    return doc.dump();
}

OptimizationResult optimization_result_from_json(const std::string& text) {
    OptimizationResult r;
    try {
        const auto doc = nlohmann::json::parse(text);
        r.concept_id.index = doc.at("concept").get<std::size_t>();
        if (doc.contains("target")) r.target = ConceptId{doc.at("target").get<std::size_t>()};
        r.w = WeightVector(doc.at("w").get<std::vector<double>>());
        r.objective_history = doc.at("objective_history").get<std::vector<double>>();
        r.initial_objective = doc.value("initial_objective", 0.0);
        r.best_iteration = doc.value("best_iteration", -1L);
        r.delta_s = doc.value("delta_s", std::vector<double>{});
        const auto& c = doc.at("config");
        r.config.xi = c.at("xi").get<double>();
        r.config.lambda = c.at("lambda").get<double>();
        r.config.iterations = c.at("iterations").get<int>();
        r.config.step_size = c.at("step_size").get<double>();
        r.config.fd_step = c.at("fd_step").get<double>();
        r.config.seed = c.at("seed").get<std::uint64_t>();
        r.config.init_scale = c.at("init_scale").get<double>();
        r.config.batch = c.at("batch").get<std::size_t>();
        r.config.penalty = penalty_from_string(c.at("penalty").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad optimization result json: ") + e.what());
    }
    return r;
}

}  // namespace latentprobe

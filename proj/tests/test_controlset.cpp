#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "latentprobe/controlset.hpp"
#include "latentprobe/errors.hpp"
#include "support.hpp"

using namespace latentprobe;
using testsupport::softmax_oracle;

namespace {

std::vector<double> zv(const LatentVector& z) { return {z.values().begin(), z.values().end()}; }

OptimizationResult fake_result(std::vector<double> w) {
    OptimizationResult r;
    r.w = WeightVector(std::move(w));
    return r;
}

ControllingSet set_of(std::vector<std::size_t> dims) {
    ControllingSet s;
    for (auto d : dims) s.entries.push_back({d, 1});
    return s;
}

}  // namespace

TEST_CASE("config validation") {
    OptimizerConfig cfg;
    CHECK(cfg.xi == 3.0);
    CHECK(cfg.lambda == 0.01);
    CHECK(cfg.iterations == 200);
    CHECK(cfg.step_size == 0.05);
    CHECK(cfg.fd_step == 1e-3);
    CHECK(cfg.batch == 16);
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.xi = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.lambda = -1;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.iterations = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.fd_step = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK(penalty_from_string("l2-squared") == Penalty::squared);
    CHECK_THROWS_AS(penalty_from_string("l1"), InvalidArgument);
}

TEST_CASE("single-concept objective") {
    const auto spec = testsupport::one_dim_spec(6, 3, {0, 2, 4}, 2.0);
    const auto pair = make_synthetic_generator(spec);
    const auto bases = sample_latents(6, 5, 3);
    OptimizerConfig cfg;

    SUBCASE("zero weights give 1") {
        CHECK(objective_single(*pair.generator, *pair.classifier, bases, ConceptId{1}, std::vector<double>(6, 0.0),
                               cfg) == 1.0);
    }
    SUBCASE("closed form at a unit vector") {
        cfg.lambda = 0.0;
        std::vector<double> w(6, 0.0);
        w[2] = 1.0;
        double expect = 0.0;
        for (const auto& z : bases) {
            auto moved = zv(z);
            moved[2] += cfg.xi;
            expect += 1.0 - std::abs(softmax_oracle(testsupport::logits_oracle(spec, moved))[1] -
                                     softmax_oracle(testsupport::logits_oracle(spec, zv(z)))[1]);
        }
        expect /= bases.size();
        CHECK(objective_single(*pair.generator, *pair.classifier, bases, ConceptId{1}, w, cfg) ==
              doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("penalty") {
        std::vector<double> w{0.3, 0, 0, 0.4, 0, 0};
        CHECK(penalty_value(w, cfg) == doctest::Approx(0.005));
        cfg.penalty = Penalty::squared;
        CHECK(penalty_value(w, cfg) == doctest::Approx(0.0025));
    }
    SUBCASE("property: objective stays within [0, 1 + lambda sqrt(N)]") {
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        cfg.lambda = 0.5;
        for (int t = 0; t < 50; ++t) {
            std::vector<double> w(6);
            for (auto& x : w) x = u(rng);
            const double f = objective_single(*pair.generator, *pair.classifier, bases, ConceptId{0}, w, cfg);
            CHECK(f >= 0.0);
            CHECK(f <= 1.0 + cfg.lambda * std::sqrt(6.0));
        }
    }
    SUBCASE("shape errors") {
        CHECK_THROWS_AS(objective_single(*pair.generator, *pair.classifier, bases, ConceptId{0},
                                         std::vector<double>(5, 0.0), cfg),
                        ShapeError);
        CHECK_THROWS_AS(objective_single(*pair.generator, *pair.classifier, bases, ConceptId{3},
                                         std::vector<double>(6, 0.0), cfg),
                        IndexError);
    }
}

TEST_CASE("class-to-class objective") {
    const auto spec = testsupport::opposed_spec(4, 1, 2.0);
    const auto pair = make_synthetic_generator(spec);
    const auto bj = sample_latents(4, 4, 1);
    const auto bk = sample_latents(4, 4, 2);
    OptimizerConfig cfg;
    CHECK(objective_class2class(*pair.generator, *pair.classifier, bj, bk, ConceptId{0}, ConceptId{1},
                                std::vector<double>(4, 0.0), cfg) == 2.0);
    CHECK_THROWS_AS(objective_class2class(*pair.generator, *pair.classifier, bj, bk, ConceptId{0}, ConceptId{0},
                                          std::vector<double>(4, 0.0), cfg),
                    InvalidArgument);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> w(4);
        for (auto& x : w) x = u(rng);
        CHECK(objective_class2class(*pair.generator, *pair.classifier, bj, bk, ConceptId{0}, ConceptId{1}, w, cfg) >=
              0.0);
    }
}

TEST_CASE("finite-difference gradients") {
    SUBCASE("quadratic") {
        const BlackBox f = [](std::span<const double> w) {
            return std::inner_product(w.begin(), w.end(), w.begin(), 0.0);
        };
        const std::vector<double> w{0.5, -0.25, 0.125};
        const auto g = estimate_gradient(f, w, 1e-3);
        for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(2 * w[i]).epsilon(1e-9));
        CHECK(estimate_gradient(f, w, 1e-3, 2) == g);
    }
    SUBCASE("constant") {
        const BlackBox f = [](std::span<const double>) { return 4.0; };
        for (double g : estimate_gradient(f, std::vector<double>{1, 2}, 1e-3)) CHECK(g == 0.0);
    }
    SUBCASE("non-finite values") {
        const BlackBox f = [](std::span<const double> w) {
            return w[0] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        };
        CHECK_THROWS_AS(estimate_gradient(f, std::vector<double>{0.0}, 1e-3), NumericError);
        CHECK_THROWS_AS(estimate_gradient(f, std::vector<double>{0.0}, 0.0), InvalidArgument);
    }
    SUBCASE("matches the hand-derived synthetic gradient") {
        const auto spec = testsupport::random_spec(12, 3, 2, 4);
        const auto pair = make_synthetic_generator(spec);
        const auto bases = sample_latents(12, 4, 6);
        OptimizerConfig cfg;
        cfg.fd_step = 1e-5;
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (int t = 0; t < 5; ++t) {
            std::vector<double> w(12);
            for (auto& x : w) x = u(rng);
            const BlackBox f = [&](std::span<const double> v) {
                return objective_single(*pair.generator, *pair.classifier, bases, ConceptId{1}, v, cfg);
            };
            const auto fd = estimate_gradient(f, w, cfg.fd_step);
            const auto exact = testsupport::analytic_gradient(spec, bases, 1, w, cfg.xi, cfg.lambda);
            double err = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < 12; ++i) {
                err = std::max(err, std::abs(fd[i] - exact[i]));
                scale = std::max(scale, std::abs(exact[i]));
            }
            CHECK(err / scale < 1e-4);
        }
    }
}

TEST_CASE("optimize_weights on a one-dim spec") {
    const auto spec = testsupport::one_dim_spec(20, 4, {3, 8, 12, 17}, 2.0);
    const auto pair = make_synthetic_generator(spec);
    const auto bases = sample_latents(20, 16, 1);
    OptimizerConfig cfg;
    const auto result = optimize_weights(*pair.generator, *pair.classifier, bases, ConceptId{2}, cfg);

    CHECK(result.objective_history.size() == 200);
    CHECK(result.final_objective() <= result.initial_objective);
    CHECK(std::abs(result.w[12]) > 0.9);
    // Dims that drive no class have zero gradient. Other classes' control dims
    // may carry weight, since lowering a competitor's logit also raises S_2.
    for (std::size_t i = 0; i < 20; ++i) {
        if (i != 3 && i != 8 && i != 12 && i != 17) CHECK(std::abs(result.w[i]) < 0.1);
        if (i != 12) CHECK(std::abs(result.w[i]) < std::abs(result.w[12]));
    }
    for (double x : result.w.values()) CHECK((x >= -1.0 && x <= 1.0));
    for (double v : result.objective_history) CHECK((std::isfinite(v) && v >= 0.0));

    SUBCASE("agrees with exhaustive single-dim search") {
        std::size_t best_dim = 0;
        double best = -1.0;
        for (std::size_t d = 0; d < 20; ++d) {
            for (double off : {-cfg.xi, cfg.xi}) {
                double shift = 0.0;
                for (const auto& z : bases) {
                    auto moved = zv(z);
                    moved[d] += off;
                    shift += std::abs(softmax_oracle(testsupport::logits_oracle(spec, moved))[2] -
                                      softmax_oracle(testsupport::logits_oracle(spec, zv(z)))[2]);
                }
                if (shift > best) {
                    best = shift;
                    best_dim = d;
                }
            }
        }
        std::size_t top = 0;
        for (std::size_t i = 1; i < 20; ++i)
            if (std::abs(result.w[i]) > std::abs(result.w[top])) top = i;
        CHECK(top == best_dim);
    }
    SUBCASE("deterministic") {
        const auto again = optimize_weights(*pair.generator, *pair.classifier, bases, ConceptId{2}, cfg);
        CHECK(again.w == result.w);
        auto threaded = cfg;
        threaded.threads = 3;
        CHECK(optimize_weights(*pair.generator, *pair.classifier, bases, ConceptId{2}, threaded).w == result.w);
    }
    SUBCASE("strong regularization") {
        auto heavy = cfg;
        heavy.lambda = 1e3;
        CHECK(optimize_weights(*pair.generator, *pair.classifier, bases, ConceptId{2}, heavy).w.norm() < 0.05);
    }
}

TEST_CASE("property: larger lambda never grows the weights") {
    const auto spec = testsupport::random_spec(12, 3, 2, 12);
    const auto pair = make_synthetic_generator(spec);
    const auto bases = sample_latents(12, 16, 1);
    OptimizerConfig cfg;
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {0.001, 0.01, 0.1, 1.0}) {
        cfg.lambda = lambda;
        const double norm = optimize_weights(*pair.generator, *pair.classifier, bases, ConceptId{0}, cfg).w.norm();
        CHECK(norm <= prev + 1e-6);
        prev = norm;
    }
}

TEST_CASE("property: optimized weights raise their concept on average") {
    // Several classes of this spec land in the suppressing basin from the first start.
    const auto spec = testsupport::random_spec(100, 10, 5, 17);
    const auto pair = make_synthetic_generator(spec);
    const auto bases = sample_latents(100, 16, 1);
    for (std::size_t c = 0; c < 10; ++c) {
        const auto r = optimize_weights(*pair.generator, *pair.classifier, bases, ConceptId{c}, OptimizerConfig{});
        CHECK(r.delta_s[0] > 0.0);
        CHECK(r.final_objective() <= r.initial_objective);
        CHECK(intersection_ratio(threshold_controlling_set(r, ConceptId{c}, ThresholdMode::top(5)),
                                 pair.ground_truth[c]) == 1.0);
    }
}

TEST_CASE("optimize_class2class") {
    const auto spec = testsupport::opposed_spec(10, 6, 2.0);
    const auto pair = make_synthetic_generator(spec);
    const auto bj = sample_latents(10, 8, 1);
    const auto bk = sample_latents(10, 8, 2);
    OptimizerConfig cfg;
    cfg.iterations = 100;
    const auto r = optimize_class2class(*pair.generator, *pair.classifier, bj, bk, ConceptId{0}, ConceptId{1}, cfg);
    CHECK(r.target.has_value());
    CHECK(r.delta_s.size() == 2);
    // Class 1 rises with +z6, so moving class-0 latents by +xi w needs w6 > 0.
    CHECK(r.w[6] > 0.9);
    for (std::size_t i = 0; i < 10; ++i) {
        if (i != 6) CHECK(std::abs(r.w[i]) < 0.1);
    }
    CHECK(optimize_class2class(*pair.generator, *pair.classifier, bj, bk, ConceptId{0}, ConceptId{1}, cfg).w == r.w);
    CHECK_THROWS_AS(
        optimize_class2class(*pair.generator, *pair.classifier, bj, bk, ConceptId{1}, ConceptId{1}, cfg),
        InvalidArgument);
}

TEST_CASE("thresholding") {
    const auto r = fake_result({0.9, -0.8, 0.01, 0.0});
    const auto s = threshold_controlling_set(r, ConceptId{2}, ThresholdMode::absolute(0.5));
    CHECK(s.entries == std::vector<ControlEntry>{{0, 1}, {1, -1}});
    CHECK(s.provenance == Provenance::optimized);
    CHECK(s.threshold == 0.5);
    CHECK(threshold_controlling_set(r, ConceptId{2}, ThresholdMode::absolute(0.95)).entries.empty());
    CHECK_THROWS_AS(threshold_controlling_set(r, ConceptId{2}, ThresholdMode::absolute(0.0)), InvalidArgument);
    CHECK_THROWS_AS(threshold_controlling_set(r, ConceptId{2}, ThresholdMode::top(5)), InvalidArgument);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> w(30);
    for (auto& x : w) x = u(rng);
    const auto top5 = threshold_controlling_set(fake_result(w), ConceptId{0}, ThresholdMode::top(5));
    CHECK(top5.size() == 5);
    for (std::size_t i = 1; i < 5; ++i) CHECK(std::abs(w[top5.entries[i - 1].dim]) >= std::abs(w[top5.entries[i].dim]));

    const auto tied = threshold_controlling_set(fake_result({0.5, -0.5, 0.5}), ConceptId{0}, ThresholdMode::top(2));
    CHECK(tied.dims() == std::vector<std::size_t>{0, 1});
}

TEST_CASE("sequential controlling sets") {
    const auto spec = testsupport::random_spec(30, 3, 3, 9);
    const auto pair = make_synthetic_generator(spec);
    const auto mat = apcr_matrix(*pair.generator, *pair.classifier, sample_latents(30, 8, 3), 0.5, 10,
                                 ApcrVariant::endpoint);
    for (std::size_t c = 0; c < 3; ++c) {
        const auto seq = sequential_controlling_set(mat, ConceptId{c}, 3);
        CHECK(seq.provenance == Provenance::sequential);
        CHECK(intersection_ratio(seq, pair.ground_truth[c]) == 1.0);
        for (const auto& e : seq.entries) {
            for (const auto& t : pair.ground_truth[c].entries)
                if (t.dim == e.dim) CHECK(t.sign == e.sign);
        }
    }
    CHECK(sequential_controlling_set(mat, ConceptId{0}, 30).size() == 30);
    CHECK(sequential_controlling_set(mat, ConceptId{0}, 5) == sequential_controlling_set(mat, ConceptId{0}, 5));
    CHECK_THROWS_AS(sequential_controlling_set(mat, ConceptId{0}, 31), InvalidArgument);
}

TEST_CASE("intersection ratio") {
    const auto a = set_of({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const auto b = set_of({9, 8, 7, 6, 5, 4, 3, 2, 1, 42});
    CHECK(intersection_ratio(a, a) == 1.0);
    CHECK(intersection_ratio(a, set_of({10, 11, 12, 13, 14, 15, 16, 17, 18, 19})) == 0.0);
    CHECK(intersection_ratio(a, b) == doctest::Approx(0.9));
    CHECK(intersection_ratio(a, b) == intersection_ratio(b, a));
    CHECK_THROWS_AS(intersection_ratio(a, set_of({1})), InvalidArgument);
    CHECK_THROWS_AS(intersection_ratio(set_of({}), set_of({})), InvalidArgument);

    auto flipped = a;
    for (auto& e : flipped.entries) e.sign = -1;
    CHECK(intersection_ratio(a, flipped) == 1.0);
}

TEST_CASE("optimization result json") {
    const auto spec = testsupport::one_dim_spec(5, 2, {0, 3}, 2.0);
    const auto pair = make_synthetic_generator(spec);
    OptimizerConfig cfg;
    cfg.iterations = 5;
    cfg.penalty = Penalty::squared;
    const auto r = optimize_weights(*pair.generator, *pair.classifier, sample_latents(5, 2, 1), ConceptId{1}, cfg);
    const auto back = optimization_result_from_json(optimization_result_to_json(r));
    CHECK(back.w == r.w);
    CHECK(back.objective_history == r.objective_history);
    CHECK(back.concept_id == r.concept_id);
    CHECK(back.config.penalty == Penalty::squared);
    CHECK(back.best_iteration == r.best_iteration);
    CHECK_THROWS_AS(optimization_result_from_json("{}"), ValidationError);
}

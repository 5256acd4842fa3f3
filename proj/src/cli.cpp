#include "latentprobe/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "latentprobe/apcr.hpp"
#include "latentprobe/controlset.hpp"
#include "latentprobe/errors.hpp"
#include "latentprobe/manipulate.hpp"
#include "latentprobe/models.hpp"

namespace latentprobe {

namespace {

struct ModelFlags {
    std::string gen;
    std::string clf;
    std::string synth;
    unsigned threads = 1;

    void add(CLI::App& app) {
        app.add_option("--gen", gen, "Generator weight file (LPWF)");
        app.add_option("--clf", clf, "Classifier weight file (LPWF)");
        app.add_option("--synth", synth, "Synthetic testbed spec (JSON) instead of weight files");
        app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    }
};

struct Context {
    std::ostream& out;
    std::ostream& err;

    void stage(const std::string& line) const { err << "[probe] " << line << '\n'; }
};

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

ModelPair open_models(const ModelFlags& flags) {
    if (!flags.synth.empty()) {
        if (!flags.gen.empty() || !flags.clf.empty()) throw InvalidArgument("--synth excludes --gen/--clf");
        return make_synthetic_generator(synthetic_spec_from_json(read_text(flags.synth)));
    }
    if (flags.gen.empty() || flags.clf.empty()) throw InvalidArgument("--gen and --clf are required (or --synth)");
    return load_model_pair(flags.gen, flags.clf);
}

/// Draws latents from one seeded stream until `count` of them classify as `concept_id`.
std::vector<LatentVector> class_bases(const ModelPair& models, ConceptId concept_id, std::size_t count,
                                      std::uint64_t seed) {
    const std::size_t n = models.generator->latent_width();
    const std::size_t budget = std::max<std::size_t>(1000, 500 * count);
    const auto pool = sample_latents(n, budget, seed);
    std::vector<LatentVector> out;
    for (const auto& z : pool) {
        if (models.classifier->classify(models.generator->generate(z)).argmax() == concept_id.index) out.push_back(z);
        if (out.size() == count) return out;
    }
    throw Error("found only " + std::to_string(out.size()) + " of " + std::to_string(count) +
                " latents classified as class " + std::to_string(concept_id.index));
}

void add_optimizer_flags(CLI::App& app, OptimizerConfig& cfg, std::string& penalty) {
    app.add_option("--xi", cfg.xi, "Intervention scale")->capture_default_str();
    app.add_option("--lambda", cfg.lambda, "Regularization weight")->capture_default_str();
    app.add_option("--iters", cfg.iterations, "Descent iterations")->capture_default_str();
    app.add_option("--step", cfg.step_size, "Descent step size")->capture_default_str();
    app.add_option("--fd-step", cfg.fd_step, "Finite-difference probe")->capture_default_str();
    app.add_option("--init-scale", cfg.init_scale, "Initial weights ~ U(-s, s)")->capture_default_str();
    app.add_option("--bases", cfg.batch, "Base latents per batch")->capture_default_str();
    app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    app.add_option("--penalty", penalty, "l2 | l2-squared")->capture_default_str();
}

std::string format_ratio(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// --- apcr -----------------------------------------------------------------

struct ApcrFlags {
    ModelFlags models;
    double delta = 0.5;
    int steps = 10;
    std::size_t bases = 16;
    std::uint64_t seed = 1;
    bool single_base = false;
    std::string variant = "endpoint";
    std::string out;
    std::string json;
    std::string hist;
    std::size_t bins = 20;
    std::optional<std::size_t> concept_id;
    std::string set;
    std::string sets_dir;
    std::size_t topk = 10;
};

int cmd_apcr(const ApcrFlags& f, const Context& ctx) {
    const auto models = open_models(f.models);
    const auto variant = apcr_variant_from_string(f.variant);
    const std::size_t count = f.single_base ? 1 : f.bases;
    if (count == 0) throw InvalidArgument("--bases must be >= 1");
    const auto bases = sample_latents(models.generator->latent_width(), count, f.seed);
    ctx.stage("sweeping " + std::to_string(models.generator->latent_width()) + " dims over " +
              std::to_string(count) + " base latents");
    const auto matrix = apcr_matrix(*models.generator, *models.classifier, bases, f.delta, f.steps, variant,
                                    f.models.threads);

    write_text(f.out, apcr_to_csv(matrix));
    ctx.stage("wrote " + f.out);
    if (!f.json.empty()) write_text(f.json, apcr_to_json(matrix));
    if (!f.hist.empty()) {
        if (!f.concept_id) throw InvalidArgument("--hist requires --class");
        write_text(f.hist, histogram_to_csv(apcr_histogram(matrix, ConceptId{*f.concept_id}, f.bins)));
    }
    if (!f.set.empty()) {
        if (!f.concept_id) throw InvalidArgument("--set requires --class");
        write_text(f.set, controlling_set_to_json(sequential_controlling_set(matrix, ConceptId{*f.concept_id}, f.topk)));
    }
    if (!f.sets_dir.empty()) {
        std::filesystem::create_directories(f.sets_dir);
        for (std::size_t c = 0; c < matrix.l; ++c) {
            const auto path = std::filesystem::path(f.sets_dir) / ("seq_class" + std::to_string(c) + ".json");
            write_text(path.string(), controlling_set_to_json(sequential_controlling_set(matrix, ConceptId{c}, f.topk)));
        }
    }
    return kExitOk;
}

// --- optimize -------------------------------------------------------------

struct OptimizeFlags {
    ModelFlags models;
    OptimizerConfig cfg;
    std::string penalty = "l2";
    std::size_t concept_id = 0;
    std::size_t topk = 10;
    std::optional<double> threshold;
    std::string out;
    std::string set;
};

int cmd_optimize(OptimizeFlags f, const Context& ctx) {
    const auto models = open_models(f.models);
    f.cfg.penalty = penalty_from_string(f.penalty);
    f.cfg.threads = f.models.threads;
    if (f.cfg.batch == 0) throw InvalidArgument("--bases must be >= 1");
    const auto bases = sample_latents(models.generator->latent_width(), f.cfg.batch, f.cfg.seed);
    ctx.stage("optimizing weights for class " + std::to_string(f.concept_id));
    const auto result = optimize_weights(*models.generator, *models.classifier, bases, ConceptId{f.concept_id}, f.cfg);
    ctx.stage("objective " + std::to_string(result.initial_objective) + " -> " +
              std::to_string(result.final_objective()));
    if (!f.out.empty()) write_text(f.out, optimization_result_to_json(result));
    if (!f.set.empty()) {
        const auto mode = f.threshold ? ThresholdMode::absolute(*f.threshold) : ThresholdMode::top(f.topk);
        write_text(f.set, controlling_set_to_json(threshold_controlling_set(result, ConceptId{f.concept_id}, mode)));
    }
    return kExitOk;
}

// --- translate ------------------------------------------------------------

struct TranslateFlags {
    ModelFlags models;
    OptimizerConfig cfg;
    std::string penalty = "l2";
    std::size_t from = 0;
    std::size_t to = 1;
    std::size_t show = 8;
    std::string out;
    std::string montage;
    std::string report;
};

int cmd_translate(TranslateFlags f, const Context& ctx) {
    const auto models = open_models(f.models);
    f.cfg.penalty = penalty_from_string(f.penalty);
    f.cfg.threads = f.models.threads;
    const ConceptId j{f.from};
    const ConceptId k{f.to};
    check_concept(j, models.classifier->concept_count());
    check_concept(k, models.classifier->concept_count());
    if (j == k) throw InvalidArgument("--from and --to must differ");
    if (f.cfg.batch == 0) throw InvalidArgument("--bases must be >= 1");

    const auto bases_j = class_bases(models, j, f.cfg.batch, f.cfg.seed);
    const auto bases_k = class_bases(models, k, f.cfg.batch, f.cfg.seed + 1);
    ctx.stage("optimizing class " + std::to_string(f.from) + " <-> " + std::to_string(f.to));
    const auto result = optimize_class2class(*models.generator, *models.classifier, bases_j, bases_k, j, k, f.cfg);
    if (!f.out.empty()) write_text(f.out, optimization_result_to_json(result));

    const std::size_t shown = std::min(f.show, f.cfg.batch);
    std::vector<std::vector<Image>> grid(4);
    nlohmann::json report = nlohmann::json::array();
    std::size_t flipped_jk = 0;
    std::size_t flipped_kj = 0;
    for (std::size_t b = 0; b < f.cfg.batch; ++b) {
        const auto fwd = translate(*models.generator, *models.classifier, bases_j[b], result.w, f.cfg.xi,
                                   TranslationDirection::forward);
        const auto bwd = translate(*models.generator, *models.classifier, bases_k[b], result.w, f.cfg.xi,
                                   TranslationDirection::backward);
        flipped_jk += fwd.probs.argmax() == k.index;
        flipped_kj += bwd.probs.argmax() == j.index;
        report.push_back({{"forward_argmax", fwd.probs.argmax()}, {"backward_argmax", bwd.probs.argmax()}});
        if (b < shown) {
            grid[0].push_back(models.generator->generate(bases_j[b]));
            grid[1].push_back(fwd.image);
            grid[2].push_back(models.generator->generate(bases_k[b]));
            grid[3].push_back(bwd.image);
        }
    }
    ctx.out << "flipped " << f.from << "->" << f.to << ": " << flipped_jk << "/" << f.cfg.batch << ", " << f.to
            << "->" << f.from << ": " << flipped_kj << "/" << f.cfg.batch << '\n';
    if (!f.montage.empty()) render_montage(grid, f.montage);
    if (!f.report.empty()) write_text(f.report, report.dump(2));
    return kExitOk;
}

// --- manipulate / impulse -------------------------------------------------

struct ManipulateFlags {
    ModelFlags models;
    std::string set;
    double strength = 3.0;
    int steps = 8;
    std::size_t count = 4;
    std::uint64_t seed = 1;
    std::string montage;
    std::string report;
};

int cmd_manipulate(const ManipulateFlags& f, const Context& ctx) {
    const auto models = open_models(f.models);
    const auto set = controlling_set_from_json(read_text(f.set));
    if (f.count == 0) throw InvalidArgument("--count must be >= 1");
    const auto bases = sample_latents(models.generator->latent_width(), f.count, f.seed);
    ctx.stage("manipulating " + std::to_string(f.count) + " latents along " + std::to_string(set.size()) + " dims");

    std::vector<std::vector<Image>> grid;
    nlohmann::json report = nlohmann::json::array();
    for (const auto& z : bases) {
        const auto frames = manipulate_with_set(*models.generator, *models.classifier, z, set, f.strength, f.steps);
        auto& row = grid.emplace_back();
        for (const auto& fr : frames) row.push_back(fr.image);
        report.push_back(nlohmann::json::parse(frames_to_json(frames)));
    }
    if (!f.montage.empty()) render_montage(grid, f.montage);
    if (!f.report.empty()) write_text(f.report, report.dump(2));
    return kExitOk;
}

struct ImpulseFlags {
    ModelFlags models;
    std::size_t dim = 0;
    double magnitude = 10.0;
    std::size_t count = 8;
    std::uint64_t seed = 1;
    std::string montage;
    std::string report;
};

int cmd_impulse(const ImpulseFlags& f, const Context& ctx) {
    const auto models = open_models(f.models);
    if (f.count == 0) throw InvalidArgument("--count must be >= 1");
    const auto bases = sample_latents(models.generator->latent_width(), f.count, f.seed);
    ctx.stage("impulse on dim " + std::to_string(f.dim));

    std::vector<std::vector<Image>> grid(3);
    nlohmann::json report = nlohmann::json::array();
    for (const auto& z : bases) {
        const auto base = models.generator->generate(z);
        const auto pos = extreme_impulse(*models.generator, *models.classifier, z, f.dim, f.magnitude, 1);
        const auto neg = extreme_impulse(*models.generator, *models.classifier, z, f.dim, f.magnitude, -1);
        grid[0].push_back(pos.image);
        grid[1].push_back(base);
        grid[2].push_back(neg.image);
        const std::size_t base_class = models.classifier->classify(base).argmax();
        report.push_back({{"base_argmax", base_class},
                          {"positive_argmax", pos.argmax.index},
                          {"negative_argmax", neg.argmax.index}});
        ctx.out << base_class << " +" << pos.argmax.index << " -" << neg.argmax.index << '\n';
    }
    if (!f.montage.empty()) render_montage(grid, f.montage);
    if (!f.report.empty()) write_text(f.report, report.dump(2));
    return kExitOk;
}

// --- ir -------------------------------------------------------------------

int cmd_ir(const std::string& a, const std::string& b, const Context& ctx) {
    const auto sa = controlling_set_from_json(read_text(a));
    const auto sb = controlling_set_from_json(read_text(b));
    ctx.out << format_ratio(intersection_ratio(sa, sb)) << '\n';
    return kExitOk;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const InvalidArgument*>(&e) || dynamic_cast<const IndexError*>(&e)) return kExitUsage;
    if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const IoError*>(&e) || dynamic_cast<const ShapeError*>(&e)) {
        return kExitFormat;
    }
    if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
    return kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Latent-space probing toolkit"};
    app.name("probe");
    app.require_subcommand(1);

    ApcrFlags apcr;
    auto* apcr_cmd = app.add_subcommand("apcr", "Rank latent dims per class by sequential intervention");
    apcr.models.add(*apcr_cmd);
    apcr_cmd->add_option("--delta", apcr.delta, "Sweep step")->capture_default_str();
    apcr_cmd->add_option("--steps", apcr.steps, "Steps per direction (m)")->capture_default_str();
    apcr_cmd->add_option("--bases", apcr.bases, "Base latents averaged")->capture_default_str();
    apcr_cmd->add_option("--seed", apcr.seed, "Random seed")->capture_default_str();
    apcr_cmd->add_flag("--single-base", apcr.single_base, "Analyze one base latent only");
    apcr_cmd->add_option("--variant", apcr.variant, "endpoint | total-variation")->capture_default_str();
    apcr_cmd->add_option("--out", apcr.out, "APCR matrix CSV")->required();
    apcr_cmd->add_option("--json", apcr.json, "APCR matrix JSON");
    apcr_cmd->add_option("--hist", apcr.hist, "Histogram CSV for --class");
    apcr_cmd->add_option("--bins", apcr.bins, "Histogram bins")->capture_default_str();
    apcr_cmd->add_option("--class", apcr.concept_id, "Concept index");
    apcr_cmd->add_option("--set", apcr.set, "Sequential controlling set JSON for --class");
    apcr_cmd->add_option("--sets-dir", apcr.sets_dir, "Write seq_class<j>.json for every class");
    apcr_cmd->add_option("--topk", apcr.topk, "Controlling-set size")->capture_default_str();

    OptimizeFlags opt;
    auto* opt_cmd = app.add_subcommand("optimize", "Find controlling dims by weighted intervention");
    opt.models.add(*opt_cmd);
    add_optimizer_flags(*opt_cmd, opt.cfg, opt.penalty);
    opt_cmd->add_option("--class", opt.concept_id, "Concept index")->required();
    opt_cmd->add_option("--topk", opt.topk, "Keep the k largest |w|")->capture_default_str();
    opt_cmd->add_option("--threshold", opt.threshold, "Keep |w| > t instead of top-k");
    opt_cmd->add_option("--out", opt.out, "Optimization result JSON");
    opt_cmd->add_option("--set", opt.set, "Controlling set JSON");

    TranslateFlags tr;
    auto* tr_cmd = app.add_subcommand("translate", "Class-to-class translation weights");
    tr.models.add(*tr_cmd);
    add_optimizer_flags(*tr_cmd, tr.cfg, tr.penalty);
    tr_cmd->add_option("--from", tr.from, "Source class j")->required();
    tr_cmd->add_option("--to", tr.to, "Target class k")->required();
    tr_cmd->add_option("--show", tr.show, "Montage columns")->capture_default_str();
    tr_cmd->add_option("--out", tr.out, "Optimization result JSON");
    tr_cmd->add_option("--montage", tr.montage, "PGM montage");
    tr_cmd->add_option("--report", tr.report, "Per-latent argmax report JSON");

    ManipulateFlags man;
    auto* man_cmd = app.add_subcommand("manipulate", "Intervene along a controlling set");
    man.models.add(*man_cmd);
    man_cmd->add_option("--set", man.set, "Controlling set JSON")->required();
    man_cmd->add_option("--strength", man.strength, "Final offset")->capture_default_str();
    man_cmd->add_option("--steps", man.steps, "Frames after the base")->capture_default_str();
    man_cmd->add_option("--count", man.count, "Base latents (montage rows)")->capture_default_str();
    man_cmd->add_option("--seed", man.seed, "Random seed")->capture_default_str();
    man_cmd->add_option("--montage", man.montage, "PGM montage");
    man_cmd->add_option("--report", man.report, "Frame report JSON");

    ImpulseFlags imp;
    auto* imp_cmd = app.add_subcommand("impulse", "Extreme single-dimension intervention");
    imp.models.add(*imp_cmd);
    imp_cmd->add_option("--dim", imp.dim, "Latent dim")->required();
    imp_cmd->add_option("--mag", imp.magnitude, "Impulse magnitude")->capture_default_str();
    imp_cmd->add_option("--count", imp.count, "Base latents")->capture_default_str();
    imp_cmd->add_option("--seed", imp.seed, "Random seed")->capture_default_str();
    imp_cmd->add_option("--montage", imp.montage, "PGM montage (rows: +, base, -)");
    imp_cmd->add_option("--report", imp.report, "Argmax report JSON");

    std::vector<std::string> ir_files;
    auto* ir_cmd = app.add_subcommand("ir", "Intersection ratio of two controlling sets");
    ir_cmd->add_option("sets", ir_files, "Two controlling-set JSON files")->required()->expected(2);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    const Context ctx{out, err};
    try {
        if (*apcr_cmd) return cmd_apcr(apcr, ctx);
        if (*opt_cmd) return cmd_optimize(opt, ctx);
        if (*tr_cmd) return cmd_translate(tr, ctx);
        if (*man_cmd) return cmd_manipulate(man, ctx);
        if (*imp_cmd) return cmd_impulse(imp, ctx);
        if (*ir_cmd) return cmd_ir(ir_files[0], ir_files[1], ctx);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        const int code = exit_code_for(e);
        if (code == kExitUsage) {
            const auto subs = app.get_subcommands();
            if (!subs.empty()) err << subs.front()->help();
        }
        return code;
    }
    return kExitUsage;
}

}  // namespace latentprobe

#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "latentprobe/cli.hpp"
#include "latentprobe/controlset.hpp"
#include "latentprobe/core.hpp"
#include "support.hpp"

using namespace latentprobe;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run probe(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

fs::path write_spec(const fs::path& dir, const SyntheticGeneratorSpec& spec) {
    const auto p = dir / "spec.json";
    spit(p, synthetic_spec_to_json(spec));
    return p;
}

/// Per-class argmax dim of an APCR CSV.
std::vector<std::size_t> top_dims(const std::string& csv, std::size_t l) {
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    std::vector<double> best(l, -1.0);
    std::vector<std::size_t> dims(l, 0);
    while (std::getline(lines, line)) {
        std::istringstream cells(line);
        std::string cell;
        std::getline(cells, cell, ',');
        const auto dim = static_cast<std::size_t>(std::stoul(cell));
        for (std::size_t c = 0; c < l; ++c) {
            std::getline(cells, cell, ',');
            const double v = std::stod(cell);
            if (v > best[c]) {
                best[c] = v;
                dims[c] = dim;
            }
        }
    }
    return dims;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    const auto r = probe({"apcr", "--out", "x.csv"});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("--gen") != std::string::npos);
    CHECK(probe({}).code == kExitUsage);
    CHECK(probe({"frobnicate"}).code == kExitUsage);
    CHECK(probe({"apcr", "--synth", "s.json"}).code == kExitUsage);  // --out missing
    CHECK(probe({"optimize", "--synth", "s.json", "--steps", "x"}).code == kExitUsage);
}

TEST_CASE("apcr on a synthetic spec") {
    const auto dir = testsupport::scratch_dir("cli_apcr");
    const auto spec = testsupport::one_dim_spec(12, 3, {4, 9, 1}, 2.0);
    const auto spec_path = write_spec(dir, spec).string();

    const auto r = probe({"apcr", "--synth", spec_path, "--bases", "4", "--out", (dir / "a.csv").string(), "--json",
                          (dir / "a.json").string(), "--hist", (dir / "h.csv").string(), "--class", "1", "--bins",
                          "5", "--sets-dir", (dir / "sets").string(), "--topk", "1"});
    REQUIRE(r.code == kExitOk);
    CHECK(r.err.find("[probe]") != std::string::npos);
    CHECK(top_dims(slurp(dir / "a.csv"), 3) == std::vector<std::size_t>{4, 9, 1});
    CHECK(slurp(dir / "h.csv").rfind("bin_lo,bin_hi,count\n", 0) == 0);
    CHECK(nlohmann::json::parse(slurp(dir / "a.json"))["base_count"] == 4);
    const auto seq = controlling_set_from_json(slurp(dir / "sets" / "seq_class2.json"));
    CHECK(seq.dims() == std::vector<std::size_t>{1});

    SUBCASE("same flags give identical bytes, for any thread count") {
        REQUIRE(probe({"apcr", "--synth", spec_path, "--bases", "4", "--out", (dir / "b.csv").string(), "--threads",
                       "3"})
                    .code == kExitOk);
        CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    }
    SUBCASE("single-base mode and the total-variation variant") {
        REQUIRE(probe({"apcr", "--synth", spec_path, "--single-base", "--variant", "total-variation", "--out",
                       (dir / "c.csv").string()})
                    .code == kExitOk);
        CHECK(top_dims(slurp(dir / "c.csv"), 3) == std::vector<std::size_t>{4, 9, 1});
        CHECK(probe({"apcr", "--synth", spec_path, "--variant", "median", "--out", (dir / "d.csv").string()}).code ==
              kExitUsage);
    }
}

TEST_CASE("format and numeric failures") {
    const auto dir = testsupport::scratch_dir("cli_fail");
    spit(dir / "bad.lpwf", "XXXX garbage");
    const auto fx = testsupport::fixture_dir();
    CHECK(probe({"apcr", "--gen", (dir / "bad.lpwf").string(), "--clf", (fx / "classifier.lpwf").string(), "--out",
                 (dir / "a.csv").string()})
              .code == kExitFormat);
    CHECK(probe({"apcr", "--gen", (dir / "missing.lpwf").string(), "--clf", (fx / "classifier.lpwf").string(),
                 "--out", (dir / "a.csv").string()})
              .code == kExitFormat);
    spit(dir / "broken.json", "{");
    CHECK(probe({"apcr", "--synth", (dir / "broken.json").string(), "--out", (dir / "a.csv").string()}).code ==
          kExitFormat);

    // Gains this large saturate the synthetic rendering.
    const auto huge = testsupport::one_dim_spec(4, 2, {0, 1}, 1e300);
    const auto r = probe({"apcr", "--synth", write_spec(dir, huge).string(), "--out", (dir / "a.csv").string()});
    CHECK(r.code == kExitNumeric);
    CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("ir") {
    const auto dir = testsupport::scratch_dir("cli_ir");
    ControllingSet a;
    a.entries = {{1, 1}, {2, -1}, {3, 1}, {4, 1}};
    ControllingSet b = a;
    b.entries[3].dim = 7;
    spit(dir / "a.json", controlling_set_to_json(a));
    spit(dir / "b.json", controlling_set_to_json(b));
    const auto same = probe({"ir", (dir / "a.json").string(), (dir / "a.json").string()});
    CHECK(same.code == kExitOk);
    CHECK(same.out == "1.0000\n");
    CHECK(probe({"ir", (dir / "a.json").string(), (dir / "b.json").string()}).out == "0.7500\n");
    CHECK(probe({"ir", (dir / "a.json").string()}).code == kExitUsage);
    ControllingSet c;
    c.entries = {{1, 1}};
    spit(dir / "c.json", controlling_set_to_json(c));
    CHECK(probe({"ir", (dir / "a.json").string(), (dir / "c.json").string()}).code == kExitUsage);
}

TEST_CASE("optimize, manipulate and impulse on a synthetic spec") {
    const auto dir = testsupport::scratch_dir("cli_opt");
    const auto spec = testsupport::one_dim_spec(10, 3, {2, 5, 8}, 2.0);
    const auto spec_path = write_spec(dir, spec).string();

    const auto r = probe({"optimize", "--synth", spec_path, "--class", "1", "--iters", "60", "--bases", "8", "--topk",
                          "1", "--out", (dir / "w.json").string(), "--set", (dir / "set.json").string()});
    REQUIRE(r.code == kExitOk);
    const auto result = optimization_result_from_json(slurp(dir / "w.json"));
    CHECK(result.objective_history.size() == 60);
    const auto set = controlling_set_from_json(slurp(dir / "set.json"));
    CHECK(set.entries == std::vector<ControlEntry>{{5, 1}});
    CHECK(set.provenance == Provenance::optimized);

    REQUIRE(probe({"optimize", "--synth", spec_path, "--class", "1", "--iters", "60", "--bases", "8", "--threshold",
                   "0.5", "--set", (dir / "t.json").string()})
                .code == kExitOk);
    CHECK(controlling_set_from_json(slurp(dir / "t.json")).threshold == 0.5);

    SUBCASE("manipulate") {
        const auto m = probe({"manipulate", "--synth", spec_path, "--set", (dir / "set.json").string(), "--steps", "4",
                              "--count", "2", "--montage", (dir / "m.pgm").string(), "--report",
                              (dir / "r.json").string()});
        REQUIRE(m.code == kExitOk);
        const auto report = nlohmann::json::parse(slurp(dir / "r.json"));
        REQUIRE(report.size() == 2);
        CHECK(report[0].size() == 5);
        CHECK(report[0][4]["argmax"] == 1);
        // 5 tiles of 4x12 per row, 2 rows with one gutter.
        CHECK(slurp(dir / "m.pgm").rfind("P5\n60 10\n255\n", 0) == 0);
    }
    SUBCASE("manipulate with zero strength repeats the base frame") {
        REQUIRE(probe({"manipulate", "--synth", spec_path, "--set", (dir / "set.json").string(), "--strength", "0",
                       "--steps", "3", "--count", "1", "--montage", (dir / "z.pgm").string()})
                    .code == kExitOk);
        const auto pgm = slurp(dir / "z.pgm");
        const std::string header = "P5\n48 4\n255\n";
        REQUIRE(pgm.size() == header.size() + 48 * 4);
        for (std::size_t row = 0; row < 4; ++row) {
            const auto line = pgm.substr(header.size() + row * 48, 48);
            for (std::size_t tile = 1; tile < 4; ++tile) CHECK(line.substr(tile * 12, 12) == line.substr(0, 12));
        }
    }
    SUBCASE("impulse") {
        const auto imp = probe({"impulse", "--synth", spec_path, "--dim", "8", "--count", "5", "--montage",
                                (dir / "i.pgm").string(), "--report", (dir / "i.json").string()});
        REQUIRE(imp.code == kExitOk);
        std::istringstream lines(imp.out);
        std::string line;
        int count = 0;
        while (std::getline(lines, line)) {
            ++count;
            CHECK(line.find(" +2 ") != std::string::npos);
        }
        CHECK(count == 5);
        CHECK(probe({"impulse", "--synth", spec_path, "--dim", "10"}).code == kExitUsage);
    }
}

TEST_CASE("translate on the opposed spec") {
    const auto dir = testsupport::scratch_dir("cli_translate");
    const auto spec_path = write_spec(dir, testsupport::opposed_spec(6, 3, 2.0)).string();
    const auto r = probe({"translate", "--synth", spec_path, "--from", "0", "--to", "1", "--iters", "60", "--bases",
                          "8", "--show", "3", "--out", (dir / "w.json").string(), "--montage",
                          (dir / "t.pgm").string(), "--report", (dir / "r.json").string()});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.rfind("flipped 0->1: 8/8, 1->0: 8/8", 0) == 0);
    const auto w = optimization_result_from_json(slurp(dir / "w.json"));
    CHECK(w.target.has_value());
    for (std::size_t i = 0; i < 6; ++i)
        if (i != 3) CHECK(std::abs(w.w[i]) < std::abs(w.w[3]));
    CHECK(probe({"translate", "--synth", spec_path, "--from", "1", "--to", "1"}).code == kExitUsage);
}

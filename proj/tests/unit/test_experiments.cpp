#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ldpexit/experiments.hpp"

using namespace ldp;
using nlohmann::json;

namespace {

ExperimentConfig parse(const std::string& text) { return config_from_json(json::parse(text)); }

std::vector<ExperimentConfig> sample_configs() {
    std::vector<ExperimentConfig> out;
    out.push_back(parse(R"({"model":"cubic_heat","kind":"simulate","epsilon":0.2,"x0":[0.1,0,0,0,0,0,0,0]})"));
    out.push_back(parse(R"({"model":"ou","kind":"exit-mc","n_paths":10,"t_max":50,"exit_rule":"grid"})"));
    out.push_back(parse(R"({"model":"ou","kind":"fw-scaling","epsilons":[0.5,0.4,0.3],"control":{"dt":0.01}})"));
    out.push_back(parse(R"({"model":"ou","kind":"exit-place","epsilons":[0.5,0.4],
                            "region":{"mode":1,"lower":0,"upper":2},"max_final_fraction":0.6})"));
    out.push_back(parse(R"({"model":"linear_heat","kind":"quasipotential",
                            "target":{"type":"boundary","radius":1,"region":{"mode":2,"lower":0.1,"upper":1,"absolute":true}}})"));
    out.push_back(parse(R"({"model":"stagnation","kind":"operator-norms","t_list":[1,0.5]})"));
    out.push_back(parse(R"({"model":"multiplicative_heat","kind":"validate","samples":10,"seed":4})"));
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("config round trip for every kind") {
    const auto configs = sample_configs();
    REQUIRE(configs.size() == kind_names().size());
    for (const auto& c : configs) {
        CAPTURE(kind_name(c.params));
        const auto j = to_json(c);
        CHECK(config_from_json(j) == c);
        CHECK(config_from_json(json::parse(j.dump())) == c);
        CHECK(to_json(config_from_json(j)) == j);
    }
}

TEST_CASE("model may be inline") {
    json j{{"model", presets::scalar_cubic()}, {"kind", "quasipotential"}};
    const auto c = config_from_json(j);
    CHECK(c.model == presets::scalar_cubic());
    const auto& p = std::get<QuasipotentialParams>(c.params);
    CHECK(std::get<BoundaryTarget>(p.target).radius == 1.0);
    CHECK(parse(R"({"model":"ou","kind":"validate-hypotheses"})").params.index() == 6);
}

TEST_CASE("schema and semantic errors are config errors") {
    const char* bad[] = {
        R"({"model":"ou","kind":"simulate","colour":1})",
        R"({"model":"nope","kind":"simulate"})",
        R"({"model":"ou","kind":"dance"})",
        R"({"model":"ou"})",
        R"({"model":"ou","kind":"fw-scaling","epsilons":[0.5]})",
        R"({"model":"ou","kind":"fw-scaling","epsilons":[0.5,0.5,0.4]})",
        R"({"model":"ou","kind":"exit-mc","epsilon":-1})",
        R"({"model":"ou","kind":"exit-mc","x0":[3]})",
        R"({"model":"ou","kind":"exit-mc","x0":[0,0]})",
        R"({"model":"ou","kind":"exit-mc","n_paths":-3})",
        R"({"model":"ou","kind":"operator-norms","relative_dt":0.3})",
        R"({"model":"ou","kind":"exit-place","epsilons":[0.5,0.4],"region":{"mode":3,"lower":0,"upper":1}})",
        R"({"model":"ou","kind":"quasipotential","target":{"type":"point","y":[1,2]}})",
        R"({"model":"ou","kind":"quasipotential","control":{"dt":2,"horizon":1}})",
        R"({"model":"ou","kind":"simulate","exit_rule":"sometimes"})",
        R"({"model":{"mode_count":1},"kind":"simulate"})",
        R"({"model":"ou","kind":"simulate","seed":-1})",
    };
    for (const char* text : bad) {
        CAPTURE(text);
        CHECK_THROWS_AS(parse(text), ConfigError);
    }
}

TEST_CASE("weighted slope") {
    const std::vector<double> x{1, 2, 3, 4}, y{1.5, 3.5, 5.5, 7.5}, w{1, 2, 3, 4};
    const auto [slope, se] = weighted_slope(x, y, w);
    CHECK(slope == doctest::Approx(2.0));
    CHECK(se > 0.0);
    CHECK_THROWS_AS(weighted_slope({1, 1}, {1, 2}, {1, 1}), std::invalid_argument);
}

TEST_CASE("control grid defaults divide the horizon") {
    const auto [h, dt] = resolve_control_grid(presets::cubic_heat(), {});
    CHECK(h == doctest::Approx(8.0));
    CHECK(dt <= 0.1 / 64 + 1e-15);
    CHECK(std::abs(h / dt - std::round(h / dt)) < 1e-9);
    const auto [h2, dt2] = resolve_control_grid(presets::ornstein_uhlenbeck(), ControlGrid{1.0, 0.3});
    CHECK(h2 == 1.0);
    CHECK(dt2 == doctest::Approx(0.25));
}

TEST_CASE("exit-mc output is identical for any thread count") {
    auto c = parse(R"({"model":"cubic_heat","kind":"exit-mc","epsilon":0.5,"n_paths":40,"dt":0.001,"t_max":100,"seed":3})");
    const auto one = run_experiment(c, 1);
    const auto four = run_experiment(c, 4);
    REQUIRE(one.tables.size() == 1);
    CHECK(one.tables[0].first == "paths.csv");
    CHECK(one.tables[0].second.str() == four.tables[0].second.str());
    CHECK(one.summary.dump() == four.summary.dump());
    CHECK(one.tables[0].second.str().rfind("path_id,exit_time,censored,c1,c2", 0) == 0);
    CHECK(one.tables[0].second.rows() == 40);
}

TEST_CASE("seed changes the output") {
    auto c = parse(R"({"model":"ou","kind":"exit-mc","epsilon":0.5,"n_paths":20,"dt":0.01,"t_max":100})");
    const auto a = run_experiment(c);
    c.seed = 1;
    const auto b = run_experiment(c);
    CHECK(a.tables[0].second.str() != b.tables[0].second.str());
}

TEST_CASE("simulate writes a trajectory table") {
    const auto c = parse(R"({"model":"ou","kind":"simulate","epsilon":0.01,"dt":0.01,"t_max":1})");
    const auto out = run_experiment(c);
    const auto csv = out.tables[0].second.str();
    CHECK(csv.rfind("time,c1\n0,0\n", 0) == 0);
    CHECK(out.tables[0].second.rows() == 101);
    CHECK(out.summary["report"]["censored"] == true);
}

TEST_CASE("exit-place: empty region and symmetric control") {
    auto c = parse(R"({"model":"ou","kind":"exit-place","epsilons":[0.5,0.4],"n_paths":50,"dt":0.01,
                       "region":{"mode":1,"lower":1,"upper":0}})");
    auto out = run_experiment(c);
    CHECK(out.passed);
    CHECK(out.summary["report"]["verdict"] == "empty_region");
    for (double f : out.summary["report"]["fractions"]) CHECK(f == 0.0);

    // N = {+R}: same V on both ends, so the comparison is inconclusive rather than failed.
    c = parse(R"({"model":"ou","kind":"exit-place","epsilons":[0.5,0.4],"n_paths":400,"dt":0.01,
                  "region":{"mode":1,"lower":0,"upper":10}})");
    out = run_experiment(c);
    CHECK(out.passed);
    CHECK(out.summary["report"]["verdict"] == "inconclusive");
    for (double f : out.summary["report"]["fractions"]) CHECK(std::abs(f - 0.5) < 3 * std::sqrt(0.25 / 400));
}

TEST_CASE("quasipotential command reports the oracle") {
    const auto c = parse(R"({"model":"ou","kind":"quasipotential","target":{"type":"point","y":[0.5]},
                             "control":{"horizon":8,"dt":0.01}})");
    const auto out = run_experiment(c);
    CHECK(out.passed);
    CHECK(out.summary["report"]["oracle"].get<double>() == doctest::Approx(0.25));
    CHECK(out.summary["report"]["relative_error"].get<double>() < 0.01);
    CHECK(out.tables[0].second.str().rfind("t,psi_1\n", 0) == 0);
    CHECK(out.tables[0].second.rows() == 800);
}

TEST_CASE("operator-norms table") {
    const auto c = parse(R"({"model":"linear_heat","kind":"operator-norms","t_list":[1,0.1],"max_sigma":3})");
    const auto out = run_experiment(c);
    CHECK(out.tables[0].first == "norms.csv");
    CHECK(out.tables[0].second.str().rfind("t,norm,sigma_1,sigma_2,sigma_3\n", 0) == 0);
    CHECK(out.tables[0].second.rows() == 2);

    const auto stag = run_experiment(parse(R"({"model":"stagnation","kind":"operator-norms"})"));
    CHECK_FALSE(stag.passed);
    CHECK(stag.summary["report"]["verdict"] == "stagnating");
}

TEST_CASE("fw-scaling on OU") {
    const auto c = parse(R"({"model":"ou","kind":"fw-scaling","epsilons":[0.5,0.4,0.33],"n_paths":300,"dt":0.01,"seed":2})");
    const auto out = run_experiment(c);
    const auto& r = out.summary["report"];
    CHECK(r["quasipotential"].get<double>() == doctest::Approx(1.0));
    CHECK(r["rows"].size() == 3);
    CHECK(r["rows"][0]["epsilon"].get<double>() == 0.5);
    CHECK(r["slope"].is_number());
    CHECK(r["slope_ci95"].size() == 2);
    CHECK(out.tables[0].second.rows() == 3);
}

TEST_CASE("warns when V / eps exceeds 8") {
    auto out = run_experiment(parse(R"({"model":"ou","kind":"exit-mc","epsilon":0.5,"n_paths":2,"dt":0.01,"t_max":2})"));
    CHECK(out.warnings.empty());
    out = run_experiment(
        parse(R"({"model":"ou","kind":"fw-scaling","epsilons":[0.5,0.4,0.1],"n_paths":2,"dt":0.01,"t_max":2})"));
    const auto hits = std::count_if(out.warnings.begin(), out.warnings.end(),
                                    [](const std::string& w) { return w.find("V/eps = 10 at eps = 0.1") == 0; });
    CHECK(hits == 1);
}

TEST_CASE("write_output writes summary and tables") {
    const auto dir = std::filesystem::temp_directory_path() / "ldpexit_write_output_test";
    std::filesystem::remove_all(dir);
    const auto c = parse(R"({"model":"ou","kind":"operator-norms","t_list":[1]})");
    const auto out = run_experiment(c);
    write_output(out, dir);
    CHECK(std::filesystem::exists(dir / "summary.json"));
    CHECK(slurp(dir / "norms.csv") == out.tables[0].second.str());
    CHECK(json::parse(slurp(dir / "summary.json"))["kind"] == "operator-norms");
    std::filesystem::remove_all(dir);
}

TEST_CASE("csv formatting round-trips doubles") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e17}) CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(0.0) == "0");
    CsvWriter w({"a", "b"});
    CHECK_THROWS_AS(w.add_row(std::vector<double>{1.0}), std::invalid_argument);
}

}  // TEST_SUITE

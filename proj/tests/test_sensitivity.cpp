#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>

#include "carcal/calibration.hpp"
#include "carcal/sensitivity.hpp"
#include "support/synthetic.hpp"

using namespace carcal;

TEST_CASE("sobol sequence: reference values for the first points") {
    // first seven points of the unscrambled 3-d sequence (index 0 skipped),
    // cross-checked against an independent QMC implementation
    const double expect[7][3] = {{0.5, 0.5, 0.5},     {0.75, 0.25, 0.25},
                                 {0.25, 0.75, 0.75},  {0.375, 0.375, 0.625},
                                 {0.875, 0.875, 0.125}, {0.625, 0.125, 0.875},
                                 {0.125, 0.625, 0.375}};
    SobolSequence seq(3);
    for (auto& row : expect) {
        const auto p = seq.next();
        for (int j = 0; j < 3; ++j) CHECK(p[j] == Catch::Approx(row[j]).margin(1e-12));
    }
}

TEST_CASE("sobol sequence: scrambled variants stay in [0,1) and differ by seed") {
    SobolSequence a(4, 1), b(4, 2);
    bool any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const auto pa = a.next();
        const auto pb = b.next();
        for (double v : pa) {
            CHECK(v >= 0.0);
            CHECK(v < 1.0);
        }
        if (pa != pb) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("sobol_total_order: additive two-variable function") {
    const std::vector<ParamRange> ranges = {{"x1", 0.0, 1.0}, {"x2", 0.0, 1.0}};
    const auto res = sobol_total_order(
        [](const std::vector<double>& x) { return x[0] + x[1]; }, ranges, 1024, 1);
    REQUIRE(res.total_order.size() == 2);
    CHECK(res.total_order[0] == Catch::Approx(0.5).margin(0.05));
    CHECK(res.total_order[1] == Catch::Approx(0.5).margin(0.05));
    CHECK(res.evaluations == 1024 * (2 + 2));
}

TEST_CASE("sobol_total_order: Ishigami benchmark at n=4096") {
    const double pi = 3.14159265358979323846;
    const std::vector<ParamRange> ranges = {{"x1", -pi, pi}, {"x2", -pi, pi}, {"x3", -pi, pi}};
    const auto res = sobol_total_order(
        [](const std::vector<double>& x) { return ishigami(x); }, ranges, 4096, 1, 4);

    const auto ref = ishigami_total_order();
    // the analytic values themselves, frozen
    CHECK(ref[0] == Catch::Approx(0.5576).margin(0.001));
    CHECK(ref[1] == Catch::Approx(0.4424).margin(0.001));
    CHECK(ref[2] == Catch::Approx(0.2437).margin(0.001));

    for (int i = 0; i < 3; ++i)
        CHECK(res.total_order[i] == Catch::Approx(ref[i]).margin(0.05));
    CHECK(res.evaluations == 4096 * 5);
}

TEST_CASE("sobol_total_order: constant objective is flagged") {
    const std::vector<ParamRange> ranges = {{"x1", 0.0, 1.0}, {"x2", 0.0, 1.0}};
    const auto res = sobol_total_order([](const std::vector<double>&) { return 42.0; },
                                       ranges, 64, 1);
    CHECK(res.zero_variance);
    for (double s : res.total_order) CHECK(s == 0.0);
}

TEST_CASE("sobol_total_order: exact evaluation count and power-of-two contract") {
    const std::vector<ParamRange> ranges = {{"a", 0.0, 1.0}, {"b", 0.0, 1.0}, {"c", 0.0, 1.0}};
    std::atomic<std::size_t> evals{0};
    const auto res = sobol_total_order(
        [&](const std::vector<double>& x) {
            ++evals;
            return x[0];
        },
        ranges, 256, 1, 8);
    CHECK(evals == 256 * (3 + 2));
    CHECK(res.evaluations == evals);

    CHECK_THROWS_AS(sobol_total_order([](const std::vector<double>&) { return 0.0; }, ranges,
                                      100, 1),
                    std::invalid_argument);
}

TEST_CASE("sobol_total_order: estimator error shrinks as n doubles") {
    const std::vector<ParamRange> ranges = {{"x1", 0.0, 1.0}, {"x2", 0.0, 1.0}};
    const auto err_at = [&](std::size_t n) {
        double total = 0.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto res = sobol_total_order(
                [](const std::vector<double>& x) { return x[0] + x[1]; }, ranges, n, seed);
            total += std::abs(res.total_order[0] - 0.5) + std::abs(res.total_order[1] - 0.5);
        }
        return total / 10.0;
    };
    const double e256 = err_at(256);
    const double e512 = err_at(512);
    const double e1024 = err_at(1024);
    CHECK(e512 <= e256);
    CHECK(e1024 <= e512);
}

TEST_CASE("oat_sensitivity: dead and dominant parameters") {
    const std::vector<ParamRange> ranges = {{"a_max", 0.5, 2.5}, {"T", 0.5, 2.0}};
    const std::vector<double> baseline = {1.5, 1.0};

    // stub objective: only a_max matters
    const auto res = oat_sensitivity(
        [](const std::vector<double>& x) { return std::abs(x[0] - 1.0) + 3.0; }, ranges,
        baseline, 9);
    CHECK(res.index[0] > 0.0);
    CHECK(res.index[1] == 0.0);
    CHECK(res.evaluations == 1 + 2 * 9);

    // constant objective: all zero
    const auto flat = oat_sensitivity([](const std::vector<double>&) { return 7.0; }, ranges,
                                      baseline, 9);
    CHECK(flat.index[0] == 0.0);
    CHECK(flat.index[1] == 0.0);
}

TEST_CASE("oat_sensitivity: invariant under positive rescaling") {
    const std::vector<ParamRange> ranges = {{"a", 0.0, 2.0}, {"b", 0.0, 2.0}};
    const std::vector<double> baseline = {1.0, 1.0};
    const auto f = [](const std::vector<double>& x) { return 1.0 + x[0] * x[0] + 0.3 * x[1]; };
    const auto r1 = oat_sensitivity(f, ranges, baseline, 11);
    const auto r2 = oat_sensitivity(
        [&](const std::vector<double>& x) { return 17.0 * f(x); }, ranges, baseline, 11);
    for (std::size_t i = 0; i < ranges.size(); ++i)
        CHECK(r1.index[i] == Catch::Approx(r2.index[i]).margin(1e-9));
}

TEST_CASE("rank_parameters: threshold and ordering") {
    SensitivityReport rep;
    rep.rows = {{"a", 0.0, 0.02}, {"b", 0.0, 0.4}, {"c", 0.0, 0.9}};
    const auto ranked = rank_parameters(rep, 0.1);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0] == "c");
    CHECK(ranked[1] == "b");

    CHECK(rank_parameters(rep, 0.95).empty());

    SensitivityReport single;
    single.rows = {{"only", 0.0, 0.8}};
    CHECK(rank_parameters(single, 0.1) == std::vector<std::string>{"only"});
}

TEST_CASE("screening on a synthetic drive-off pair ranks T and F_v above b") {
    testing::SyntheticSpec spec;
    spec.window = 20.0;
    spec.dip_length = 0.0;  // pure pull-away: braking stays unexercised
    std::mt19937_64 rng(81);
    const auto pair = testing::make_pair_from_truth(testing::random_eidm_truth(rng, false), spec);

    const auto bounds = screening_bounds(ModelKind::eidm, spec.dt);
    std::vector<ParamRange> ranges;
    std::vector<std::size_t> to_vec;
    for (std::size_t i = 0; i < bounds.ranges.size(); ++i) {
        if (bounds.ranges[i].name == "a_max") continue;  // dominant, excluded
        ranges.push_back(bounds.ranges[i]);
        to_vec.push_back(i);
    }
    const std::vector<double> mid = bounds.midpoint();
    const auto objective = [&](const std::vector<double>& sweep) {
        std::vector<double> full = mid;
        for (std::size_t i = 0; i < sweep.size(); ++i) full[to_vec[i]] = sweep[i];
        // finite collision penalty keeps the variance defined
        return std::min(pair_gof(pair, apply_vector(bounds, full), spec.v_limit), 100.0);
    };

    const auto res = sobol_total_order(objective, ranges, 256, 1, 8);
    double st_T = 0, st_Fv = 0, st_b = 0;
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        if (ranges[i].name == "T") st_T = res.total_order[i];
        if (ranges[i].name == "F_v") st_Fv = res.total_order[i];
        if (ranges[i].name == "b") st_b = res.total_order[i];
    }
    CHECK(st_T > st_b);
    CHECK(st_Fv > st_b);
}

#include "parity/parity_testing.hpp"

#include "oracles.hpp"
#include "parity/errors.hpp"
#include "parity/stats.hpp"
#include "parity/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace parity;

namespace {

ClusteredDataset two_identical_groups(std::size_t members, std::uint64_t seed) {
    auto rng = stats::make_rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<MemberDraft> drafts;
    for (std::size_t i = 0; i < members; ++i) {
        const double s = unit(rng);
        const double y = unit(rng) < s ? 1.0 : 0.0;
        drafts.push_back({"a" + std::to_string(i), "g1", {Observation{{s}, {y}}}});
        drafts.push_back({"b" + std::to_string(i), "g2", {Observation{{s}, {y}}}});
    }
    return ClusteredDataset::build(std::move(drafts), 1);
}

} // namespace

TEST_CASE("score grid hits empirical percentiles") {
    std::vector<oracle::MemberSpec> specs;
    for (int i = 1; i <= 100; ++i)
        specs.push_back({"m" + std::to_string(i), "g1", {{i / 100.0, 1.0}}});
    const auto ds = oracle::make_dataset(specs);
    const double percentiles[] = {50.0};
    const auto grid = build_score_grid(ds, percentiles);
    REQUIRE(grid.points.size() == 1);
    CHECK(std::abs(grid.points[0] - 0.50) <= 0.01 + 1e-12);
}

TEST_CASE("score grid collapses duplicates") {
    const auto ds = oracle::make_dataset({
        {"a", "g1", {{0.5, 1.0}}},
        {"b", "g1", {{0.5, 0.0}}},
        {"c", "g1", {{0.5, 1.0}}},
    });
    const auto grid = build_score_grid(ds);
    CHECK(grid.points.size() == 1);
    CHECK(grid.points[0] == doctest::Approx(0.5));
}

TEST_CASE("default grid has at most 21 points and is strictly increasing") {
    auto rng = stats::make_rng(8);
    const auto ds = oracle::random_dataset(rng, 40, 3);
    const auto grid = build_score_grid(ds);
    CHECK(grid.points.size() <= 21);
    for (std::size_t i = 1; i < grid.points.size(); ++i)
        CHECK(grid.points[i] > grid.points[i - 1]);
    CHECK(grid.source_percentiles.size() == 21);
}

TEST_CASE("identical group data yields z = 0 and p = 1 everywhere") {
    const auto ds = two_identical_groups(200, 3);
    const auto grid = build_score_grid(ds);
    const auto report = parity_test(ds, "g1", "g2", grid, 0.05);
    CHECK_FALSE(report.reject);
    CHECK(report.tested_points == grid.points.size());
    for (const auto& pt : report.points) {
        REQUIRE(pt.testable);
        CHECK(pt.z == doctest::Approx(0.0));
        CHECK(pt.p_raw == doctest::Approx(1.0));
        CHECK(pt.p_adj == doctest::Approx(1.0));
    }
}

TEST_CASE("swapping the groups negates z and keeps p") {
    SynthConfig config;
    config.groups = {SynthGroup{"g1", 300, 1.0, 1.0, TrueCurve::identity(), {}},
                     SynthGroup{"g2", 300, 1.0, 1.0, TrueCurve::shifted(0.05), {}}};
    config.lambda = 2.0;
    config.seed = 12;
    const auto [ds, truth] = generate(config);
    const auto grid = build_score_grid(ds);
    const auto fwd = parity_test(ds, "g1", "g2", grid, 0.05);
    const auto rev = parity_test(ds, "g2", "g1", grid, 0.05);
    REQUIRE(fwd.points.size() == rev.points.size());
    for (std::size_t i = 0; i < fwd.points.size(); ++i) {
        CHECK(fwd.points[i].z == doctest::Approx(-rev.points[i].z).epsilon(1e-12));
        CHECK(fwd.points[i].p_raw == doctest::Approx(rev.points[i].p_raw).epsilon(1e-12));
        CHECK(fwd.points[i].p_adj == doctest::Approx(rev.points[i].p_adj).epsilon(1e-12));
    }
    CHECK(fwd.reject == rev.reject);
}

TEST_CASE("adjusted p-values dominate raw ones and grow with the grid") {
    SynthConfig config;
    config.groups = {SynthGroup{"g1", 150, 1.0, 1.0, TrueCurve::identity(), {}},
                     SynthGroup{"g2", 150, 1.0, 1.0, TrueCurve::identity(), {}}};
    config.seed = 5;
    const auto [ds, truth] = generate(config);

    const double small_percentiles[] = {25.0, 50.0, 75.0};
    const auto small_grid = build_score_grid(ds, small_percentiles);
    const auto large_grid = build_score_grid(ds);
    const auto small = parity_test(ds, "g1", "g2", small_grid, 0.05);
    const auto large = parity_test(ds, "g1", "g2", large_grid, 0.05);

    for (const auto& pt : large.points) {
        if (!pt.testable) continue;
        CHECK(pt.p_adj >= pt.p_raw - 1e-15);
        // Bonferroni factor equals the number of testable points.
        CHECK(pt.p_adj ==
              doctest::Approx(std::min(1.0, pt.p_raw * static_cast<double>(large.tested_points))));
    }
    // A fixed raw p-value is penalized more under the larger grid.
    const double raw = 0.004;
    CHECK(std::min(1.0, raw * static_cast<double>(large.tested_points)) >=
          std::min(1.0, raw * static_cast<double>(small.tested_points)));
}

TEST_CASE("holm correction is never more conservative than bonferroni") {
    SynthConfig config;
    config.groups = {SynthGroup{"g1", 400, 1.0, 1.0, TrueCurve::identity(), {}},
                     SynthGroup{"g2", 400, 1.0, 1.0, TrueCurve::shifted(0.08), {}}};
    config.seed = 9;
    const auto [ds, truth] = generate(config);
    const auto grid = build_score_grid(ds);
    TestOptions holm;
    holm.correction = Correction::holm;
    const auto b = parity_test(ds, "g1", "g2", grid, 0.05);
    const auto h = parity_test(ds, "g1", "g2", grid, 0.05, Mode::user_level, 0, holm);
    for (std::size_t i = 0; i < b.points.size(); ++i) {
        if (!b.points[i].testable) continue;
        CHECK(h.points[i].p_adj <= b.points[i].p_adj + 1e-12);
        CHECK(h.points[i].p_adj >= h.points[i].p_raw - 1e-15);
    }
}

TEST_CASE("zero-mass grid points are untestable and shrink the correction factor") {
    // Scores concentrate in [0, 0.3]; with a compact kernel the high grid
    // point has no mass.
    std::vector<oracle::MemberSpec> specs;
    auto rng = stats::make_rng(21);
    std::uniform_real_distribution<double> unit(0.0, 0.3);
    for (int i = 0; i < 60; ++i) {
        const double s = unit(rng);
        specs.push_back({"a" + std::to_string(i), "g1", {{s, s > 0.15 ? 1.0 : 0.0}}});
        specs.push_back({"b" + std::to_string(i), "g2", {{s, s > 0.15 ? 0.0 : 1.0}}});
    }
    // An isolated cluster of g1 scores keeps the top grid point away from
    // any g2 mass.
    for (int i = 0; i < 5; ++i)
        specs.push_back({"far" + std::to_string(i), "g1", {{0.95, 1.0}}});
    const auto ds = oracle::make_dataset(specs);

    const double percentiles[] = {10.0, 50.0, 99.0};
    const auto grid = build_score_grid(ds, percentiles);
    TestOptions options;
    options.kernel = KernelSpec{KernelFamily::epanechnikov};
    options.bandwidth.fixed = 0.05;
    const auto report = parity_test(ds, "g1", "g2", grid, 0.05, Mode::user_level, 0, options);
    CHECK(report.tested_points < grid.points.size());
    CHECK_FALSE(report.warnings.empty());
    for (const auto& pt : report.points) {
        if (!pt.testable) continue;
        CHECK(pt.p_adj ==
              doctest::Approx(std::min(1.0, pt.p_raw * static_cast<double>(report.tested_points))));
    }
}

TEST_CASE("null rejection rate stays near the nominal level") {
    SynthConfig config;
    config.lambda = 3.0;
    config.tau = 0.5;
    const int reps = 200;
    int rejections = 0;
    for (int r = 0; r < reps; ++r) {
        config.groups = {SynthGroup{"g1", 400, 1.0, 1.0, TrueCurve::identity(), {}},
                         SynthGroup{"g2", 400, 1.0, 1.0, TrueCurve::identity(), {}}};
        config.seed = 40000 + static_cast<std::uint64_t>(r);
        const auto [ds, truth] = generate(config);
        const auto grid = build_score_grid(ds);
        if (parity_test(ds, "g1", "g2", grid, 0.05).reject) ++rejections;
    }
    const double rate = static_cast<double>(rejections) / reps;
    CHECK(rate <= 0.05 + 2.0 * std::sqrt(0.05 * 0.95 / reps));
}

TEST_CASE("a 0.1 calibration gap is detected with high power") {
    SynthConfig config;
    config.lambda = 3.0;
    config.tau = 0.5;
    const int reps = 50;
    int rejections = 0;
    for (int r = 0; r < reps; ++r) {
        config.groups = {SynthGroup{"g1", 2000, 1.0, 1.0, TrueCurve::identity(), {}},
                         SynthGroup{"g2", 2000, 1.0, 1.0, TrueCurve::shifted(0.1), {}}};
        config.seed = 50000 + static_cast<std::uint64_t>(r);
        const auto [ds, truth] = generate(config);
        const auto grid = build_score_grid(ds);
        if (parity_test(ds, "g1", "g2", grid, 0.05).reject) ++rejections;
    }
    CHECK(static_cast<double>(rejections) / reps >= 0.9);
}

TEST_CASE("marginal test: equal above-threshold outcomes give z = 0") {
    std::vector<oracle::MemberSpec> specs;
    for (int i = 0; i < 40; ++i) {
        const double s = 0.5 + 0.012 * i;
        specs.push_back({"a" + std::to_string(i), "g1", {{s, 0.7}, {0.2, 0.0}}});
        specs.push_back({"b" + std::to_string(i), "g2", {{s, 0.7}, {0.1, 1.0}}});
    }
    const auto ds = oracle::make_dataset(specs);
    const auto report = marginal_outcome_test(ds, "g1", "g2", 0.5, 0.1, 0.05);
    REQUIRE(report.points.size() == 1);
    CHECK(report.points[0].z == doctest::Approx(0.0));
    CHECK(report.points[0].p_raw == doctest::Approx(1.0));
    CHECK_FALSE(report.reject);
}

TEST_CASE("marginal test with an infinitely low threshold equals the plain test") {
    auto rng = stats::make_rng(14);
    const auto ds = oracle::random_dataset(rng, 30, 3);
    double min_score = 1.0;
    for (const auto& m : ds.members())
        for (const auto& obs : m.instances) min_score = std::min(min_score, obs.scores[0]);

    const double h = 0.15;
    const auto truncated = marginal_outcome_test(
        ds, "g0", "g1", -std::numeric_limits<double>::infinity(), h, 0.05);
    // Vacuous truncation: compare against the untruncated estimator at the
    // same evaluation point.
    const auto e1 = nw_user_level(ds, "g0", truncated.points[0].s, h);
    const auto e2 = nw_user_level(ds, "g1", truncated.points[0].s, h);
    CHECK(truncated.points[0].f1 == doctest::Approx(e1.value).epsilon(1e-12));
    CHECK(truncated.points[0].f2 == doctest::Approx(e2.value).epsilon(1e-12));

    const auto at_min = marginal_outcome_test(ds, "g0", "g1", min_score, h, 0.05);
    const auto plain1 = nw_user_level(ds, "g0", min_score, h);
    CHECK(at_min.points[0].f1 == doctest::Approx(plain1.value).epsilon(1e-12));
}

TEST_CASE("marginal test detects an above-threshold outcome shift") {
    SynthConfig config;
    config.lambda = 3.0;
    config.tau = 0.0;
    const int reps = 30;
    int rejections = 0;
    for (int r = 0; r < reps; ++r) {
        config.groups = {SynthGroup{"g1", 1500, 1.0, 1.0, TrueCurve::identity(), {}},
                         SynthGroup{"g2", 1500, 1.0, 1.0, TrueCurve::shifted(0.15), {}}};
        config.seed = 60000 + static_cast<std::uint64_t>(r);
        const auto [ds, truth] = generate(config);
        const double h = rule_of_thumb_bandwidth(0.5, 1500);
        if (marginal_outcome_test(ds, "g1", "g2", 0.5, h, 0.05).reject) ++rejections;
    }
    CHECK(static_cast<double>(rejections) / reps >= 0.9);
}

TEST_CASE("ordering diagnostic is quiet for identical monotone curves") {
    std::vector<double> grid{0.2, 0.4, 0.6, 0.8};
    GroupCurve a{"g1", {}}, b{"g2", {}};
    for (double s : grid) {
        PointEstimate pt;
        pt.s = s;
        pt.value = s;
        pt.std_error = 0.01;
        a.points.push_back(pt);
        b.points.push_back(pt);
    }
    const std::vector<GroupCurve> curves{a, b};
    CHECK(ordering_diagnostic(curves, grid).empty());
}

TEST_CASE("ordering diagnostic flags the degenerate-support example") {
    // One group concentrated at score 0 with outcome 0.8, the other at
    // score 1 with outcome 0.6.
    std::vector<oracle::MemberSpec> specs;
    for (int i = 0; i < 200; ++i) {
        specs.push_back({"a" + std::to_string(i), "g1", {{0.0, i % 5 == 4 ? 0.0 : 1.0}}});
        specs.push_back({"b" + std::to_string(i), "g2", {{1.0, i % 5 < 3 ? 1.0 : 0.0}}});
    }
    const auto ds = oracle::make_dataset(specs);
    const std::vector<double> grid{0.0, 1.0};
    std::vector<GroupCurve> curves;
    for (const auto& group : {"g1", "g2"}) {
        curves.push_back(
            GroupCurve{group, estimate_curve(ds, group, grid, Mode::user_level)});
    }
    const auto violations = ordering_diagnostic(curves, grid);
    REQUIRE_FALSE(violations.empty());
    bool found = false;
    for (const auto& v : violations)
        if (v.group_low == "g1" && v.group_high == "g2" && v.s_low == 0.0 && v.s_high == 1.0)
            found = true;
    CHECK(found);
}

TEST_CASE("ordering diagnostic tolerates differences within the noise band") {
    std::vector<double> grid{0.3, 0.7};
    GroupCurve a{"g1", {}}, b{"g2", {}};
    PointEstimate low;
    low.s = 0.3;
    low.value = 0.52;
    low.std_error = 0.02;
    PointEstimate high;
    high.s = 0.7;
    high.value = 0.50;
    high.std_error = 0.02;
    a.points = {low, high};
    b.points = {low, high};
    // 0.52 - 0.50 = 0.02 < 2 (0.02 + 0.02)
    const std::vector<GroupCurve> curves{a, b};
    CHECK(ordering_diagnostic(curves, grid).empty());
}

TEST_CASE("one-sided option halves the p-value in the alternative direction") {
    const auto ds = two_identical_groups(100, 77);
    const auto grid = build_score_grid(ds);
    TestOptions one_sided;
    one_sided.one_sided = true;
    const auto report = parity_test(ds, "g1", "g2", grid, 0.05, Mode::user_level, 0, one_sided);
    for (const auto& pt : report.points) {
        if (!pt.testable) continue;
        CHECK(pt.p_raw == doctest::Approx(0.5)); // z = 0 exactly
    }
}

TEST_CASE("report serializes to json with the full grid") {
    const auto ds = two_identical_groups(50, 31);
    const auto grid = build_score_grid(ds);
    auto report = parity_test(ds, "g1", "g2", grid, 0.05);
    const auto j = report_to_json(report);
    CHECK(j.at("mode") == "user-level");
    CHECK(j.at("reject") == false);
    CHECK(j.at("grid").size() == report.points.size());
    CHECK(j.at("correction") == "bonferroni");
}

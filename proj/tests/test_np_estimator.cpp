#include "parity/np_estimator.hpp"

#include "oracles.hpp"
#include "parity/errors.hpp"
#include "parity/stats.hpp"
#include "parity/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace parity;

TEST_CASE("single point mass gives the observed outcome") {
    const auto ds = oracle::make_dataset({{"a", "g1", {{0.5, 1.0}}}});
    const auto est = nw_user_level(ds, "g1", 0.5, 0.1);
    CHECK(est.value == doctest::Approx(1.0));
    CHECK(est.m_effective == 1);
    CHECK(est.low_mass);
}

TEST_CASE("constant outcomes estimate the constant at any score") {
    const auto ds = oracle::make_dataset({
        {"a", "g1", {{0.1, 0.3}, {0.9, 0.3}}},
        {"b", "g1", {{0.4, 0.3}}},
        {"c", "g1", {{0.6, 0.3}, {0.2, 0.3}, {0.8, 0.3}}},
    });
    for (double s : {0.0, 0.3, 0.55, 1.0}) {
        CHECK(nw_user_level(ds, "g1", s, 0.2).value == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(nw_aggregate(ds, "g1", s, 0.2).value == doctest::Approx(0.3).epsilon(1e-12));
    }
}

TEST_CASE("two-member worked example matches the per-member weighted ratio") {
    const auto ds = oracle::make_dataset({
        {"m1", "g1", {{0.4, 0.0}, {0.6, 1.0}}},
        {"m2", "g1", {{0.5, 1.0}}},
    });
    const auto est = nw_user_level(ds, "g1", 0.5, 0.1);
    // (K(1)/2 + K(0)) / (K(1) + K(0)) with the standard normal kernel.
    const double k0 = 0.3989422804014327;
    const double k1 = 0.2419707245191434;
    CHECK(est.value == doctest::Approx((0.5 * k1 + k0) / (k1 + k0)).epsilon(1e-10));
    CHECK(est.value == doctest::Approx(0.81125).epsilon(1e-4));
    CHECK(est.value ==
          doctest::Approx(oracle::nw_value(ds, "g1", 0.5, 0.1, 0, true)).epsilon(1e-12));
    CHECK(est.denominator_mass == doctest::Approx(k1 + k0).epsilon(1e-10));
}

TEST_CASE("aggregate pools instances while user level averages members") {
    std::vector<oracle::MemberSpec> specs;
    std::vector<std::pair<double, double>> heavy(10, {0.5, 1.0});
    specs.push_back({"heavy", "g1", heavy});
    for (int i = 0; i < 10; ++i)
        specs.push_back({"s" + std::to_string(i), "g1", {{0.5, 0.0}}});
    const auto ds = oracle::make_dataset(specs);

    CHECK(nw_aggregate(ds, "g1", 0.5, 0.1).value == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(nw_user_level(ds, "g1", 0.5, 0.1).value ==
          doctest::Approx(1.0 / 11.0).epsilon(1e-12));
}

TEST_CASE("modes coincide when every member has one instance") {
    auto rng = stats::make_rng(71);
    for (int trial = 0; trial < 20; ++trial) {
        const auto ds = oracle::random_dataset(rng, 15, 1);
        for (const auto& group : ds.group_levels()) {
            if (ds.group_member_count(*ds.group_index(group)) < 2) continue;
            for (double s : {0.25, 0.5, 0.75}) {
                const auto user = nw_user_level(ds, group, s, 0.15);
                const auto agg = nw_aggregate(ds, group, s, 0.15);
                CHECK(user.value == doctest::Approx(agg.value).epsilon(1e-12));
                CHECK(user.std_error == doctest::Approx(agg.std_error).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("cluster variance: identical summaries have zero variance") {
    std::vector<ClusterSummary> summaries(8, ClusterSummary{0.3, 0.6});
    CHECK(nw_variance(summaries, 8) == doctest::Approx(0.0));
}

TEST_CASE("cluster variance: two-member delta method by hand") {
    std::vector<ClusterSummary> summaries{{1.0, 1.0}, {0.0, 1.0}};
    CHECK(nw_variance(summaries, 2) == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("cluster variance requires at least two members") {
    std::vector<ClusterSummary> one{{1.0, 1.0}};
    CHECK_THROWS_AS(nw_variance(one, 5), stat_error);
}

TEST_CASE("estimator matches the exhaustive double loop on random data") {
    auto rng = stats::make_rng(2024);
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const auto ds = oracle::random_dataset(rng, 20, 5);
        for (const auto& group : ds.group_levels()) {
            for (double s : {0.2, 0.5, 0.8}) {
                const double h = 0.1 + 0.05 * (trial % 3);
                const auto user = nw_user_level(ds, group, s, h);
                const auto agg = nw_aggregate(ds, group, s, h);
                CHECK(user.value ==
                      doctest::Approx(oracle::nw_value(ds, group, s, h, 0, true)).epsilon(1e-12));
                CHECK(agg.value ==
                      doctest::Approx(oracle::nw_value(ds, group, s, h, 0, false)).epsilon(1e-12));
                ++checked;
            }
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("plug-in variance tracks the cluster bootstrap on synthetic data") {
    SynthConfig config;
    config.groups = {SynthGroup{"g1", 2000, 1.0, 1.0, TrueCurve::identity(), {}}};
    config.lambda = 3.0;
    config.tau = 0.5;
    config.seed = 17;
    const auto [ds, truth] = generate(config);

    for (double s : {0.3, 0.5, 0.7}) {
        const double h = rule_of_thumb_bandwidth(s, 2000);
        const auto est = nw_user_level(ds, "g1", s, h);
        const double boot =
            oracle::bootstrap_variance(ds, "g1", s, h, 0, true, 500, 1234);
        const double ratio = est.std_error * est.std_error / boot;
        CHECK(ratio > 0.8);
        CHECK(ratio < 1.25);
    }
}

TEST_CASE("multivariate with one dimension equals the univariate estimator") {
    auto rng = stats::make_rng(33);
    const auto ds = oracle::random_dataset(rng, 12, 4, 1);
    const double s[] = {0.5};
    const double h[] = {0.12};
    const auto multi = nw_multivariate(ds, "g0", s, h, 0);
    const auto uni = nw_user_level(ds, "g0", 0.5, 0.12);
    CHECK(multi.value == doctest::Approx(uni.value).epsilon(1e-12));
    CHECK(multi.std_error == doctest::Approx(uni.std_error).epsilon(1e-12));
}

TEST_CASE("multivariate product kernel matches the brute-force oracle") {
    std::vector<MemberDraft> drafts{
        {"a", "g1", {Observation{{0.2, 0.7}, {1.0, 0.0}}, Observation{{0.4, 0.5}, {0.0, 1.0}}}},
        {"b", "g1", {Observation{{0.6, 0.3}, {1.0, 1.0}}}},
        {"c", "g1", {Observation{{0.8, 0.9}, {0.0, 0.0}}}},
    };
    const auto ds = ClusteredDataset::build(std::move(drafts), 2);
    const std::vector<double> s{0.5, 0.6};
    const std::vector<double> h{0.2, 0.25};
    for (std::size_t k : {std::size_t{0}, std::size_t{1}}) {
        const auto est = nw_multivariate(ds, "g1", s, h, k);
        CHECK(est.value ==
              doctest::Approx(oracle::nw_value_multi(ds, "g1", s, h, k)).epsilon(1e-12));
    }
}

TEST_CASE("multivariate constant outcomes return the constant") {
    std::vector<MemberDraft> drafts{
        {"a", "g1", {Observation{{0.2, 0.7}, {0.4, 0.4}}}},
        {"b", "g1", {Observation{{0.6, 0.3}, {0.4, 0.4}}}},
    };
    const auto ds = ClusteredDataset::build(std::move(drafts), 2);
    const std::vector<double> s{0.5, 0.5};
    const std::vector<double> h{0.3, 0.3};
    CHECK(nw_multivariate(ds, "g1", s, h, 0).value == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("multivariate guards the dimension") {
    std::vector<MemberDraft> drafts{
        {"a", "g1",
         {Observation{{0.2, 0.7, 0.5, 0.5, 0.5}, {1.0, 0.0, 0.0, 0.0, 0.0}}}}};
    const auto ds = ClusteredDataset::build(std::move(drafts), 5);
    const std::vector<double> s(5, 0.5), h(5, 0.2);
    CHECK_THROWS_AS(nw_multivariate(ds, "g1", s, h, 0), stat_error);
}

TEST_CASE("curve on one grid point equals the pointwise call") {
    const auto ds = oracle::make_dataset({
        {"a", "g1", {{0.3, 1.0}, {0.6, 0.0}}},
        {"b", "g1", {{0.5, 1.0}}},
    });
    const double grid[] = {0.45};
    const auto curve = estimate_curve(ds, "g1", grid, Mode::user_level);
    REQUIRE(curve.size() == 1);
    const double h = rule_of_thumb_bandwidth(0.45, 2);
    const auto point = nw_user_level(ds, "g1", 0.45, h);
    CHECK(curve[0].value == doctest::Approx(point.value).epsilon(1e-14));
    CHECK(curve[0].std_error == doctest::Approx(point.std_error).epsilon(1e-14));
}

TEST_CASE("curve recovers the identity curve on calibrated synthetic data") {
    SynthConfig config;
    config.groups = {SynthGroup{"g1", 5000, 1.0, 1.0, TrueCurve::identity(), {}}};
    config.lambda = 3.0;
    config.tau = 0.0;
    config.seed = 4;
    const auto [ds, truth] = generate(config);

    std::vector<double> grid;
    for (int p = 5; p <= 95; p += 5) grid.push_back(p / 100.0);
    const auto curve = estimate_curve(ds, "g1", grid, Mode::user_level);
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        worst = std::max(worst, std::abs(curve[i].value - grid[i]));
    CHECK(worst <= 0.03);
}

TEST_CASE("estimates stay in the convex hull of the outcomes") {
    auto rng = stats::make_rng(90);
    for (int trial = 0; trial < 10; ++trial) {
        const auto ds = oracle::random_dataset(rng, 10, 4, 1);
        double lo = 1.0, hi = 0.0;
        for (const auto& m : ds.members())
            for (const auto& obs : m.instances) {
                lo = std::min(lo, obs.outcomes[0]);
                hi = std::max(hi, obs.outcomes[0]);
            }
        for (double s : {0.1, 0.5, 0.9}) {
            const auto est = nw_user_level(ds, "g0", s, 0.2);
            CHECK(est.value >= lo - 1e-12);
            CHECK(est.value <= hi + 1e-12);
        }
    }
}

TEST_CASE("scaling outcomes scales estimates exactly") {
    std::vector<MemberDraft> base{
        {"a", "g1", {Observation{{0.2}, {1.0}}, Observation{{0.7}, {0.0}}}},
        {"b", "g1", {Observation{{0.5}, {1.0}}}},
        {"c", "g1", {Observation{{0.8}, {1.0}}}},
    };
    auto scaled = base;
    const double c = 3.5;
    for (auto& draft : scaled)
        for (auto& obs : draft.instances) obs.outcomes[0] *= c;
    const auto ds1 = ClusteredDataset::build(std::move(base), 1);
    const auto ds2 = ClusteredDataset::build(std::move(scaled), 1);
    for (double s : {0.3, 0.6}) {
        const auto e1 = nw_user_level(ds1, "g1", s, 0.15);
        const auto e2 = nw_user_level(ds2, "g1", s, 0.15);
        CHECK(e2.value == doctest::Approx(c * e1.value).epsilon(1e-14));
    }
}

TEST_CASE("compact kernels can run out of mass") {
    const auto ds = oracle::make_dataset({
        {"a", "g1", {{0.1, 1.0}}},
        {"b", "g1", {{0.15, 0.0}}},
    });
    const KernelSpec epa{KernelFamily::epanechnikov};
    CHECK_THROWS_AS(nw_user_level(ds, "g1", 0.9, 0.05, 0, epa), stat_error);
    CHECK_NOTHROW(nw_user_level(ds, "g1", 0.12, 0.05, 0, epa));
}

TEST_CASE("missing group and bad bandwidth raise errors") {
    const auto ds = oracle::make_dataset({{"a", "g1", {{0.5, 1.0}}}});
    CHECK_THROWS_AS(nw_user_level(ds, "nope", 0.5, 0.1), stat_error);
    CHECK_THROWS_AS(nw_user_level(ds, "g1", 0.5, 0.0), stat_error);
    CHECK_THROWS_AS(nw_user_level(ds, "g1", 0.5, -1.0), stat_error);
}

TEST_CASE("truncated estimator ignores instances below the threshold") {
    const auto full = oracle::make_dataset({
        {"a", "g1", {{0.2, 1.0}, {0.7, 1.0}}},
        {"b", "g1", {{0.3, 1.0}, {0.8, 0.0}}},
        {"c", "g1", {{0.75, 1.0}}},
    });
    const auto est = nw_truncated(full, "g1", 0.5, 0.2, 0.5);
    const double expected = oracle::nw_value(full, "g1", 0.5, 0.2, 0, true, 0.5);
    CHECK(est.value == doctest::Approx(expected).epsilon(1e-12));

    // Below-threshold outcomes cannot influence the estimate.
    auto flipped = oracle::make_dataset({
        {"a", "g1", {{0.2, 0.0}, {0.7, 1.0}}},
        {"b", "g1", {{0.3, 0.0}, {0.8, 0.0}}},
        {"c", "g1", {{0.75, 1.0}}},
    });
    CHECK(nw_truncated(flipped, "g1", 0.5, 0.2, 0.5).value ==
          doctest::Approx(est.value).epsilon(1e-14));
}

TEST_CASE("asymptotic normality of the standardized statistic at interior points") {
    // Empirical 2.5% / 97.5% quantiles of (est - truth) / se across
    // replications should sit near the normal reference points.
    SynthConfig config;
    config.groups = {SynthGroup{"g1", 2000, 1.0, 1.0, TrueCurve::identity(), {}}};
    config.lambda = 3.0;
    config.tau = 0.5;
    config.seed = 1;
    const GroundTruth truth(config);
    const double s = 0.5;
    const double f_true = truth.eval("g1", s);
    const double h = rule_of_thumb_bandwidth(s, 2000);

    const int reps = 500;
    std::vector<double> z_values;
    z_values.reserve(reps);
    for (int r = 0; r < reps; ++r) {
        config.seed = 10000 + static_cast<std::uint64_t>(r);
        const auto [ds, unused] = generate(config);
        const auto est = nw_user_level(ds, "g1", s, h);
        z_values.push_back((est.value - f_true) / est.std_error);
    }
    std::sort(z_values.begin(), z_values.end());
    const double lo = parity::stats::percentile_sorted(z_values, 2.5);
    const double hi = parity::stats::percentile_sorted(z_values, 97.5);
    CHECK(std::abs(lo - (-1.96)) <= 0.15);
    CHECK(std::abs(hi - 1.96) <= 0.15);
}

TEST_CASE("error shrinks with the expected rate when members quadruple") {
    // Median absolute error at an interior point, h following the n^(-1/5)
    // rule, should drop by roughly 4^(2/5) ~ 1.74 when M quadruples.
    const auto median_error = [](std::size_t members, std::uint64_t seed_base) {
        SynthConfig config;
        config.groups = {SynthGroup{"g1", members, 1.0, 1.0, TrueCurve::identity(), {}}};
        config.lambda = 3.0;
        config.tau = 0.5;
        config.seed = 1;
        const double f_true = GroundTruth(config).eval("g1", 0.5);
        const double h = rule_of_thumb_bandwidth(0.5, members);
        std::vector<double> errors;
        for (int r = 0; r < 200; ++r) {
            config.seed = seed_base + static_cast<std::uint64_t>(r);
            const auto [ds, unused] = generate(config);
            errors.push_back(std::abs(nw_user_level(ds, "g1", 0.5, h).value - f_true));
        }
        return parity::stats::percentile(errors, 50.0);
    };
    const double small = median_error(500, 77000);
    const double large = median_error(2000, 99000);
    const double improvement = small / large;
    CHECK(improvement >= 1.5);
    CHECK(improvement <= 2.3);
}

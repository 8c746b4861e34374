#include "parity/parity_testing.hpp"

#include "parity/errors.hpp"
#include "parity/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace parity {

namespace {

double z_statistic(double f1, double f2, double se1, double se2) {
    const double denom = std::sqrt(se1 * se1 + se2 * se2);
    const double diff = f1 - f2;
    if (denom > 0.0) return diff / denom;
    return diff == 0.0 ? 0.0
                       : std::copysign(std::numeric_limits<double>::infinity(), diff);
}

void apply_correction(std::vector<PointTest>& points, Correction correction) {
    std::vector<std::size_t> testable;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (points[i].testable) testable.push_back(i);
    const auto j = static_cast<double>(testable.size());
    if (testable.empty()) return;

    if (correction == Correction::bonferroni) {
        for (auto i : testable) points[i].p_adj = std::min(1.0, points[i].p_raw * j);
        return;
    }
    // Holm step-down: sort raw p ascending, adjust with the running maximum.
    std::sort(testable.begin(), testable.end(), [&](std::size_t a, std::size_t b) {
        return points[a].p_raw < points[b].p_raw;
    });
    double running = 0.0;
    for (std::size_t rank = 0; rank < testable.size(); ++rank) {
        const double factor = j - static_cast<double>(rank);
        running = std::max(running, std::min(1.0, points[testable[rank]].p_raw * factor));
        points[testable[rank]].p_adj = running;
    }
}

void finalize(ParityTestReport& report, double alpha) {
    report.alpha = alpha;
    report.tested_points = 0;
    report.min_p_adj = 1.0;
    for (const auto& pt : report.points) {
        if (!pt.testable) continue;
        ++report.tested_points;
        report.min_p_adj = std::min(report.min_p_adj, pt.p_adj);
    }
    report.reject = report.tested_points > 0 && report.min_p_adj < alpha;
}

} // namespace

std::vector<double> default_grid_percentiles() {
    std::vector<double> p{1.0};
    for (int q = 5; q <= 95; q += 5) p.push_back(static_cast<double>(q));
    p.push_back(99.0);
    return p;
}

ScoreGrid build_score_grid(const ClusteredDataset& reference,
                           std::span<const double> percentiles, std::size_t k) {
    if (reference.member_count() == 0) throw data_error("cannot build a grid on an empty dataset");
    for (double p : percentiles)
        if (!(p > 0.0 && p < 100.0))
            throw data_error("grid percentiles must lie in (0, 100)");

    std::vector<double> scores = reference.pooled_scores(k);
    std::sort(scores.begin(), scores.end());

    ScoreGrid grid;
    grid.source_percentiles.assign(percentiles.begin(), percentiles.end());
    std::sort(grid.source_percentiles.begin(), grid.source_percentiles.end());
    for (double p : grid.source_percentiles) {
        const double point = stats::percentile_sorted(scores, p);
        if (grid.points.empty() || point > grid.points.back()) grid.points.push_back(point);
    }
    return grid;
}

ScoreGrid build_score_grid(const ClusteredDataset& reference, std::size_t k) {
    const auto p = default_grid_percentiles();
    return build_score_grid(reference, p, k);
}

Correction correction_from_string(const std::string& name) {
    if (name == "bonferroni") return Correction::bonferroni;
    if (name == "holm") return Correction::holm;
    throw data_error("unknown correction '" + name + "' (expected bonferroni or holm)");
}

std::string to_string(Correction correction) {
    return correction == Correction::bonferroni ? "bonferroni" : "holm";
}

ParityTestReport parity_test(const ClusteredDataset& dataset, const std::string& g1,
                             const std::string& g2, const ScoreGrid& grid, double alpha,
                             Mode mode, std::size_t k, const TestOptions& options) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw data_error("alpha must lie in (0, 1)");
    if (!dataset.group_index(g1)) throw stat_error("group '" + g1 + "' not present");
    if (!dataset.group_index(g2)) throw stat_error("group '" + g2 + "' not present");
    if (grid.points.empty()) throw data_error("empty score grid");

    ParityTestReport report;
    report.g1 = g1;
    report.g2 = g2;
    report.mode = mode;
    report.k = k;
    report.correction = options.correction;
    report.one_sided = options.one_sided;
    report.points.reserve(grid.points.size());

    for (double s : grid.points) {
        PointTest pt;
        pt.s = s;
        try {
            const double single[1] = {s};
            const auto c1 = estimate_curve(dataset, g1, single, mode, k, options.bandwidth,
                                           options.kernel);
            const auto c2 = estimate_curve(dataset, g2, single, mode, k, options.bandwidth,
                                           options.kernel);
            pt.f1 = c1[0].value;
            pt.f2 = c2[0].value;
            pt.se1 = c1[0].std_error;
            pt.se2 = c2[0].std_error;
            pt.low_mass = c1[0].low_mass || c2[0].low_mass;
            pt.z = z_statistic(pt.f1, pt.f2, pt.se1, pt.se2);
            pt.p_raw = options.one_sided ? stats::upper_p(pt.z) : stats::two_sided_p(pt.z);
            pt.p_adj = pt.p_raw;
            pt.testable = true;
        } catch (const stat_error& err) {
            std::ostringstream msg;
            msg << "grid point " << s << " untestable: " << err.what();
            report.warnings.push_back(msg.str());
        }
        report.points.push_back(pt);
    }

    apply_correction(report.points, options.correction);
    finalize(report, alpha);
    return report;
}

ParityTestReport marginal_outcome_test(const ClusteredDataset& dataset, const std::string& g1,
                                       const std::string& g2, double t_star, double h,
                                       double alpha, std::size_t k, const TestOptions& options) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw data_error("alpha must lie in (0, 1)");

    ParityTestReport report;
    report.g1 = g1;
    report.g2 = g2;
    report.mode = Mode::user_level;
    report.k = k;
    report.correction = options.correction;
    report.one_sided = options.one_sided;

    // A threshold below the observed scores truncates nothing; evaluate at
    // the lowest observed score instead of extrapolating leftwards.
    double min_score = std::numeric_limits<double>::infinity();
    for (const auto& m : dataset.members())
        for (const auto& obs : m.instances) min_score = std::min(min_score, obs.scores[k]);
    const double s_eval = std::max(t_star, min_score);

    PointTest pt;
    pt.s = s_eval;
    const auto e1 = nw_truncated(dataset, g1, s_eval, h, t_star, k, options.kernel);
    const auto e2 = nw_truncated(dataset, g2, s_eval, h, t_star, k, options.kernel);
    pt.f1 = e1.value;
    pt.f2 = e2.value;
    pt.se1 = e1.std_error;
    pt.se2 = e2.std_error;
    pt.low_mass = e1.low_mass || e2.low_mass;
    pt.z = z_statistic(pt.f1, pt.f2, pt.se1, pt.se2);
    pt.p_raw = options.one_sided ? stats::upper_p(pt.z) : stats::two_sided_p(pt.z);
    pt.p_adj = pt.p_raw;
    pt.testable = true;
    report.points.push_back(pt);

    finalize(report, alpha);
    return report;
}

std::vector<OrderingViolation> ordering_diagnostic(std::span<const GroupCurve> curves,
                                                   std::span<const double> grid_points) {
    for (const auto& curve : curves)
        if (curve.points.size() != grid_points.size())
            throw stat_error("ordering diagnostic requires curves on a shared grid");

    std::vector<OrderingViolation> violations;
    for (std::size_t a = 0; a < curves.size(); ++a) {
        for (std::size_t b = 0; b < curves.size(); ++b) {
            if (a == b) continue;
            for (std::size_t i = 0; i < grid_points.size(); ++i) {
                for (std::size_t j = i + 1; j < grid_points.size(); ++j) {
                    // Group a at the lower score vs group b at the higher score.
                    const auto& low = curves[a].points[i];
                    const auto& high = curves[b].points[j];
                    const double tolerance = 2.0 * (low.std_error + high.std_error);
                    const double excess = low.value - high.value - tolerance;
                    if (excess > 0.0) {
                        violations.push_back(OrderingViolation{
                            curves[a].group, curves[b].group, grid_points[i], grid_points[j],
                            low.value, high.value, excess});
                    }
                }
            }
        }
    }
    return violations;
}

nlohmann::json report_to_json(const ParityTestReport& report) {
    nlohmann::json j;
    j["g1"] = report.g1;
    j["g2"] = report.g2;
    j["mode"] = to_string(report.mode);
    j["objective"] = report.k;
    j["alpha"] = report.alpha;
    j["correction"] = to_string(report.correction);
    j["one_sided"] = report.one_sided;
    j["reject"] = report.reject;
    j["tested_points"] = report.tested_points;
    j["min_p_adj"] = report.min_p_adj;
    j["grid"] = nlohmann::json::array();
    for (const auto& pt : report.points) {
        nlohmann::json row;
        row["s"] = pt.s;
        row["testable"] = pt.testable;
        if (pt.testable) {
            row["estimate_g1"] = pt.f1;
            row["estimate_g2"] = pt.f2;
            row["se_g1"] = pt.se1;
            row["se_g2"] = pt.se2;
            row["z"] = pt.z;
            row["p_raw"] = pt.p_raw;
            row["p_adj"] = pt.p_adj;
            row["low_mass"] = pt.low_mass;
        }
        j["grid"].push_back(std::move(row));
    }
    j["warnings"] = report.warnings;
    if (!report.ordering_violations.empty()) {
        // No formal size control; flagged pairs are leads for inspection.
        j["ordering_diagnostic"] = {{"heuristic", true}, {"violations", nlohmann::json::array()}};
        for (const auto& v : report.ordering_violations) {
            j["ordering_diagnostic"]["violations"].push_back(
                {{"group_low", v.group_low},
                 {"group_high", v.group_high},
                 {"s_low", v.s_low},
                 {"s_high", v.s_high},
                 {"estimate_low", v.f_low},
                 {"estimate_high", v.f_high},
                 {"margin", v.margin}});
        }
    }
    return j;
}

} // namespace parity

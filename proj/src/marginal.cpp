#include "parity/marginal.hpp"

#include "parity/calibration.hpp"
#include "parity/errors.hpp"
#include "parity/parity_testing.hpp"
#include "parity/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace parity {

namespace {

constexpr double kResidualTol = 1e-4;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

} // namespace

EmpiricalCdf::EmpiricalCdf(std::vector<double> scores) : sorted_(std::move(scores)) {
    if (sorted_.empty()) throw stat_error("empirical CDF needs a non-empty sample");
    std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double t) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), t);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double OutcomePredictor::operator()(double t) const {
    if (t < t_star) {
        return clamp01(values.front() + below_slope * (t - t_star));
    }
    if (t >= knots.back()) return clamp01(values.back());
    const auto it = std::upper_bound(knots.begin(), knots.end(), t);
    const auto hi = static_cast<std::size_t>(it - knots.begin());
    const auto lo = hi - 1;
    const double span = knots[hi] - knots[lo];
    const double frac = span > 0.0 ? (t - knots[lo]) / span : 0.0;
    return clamp01(values[lo] + frac * (values[hi] - values[lo]));
}

double OutcomePredictor::inverse(double y, double lo, double hi) const {
    const auto& self = *this;
    if (y <= self(lo)) return lo;
    if (y >= self(hi)) return hi;
    double a = lo, b = hi;
    for (int i = 0; i < 200 && b - a > 1e-13; ++i) {
        const double mid = 0.5 * (a + b);
        if (self(mid) >= y)
            b = mid;
        else
            a = mid;
    }
    return b;
}

bool OutcomePredictor::non_decreasing_on(double lo, double hi) const {
    const int n = 512;
    double prev = (*this)(lo);
    for (int i = 1; i <= n; ++i) {
        const double t = lo + (hi - lo) * static_cast<double>(i) / n;
        const double cur = (*this)(t);
        if (cur < prev - 1e-12) return false;
        prev = cur;
    }
    return true;
}

OutcomePredictor fit_outcome_predictor(const ClusteredDataset& dataset, const std::string& group,
                                       double t_star, double window, std::size_t k,
                                       const KernelSpec& kernel) {
    if (!(window > 0.0)) throw data_error("window must be positive");
    const auto idx = dataset.group_index(group);
    if (!idx) throw stat_error("group '" + group + "' not present");

    // Collect the group's above-threshold instances and the window sample.
    std::vector<double> above;
    std::vector<std::pair<double, double>> window_points;
    for (const auto& m : dataset.members()) {
        if (m.group != *idx) continue;
        for (const auto& obs : m.instances) {
            const double s = obs.scores[k];
            if (s < t_star) continue;
            above.push_back(s);
            if (s <= t_star + window) {
                if (std::isnan(obs.outcomes[k]))
                    throw data_error("missing outcome above the threshold");
                window_points.emplace_back(s, obs.outcomes[k]);
            }
        }
    }
    if (above.empty())
        throw stat_error("group '" + group + "' has no instances at or above the threshold");
    if (window_points.size() < 30) {
        std::ostringstream msg;
        msg << "group '" << group << "' has only " << window_points.size()
            << " instances in [t*, t* + window]; enlarge the window";
        throw stat_error(msg.str());
    }

    OutcomePredictor pred;
    pred.group = group;
    pred.t_star = t_star;
    pred.window_count = window_points.size();

    // Knots: t_star plus percentiles of the above-threshold scores.
    std::sort(above.begin(), above.end());
    pred.knots.push_back(t_star);
    for (double p : default_grid_percentiles()) {
        const double knot = stats::percentile_sorted(above, p);
        if (knot > pred.knots.back()) pred.knots.push_back(knot);
    }
    if (above.back() > pred.knots.back()) pred.knots.push_back(above.back());

    const std::size_t n_members = dataset.group_member_count(*idx);
    std::vector<double> raw;
    raw.reserve(pred.knots.size());
    for (double knot : pred.knots) {
        const double h = rule_of_thumb_bandwidth(std::clamp(knot, 0.0, 1.0), n_members);
        raw.push_back(nw_truncated(dataset, group, knot, h, t_star, k, kernel).value);
    }

    // Least squares of outcomes on scores over the window. The fitted line
    // value at t_star replaces the one-sided kernel value there: the kernel
    // sees only scores above the threshold and overshoots at the boundary,
    // while the regression line is centered for locally linear outcomes.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& [s, y] : window_points) {
        sx += s;
        sy += y;
        sxx += s * s;
        sxy += s * y;
    }
    const auto n = static_cast<double>(window_points.size());
    const double denom = sxx - sx * sx / n;
    pred.below_slope = denom > 1e-12 ? (sxy - sx * sy / n) / denom : 0.0;
    raw.front() = clamp01(sy / n + pred.below_slope * (t_star - sx / n));

    const std::vector<double> ones(raw.size(), 1.0);
    pred.values = pava_non_decreasing(raw, ones);
    return pred;
}

MarginalSolution solve_fair_thresholds(const OutcomePredictor& pred_g1,
                                       const OutcomePredictor& pred_g2,
                                       const EmpiricalCdf& cdf_g1, const EmpiricalCdf& cdf_g2,
                                       double p_g1, double p_g2, double t_star) {
    if (!(p_g1 > 0.0 && p_g2 > 0.0))
        throw data_error("group proportions must be positive");
    const double total = p_g1 + p_g2;
    if (std::abs(total - 1.0) > 1e-9)
        throw data_error("group proportions must sum to 1");

    const double lo = std::min(cdf_g1.min(), cdf_g2.min());
    const double hi = std::max(cdf_g1.max(), cdf_g2.max());
    if (!(t_star >= lo && t_star <= hi))
        throw data_error("threshold outside the observed score range");

    if (!pred_g1.non_decreasing_on(lo, hi) || !pred_g2.non_decreasing_on(lo, hi))
        throw stat_error("outcome predictor decreases on the score range; cannot invert");

    const double budget_target =
        p_g1 * (1.0 - cdf_g1(t_star)) + p_g2 * (1.0 - cdf_g2(t_star));

    const auto paired_t2 = [&](double t1) { return pred_g2.inverse(pred_g1(t1), lo, hi); };
    const auto budget_residual = [&](double t1) {
        const double t2 = paired_t2(t1);
        return p_g1 * (1.0 - cdf_g1(t1)) + p_g2 * (1.0 - cdf_g2(t2)) - budget_target;
    };

    int iterations = 0;
    std::vector<std::pair<double, double>> candidates; // (t1, t2)

    // The status quo is itself a candidate when it already balances both
    // equations (identically distributed, already-fair groups).
    {
        const double t2 = paired_t2(t_star);
        if (std::abs(budget_residual(t_star)) <= kResidualTol &&
            std::abs(pred_g1(t_star) - pred_g2(t2)) <= kResidualTol)
            candidates.emplace_back(t_star, t2);
    }

    // Scan for sign changes of the budget residual, bisect each bracket.
    const int n_scan = 2000;
    double prev_t = lo;
    double prev_r = budget_residual(lo);
    for (int i = 1; i <= n_scan; ++i) {
        const double t = lo + (hi - lo) * static_cast<double>(i) / n_scan;
        const double r = budget_residual(t);
        const bool bracket = (prev_r <= 0.0 && r >= 0.0) || (prev_r >= 0.0 && r <= 0.0);
        if (bracket && !(prev_r == 0.0 && r == 0.0)) {
            double a = prev_t, b = t, ra = prev_r;
            for (int step = 0; step < 100; ++step) {
                const double mid = 0.5 * (a + b);
                const double rm = budget_residual(mid);
                ++iterations;
                if (std::abs(rm) <= kResidualTol * 0.1 || b - a < 1e-12) {
                    a = b = mid;
                    break;
                }
                if ((rm < 0.0) == (ra < 0.0)) {
                    a = mid;
                    ra = rm;
                } else {
                    b = mid;
                }
            }
            const double t1 = 0.5 * (a + b);
            candidates.emplace_back(t1, paired_t2(t1));
        } else if (std::abs(r) <= 0.5 * kResidualTol) {
            // Near-tangent root without a sign change; accept only with margin.
            candidates.emplace_back(t, paired_t2(t));
        }
        prev_t = t;
        prev_r = r;
    }

    MarginalSolution best;
    bool found = false;
    double best_norm = std::numeric_limits<double>::infinity();
    for (const auto& [t1, t2] : candidates) {
        const double parity = pred_g1(t1) - pred_g2(t2);
        const double budget = budget_residual(t1);
        if (std::abs(parity) > kResidualTol || std::abs(budget) > kResidualTol) continue;
        const double norm = std::max(std::abs(t1 - t_star), std::abs(t2 - t_star));
        if (norm < best_norm) {
            best_norm = norm;
            best.t_g1 = t1;
            best.t_g2 = t2;
            best.outcome_g1 = pred_g1(t1);
            best.outcome_g2 = pred_g2(t2);
            best.parity_residual = parity;
            best.budget_residual = budget;
            found = true;
        }
    }
    if (!found)
        throw stat_error("no solution in range: the budget residual has no admissible root "
                         "(flat or discrete score regions can cause this)");

    best.iterations = iterations;
    best.extrapolated = best.t_g1 < t_star || best.t_g2 < t_star;
    return best;
}

nlohmann::json marginal_solution_to_json(const MarginalSolution& solution,
                                         const OutcomePredictor& pred_g1,
                                         const OutcomePredictor& pred_g2) {
    nlohmann::json j;
    j["thresholds"] = {{pred_g1.group, solution.t_g1}, {pred_g2.group, solution.t_g2}};
    j["marginal_outcomes"] = {{pred_g1.group, solution.outcome_g1},
                              {pred_g2.group, solution.outcome_g2}};
    j["parity_residual"] = solution.parity_residual;
    j["budget_residual"] = solution.budget_residual;
    j["iterations"] = solution.iterations;
    j["extrapolated"] = solution.extrapolated;
    if (solution.extrapolated)
        j["caution"] = "a solved threshold lies below the observed marginal threshold; "
                       "predictions there rely on extrapolated outcomes and are suggestive only";
    const auto curve = [](const OutcomePredictor& pred) {
        nlohmann::json c;
        c["group"] = pred.group;
        c["t_star"] = pred.t_star;
        c["knots"] = pred.knots;
        c["values"] = pred.values;
        c["below_slope"] = pred.below_slope;
        return c;
    };
    j["predictors"] = {curve(pred_g1), curve(pred_g2)};
    return j;
}

} // namespace parity

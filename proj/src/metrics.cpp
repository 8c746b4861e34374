#include "parity/metrics.hpp"

#include "parity/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace parity {

namespace {

//! Curves for all groups on the shared grid; points where any group lacks
//! kernel mass are masked out symmetrically.
struct MaskedCurves {
    std::vector<std::vector<double>> values; // [group][point]
    std::vector<bool> usable;                // [point]
    std::size_t used = 0;
};

MaskedCurves masked_curves(const ClusteredDataset& dataset, const ScoreGrid& grid, Mode mode,
                           std::size_t k, const MetricOptions& options) {
    const auto& groups = dataset.group_levels();
    if (groups.empty()) throw stat_error("dataset has no groups");
    if (grid.points.empty()) throw data_error("empty score grid");

    MaskedCurves out;
    out.values.assign(groups.size(), std::vector<double>(grid.points.size(), 0.0));
    out.usable.assign(grid.points.size(), true);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::size_t i = 0; i < grid.points.size(); ++i) {
            if (!out.usable[i]) continue;
            try {
                const double single[1] = {grid.points[i]};
                const auto est = estimate_curve(dataset, groups[g], single, mode, k,
                                                options.bandwidth, options.kernel);
                out.values[g][i] = est[0].value;
            } catch (const stat_error&) {
                out.usable[i] = false;
            }
        }
    }
    out.used = static_cast<std::size_t>(
        std::count(out.usable.begin(), out.usable.end(), true));
    if (out.used == 0) throw stat_error("no usable grid points: every point lacks kernel mass");
    return out;
}

} // namespace

MetricValue npce(const ClusteredDataset& dataset, const ScoreGrid& grid, Mode mode,
                 std::size_t k, const MetricOptions& options) {
    const auto curves = masked_curves(dataset, grid, mode, k, options);
    double total = 0.0;
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
        if (!curves.usable[i]) continue;
        for (const auto& group_values : curves.values)
            total += std::abs(group_values[i] - grid.points[i]);
    }
    MetricValue out;
    out.value = total / static_cast<double>(curves.used);
    out.grid_points_used = curves.used;
    out.grid_points_dropped = grid.points.size() - curves.used;
    return out;
}

MetricValue parity_error(const ClusteredDataset& dataset, const ScoreGrid& grid, Mode mode,
                         std::size_t k, const MetricOptions& options) {
    const auto curves = masked_curves(dataset, grid, mode, k, options);
    const std::size_t n_groups = curves.values.size();
    double total = 0.0;
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
        if (!curves.usable[i]) continue;
        for (std::size_t a = 0; a < n_groups; ++a)
            for (std::size_t b = 0; b < n_groups; ++b)
                if (a != b) total += std::abs(curves.values[a][i] - curves.values[b][i]);
    }
    MetricValue out;
    out.value = total / static_cast<double>(curves.used);
    out.grid_points_used = curves.used;
    out.grid_points_dropped = grid.points.size() - curves.used;
    return out;
}

double auc(const ClusteredDataset& dataset, std::optional<std::string> group, std::size_t k) {
    if (k >= dataset.k()) throw data_error("objective index out of range");
    std::optional<int> filter;
    if (group) {
        filter = dataset.group_index(*group);
        if (!filter) throw stat_error("group '" + *group + "' not present");
    }

    std::vector<std::pair<double, double>> data; // (score, outcome)
    for (const auto& m : dataset.members()) {
        if (filter && m.group != *filter) continue;
        for (const auto& obs : m.instances) {
            const double y = obs.outcomes[k];
            if (std::isnan(y)) throw data_error("missing outcome in AUC input");
            if (y != 0.0 && y != 1.0) throw data_error("AUC requires binary 0/1 outcomes");
            data.emplace_back(obs.scores[k], y);
        }
    }
    std::sort(data.begin(), data.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& [s, y] : data) (y == 1.0 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw stat_error("AUC undefined: a single outcome class is present");

    // Rank sum with average ranks over tie groups.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < data.size()) {
        std::size_t j = i;
        while (j < data.size() && data[j].first == data[i].first) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t t = i; t < j; ++t)
            if (data[t].second == 1.0) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                        (static_cast<double>(n_pos) + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double ece(const ClusteredDataset& dataset, std::size_t bins, std::size_t k) {
    if (bins == 0) throw data_error("ECE needs at least one bin");
    if (k >= dataset.k()) throw data_error("objective index out of range");

    std::vector<double> score_sum(bins, 0.0), outcome_sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    std::size_t n = 0;
    for (const auto& m : dataset.members()) {
        for (const auto& obs : m.instances) {
            const double s = obs.scores[k];
            const double y = obs.outcomes[k];
            if (std::isnan(y)) throw data_error("missing outcome in ECE input");
            auto b = static_cast<std::size_t>(std::clamp(s, 0.0, 1.0) *
                                              static_cast<double>(bins));
            if (b >= bins) b = bins - 1;
            score_sum[b] += s;
            outcome_sum[b] += y;
            ++count[b];
            ++n;
        }
    }
    if (n == 0) throw data_error("empty dataset");

    double total = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const auto nb = static_cast<double>(count[b]);
        total += nb / static_cast<double>(n) *
                 std::abs(score_sum[b] / nb - outcome_sum[b] / nb);
    }
    return total;
}

} // namespace parity

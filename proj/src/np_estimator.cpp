#include "parity/np_estimator.hpp"

#include "parity/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace parity {

namespace {

constexpr std::size_t kLowMassThreshold = 10;

int require_group(const ClusteredDataset& dataset, const std::string& group) {
    const auto idx = dataset.group_index(group);
    if (!idx) throw stat_error("group '" + group + "' not present in the dataset");
    return *idx;
}

void require_objective(const ClusteredDataset& dataset, std::size_t k) {
    if (k >= dataset.k())
        throw stat_error("objective index " + std::to_string(k) + " out of range (K=" +
                         std::to_string(dataset.k()) + ")");
}

void require_outcome_present(double y, double score) {
    if (std::isnan(y)) {
        std::ostringstream msg;
        msg << "missing outcome at score " << score
            << " inside the estimation window; missing labels are only allowed below a "
               "truncation threshold";
        throw data_error(msg.str());
    }
}

//! Contiguous copies of one group's instances for the cache-friendly inner
//! loop, plus the member layout needed for cluster summaries.
struct GroupView {
    std::vector<double> score;    // instance score for objective k
    std::vector<double> outcome;  // instance outcome for objective k
    std::vector<std::uint32_t> member; // ordinal of the owning group member
    std::vector<double> weight;   // 1/n_m in user_level mode, 1 in aggregate
    std::size_t group_members = 0;
    std::size_t total_members = 0;
};

GroupView make_group_view(const ClusteredDataset& dataset, int group, std::size_t k, Mode mode,
                          double min_score) {
    GroupView view;
    view.total_members = dataset.member_count();
    for (const auto& m : dataset.members()) {
        if (m.group != group) continue;
        const auto ordinal = static_cast<std::uint32_t>(view.group_members++);
        const double w = mode == Mode::user_level
                             ? 1.0 / static_cast<double>(m.instances.size())
                             : 1.0;
        for (const auto& obs : m.instances) {
            const double s = obs.scores[k];
            if (s < min_score) continue;
            require_outcome_present(obs.outcomes[k], s);
            view.score.push_back(s);
            view.outcome.push_back(obs.outcomes[k]);
            view.member.push_back(ordinal);
            view.weight.push_back(w);
        }
    }
    return view;
}

struct Workspace {
    std::vector<ClusterSummary> summaries;
};

void accumulate_summaries(const GroupView& view, double s, double h, const KernelSpec& kernel,
                          Workspace& ws) {
    ws.summaries.assign(view.group_members, ClusterSummary{});
    const double inv_h = 1.0 / h;
    const std::size_t n = view.score.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = view.weight[i] * kernel_eval(kernel, (view.score[i] - s) * inv_h);
        auto& cs = ws.summaries[view.member[i]];
        cs.a += view.outcome[i] * w;
        cs.b += w;
    }
}

PointEstimate estimate_from_summaries(const Workspace& ws, double s, std::size_t total_members) {
    double sum_a = 0.0, sum_b = 0.0;
    std::size_t m_eff = 0;
    for (const auto& cs : ws.summaries) {
        sum_a += cs.a;
        sum_b += cs.b;
        if (cs.b > 0.0) ++m_eff;
    }
    if (!(sum_b > 0.0)) {
        std::ostringstream msg;
        msg << "no kernel mass at s=" << s << "; increase the bandwidth or choose another point";
        throw stat_error(msg.str());
    }

    PointEstimate est;
    est.s = s;
    est.value = sum_a / sum_b;
    est.numerator_mass = sum_a;
    est.denominator_mass = sum_b;
    est.m_effective = m_eff;

    if (ws.summaries.size() >= 2) {
        est.std_error = std::sqrt(nw_variance(ws.summaries, total_members));
    } else {
        est.std_error = 0.0;
        est.low_mass = true;
    }
    if (m_eff < kLowMassThreshold) {
        est.low_mass = true;
        est.std_error *= std::sqrt(static_cast<double>(kLowMassThreshold) /
                                   static_cast<double>(std::max<std::size_t>(m_eff, 1)));
    }
    return est;
}

PointEstimate nw_point(const ClusteredDataset& dataset, const std::string& group, double s,
                       double h, std::size_t k, Mode mode, const KernelSpec& kernel,
                       double min_score) {
    if (!(h > 0.0)) throw stat_error("bandwidth must be positive");
    require_objective(dataset, k);
    const int g = require_group(dataset, group);
    const GroupView view = make_group_view(dataset, g, k, mode, min_score);
    if (view.score.empty())
        throw stat_error("group '" + group + "' has no usable instances at the requested point");
    Workspace ws;
    accumulate_summaries(view, s, h, kernel, ws);
    return estimate_from_summaries(ws, s, view.total_members);
}

} // namespace

Mode mode_from_string(const std::string& name) {
    if (name == "user" || name == "user-level" || name == "user_level") return Mode::user_level;
    if (name == "aggregate") return Mode::aggregate;
    throw data_error("unknown mode '" + name + "' (expected user or aggregate)");
}

std::string to_string(Mode mode) {
    return mode == Mode::user_level ? "user-level" : "aggregate";
}

std::vector<ClusterSummary> cluster_summaries(const ClusteredDataset& dataset, int group,
                                              double s, double h, std::size_t k, Mode mode,
                                              const KernelSpec& kernel, double min_score) {
    if (!(h > 0.0)) throw stat_error("bandwidth must be positive");
    require_objective(dataset, k);
    const GroupView view = make_group_view(dataset, group, k, mode, min_score);
    Workspace ws;
    ws.summaries.assign(view.group_members, ClusterSummary{});
    accumulate_summaries(view, s, h, kernel, ws);
    return ws.summaries;
}

double nw_variance(std::span<const ClusterSummary> group_summaries, std::size_t total_members) {
    if (group_summaries.size() < 2)
        throw stat_error("insufficient clusters: cluster-robust variance needs at least 2 members");
    if (total_members < group_summaries.size())
        throw stat_error("total member count smaller than the group's member count");

    const auto m = static_cast<double>(total_members);
    double sum_a = 0.0, sum_b = 0.0, sum_aa = 0.0, sum_bb = 0.0, sum_ab = 0.0;
    for (const auto& cs : group_summaries) {
        sum_a += cs.a;
        sum_b += cs.b;
        sum_aa += cs.a * cs.a;
        sum_bb += cs.b * cs.b;
        sum_ab += cs.a * cs.b;
    }
    const double mean_a = sum_a / m;
    const double mean_b = sum_b / m;
    if (!(mean_b > 0.0)) throw stat_error("zero kernel mass: variance undefined");

    // Members outside the group contribute (0, 0) summaries, so the raw
    // moment sums are unchanged by the padding.
    const double var_a = sum_aa / m - mean_a * mean_a;
    const double var_b = sum_bb / m - mean_b * mean_b;
    const double cov_ab = sum_ab / m - mean_a * mean_b;
    const double ratio = mean_a / mean_b;

    const double v =
        (var_a - 2.0 * ratio * cov_ab + ratio * ratio * var_b) / (m * mean_b * mean_b);
    return std::max(v, 0.0);
}

PointEstimate nw_user_level(const ClusteredDataset& dataset, const std::string& group, double s,
                            double h, std::size_t k, const KernelSpec& kernel) {
    return nw_point(dataset, group, s, h, k, Mode::user_level, kernel,
                    -std::numeric_limits<double>::infinity());
}

PointEstimate nw_aggregate(const ClusteredDataset& dataset, const std::string& group, double s,
                           double h, std::size_t k, const KernelSpec& kernel) {
    return nw_point(dataset, group, s, h, k, Mode::aggregate, kernel,
                    -std::numeric_limits<double>::infinity());
}

PointEstimate nw_truncated(const ClusteredDataset& dataset, const std::string& group, double s,
                           double h, double t_star, std::size_t k, const KernelSpec& kernel) {
    return nw_point(dataset, group, s, h, k, Mode::user_level, kernel, t_star);
}

PointEstimate nw_multivariate(const ClusteredDataset& dataset, const std::string& group,
                              std::span<const double> s_vec, std::span<const double> h_vec,
                              std::size_t k, const KernelSpec& kernel) {
    const std::size_t dims = dataset.k();
    if (dims > 4)
        throw stat_error("multivariate estimation limited to K <= 4 conditioning scores");
    if (s_vec.size() != dims || h_vec.size() != dims)
        throw stat_error("s_vec/h_vec length must equal the dataset's K");
    for (double h : h_vec)
        if (!(h > 0.0)) throw stat_error("bandwidth must be positive");
    require_objective(dataset, k);
    const int g = require_group(dataset, group);

    Workspace ws;
    std::size_t ordinal = 0;
    std::size_t group_members = 0;
    for (const auto& m : dataset.members())
        if (m.group == g) ++group_members;
    ws.summaries.assign(group_members, ClusterSummary{});

    for (const auto& m : dataset.members()) {
        if (m.group != g) continue;
        auto& cs = ws.summaries[ordinal++];
        const double inv_n = 1.0 / static_cast<double>(m.instances.size());
        for (const auto& obs : m.instances) {
            double w = inv_n;
            for (std::size_t j = 0; j < dims; ++j)
                w *= kernel_eval(kernel, (obs.scores[j] - s_vec[j]) / h_vec[j]);
            require_outcome_present(obs.outcomes[k], obs.scores[k]);
            cs.a += obs.outcomes[k] * w;
            cs.b += w;
        }
    }
    const PointEstimate est = estimate_from_summaries(ws, s_vec[0], dataset.member_count());
    return est;
}

double BandwidthRule::at(double s, std::size_t n) const {
    if (fixed) {
        if (!(*fixed > 0.0)) throw stat_error("fixed bandwidth must be positive");
        return *fixed;
    }
    return rule_of_thumb_bandwidth(s, n);
}

std::vector<PointEstimate> estimate_curve(const ClusteredDataset& dataset,
                                          const std::string& group,
                                          std::span<const double> grid_points, Mode mode,
                                          std::size_t k, const BandwidthRule& bandwidth,
                                          const KernelSpec& kernel) {
    require_objective(dataset, k);
    const int g = require_group(dataset, group);
    const GroupView view =
        make_group_view(dataset, g, k, mode, -std::numeric_limits<double>::infinity());
    if (view.score.empty()) throw stat_error("group '" + group + "' has no instances");

    const std::size_t n_for_rule = mode == Mode::user_level
                                       ? view.group_members
                                       : view.score.size();
    std::vector<PointEstimate> curve;
    curve.reserve(grid_points.size());
    Workspace ws;
    for (double s : grid_points) {
        const double h = bandwidth.at(s, n_for_rule);
        accumulate_summaries(view, s, h, kernel, ws);
        curve.push_back(estimate_from_summaries(ws, s, view.total_members));
    }
    return curve;
}

} // namespace parity

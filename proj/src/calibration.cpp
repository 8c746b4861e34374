#include "parity/calibration.hpp"

#include "parity/errors.hpp"
#include "parity/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace parity {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct WeightedPoint {
    double s = 0.0;
    double y = 0.0;
    double w = 1.0;
};

std::vector<WeightedPoint> group_points(const ClusteredDataset& train, const std::string& group,
                                        std::size_t k, bool member_weighted) {
    const auto idx = train.group_index(group);
    if (!idx) throw stat_error("group '" + group + "' not present in the training data");
    if (k >= train.k()) throw stat_error("objective index out of range");
    std::vector<WeightedPoint> points;
    for (const auto& m : train.members()) {
        if (m.group != *idx) continue;
        const double w =
            member_weighted ? 1.0 / static_cast<double>(m.instances.size()) : 1.0;
        for (const auto& obs : m.instances) {
            if (std::isnan(obs.outcomes[k]))
                throw data_error("missing outcome in calibration training data");
            points.push_back({obs.scores[k], obs.outcomes[k], w});
        }
    }
    if (points.empty()) throw stat_error("group '" + group + "' has no instances");
    return points;
}

Calibrator single_group(CalibratorFamily family, const std::string& group,
                        detail::GroupTransform transform) {
    return detail::make_calibrator(family, group, std::move(transform));
}

double interp_knots(std::span<const double> knots, std::span<const double> values, double s) {
    if (s <= knots.front()) return values.front();
    if (s >= knots.back()) return values.back();
    const auto it = std::upper_bound(knots.begin(), knots.end(), s);
    const auto hi = static_cast<std::size_t>(it - knots.begin());
    const auto lo = hi - 1;
    const double span = knots[hi] - knots[lo];
    const double frac = span > 0.0 ? (s - knots[lo]) / span : 0.0;
    return values[lo] + frac * (values[hi] - values[lo]);
}

//! Per-dimension product-kernel bandwidth: the variance rule with the
//! dimension-adjusted rate n^(-1/(4+K)) and the same 1/10 floor.
double multivariate_bandwidth(double s, std::size_t n, std::size_t dims) {
    const double rate =
        std::pow(static_cast<double>(n), -1.0 / (4.0 + static_cast<double>(dims)));
    const double clamped = std::clamp(s, 0.0, 1.0);
    return std::max(1.06 * std::sqrt(clamped * (1.0 - clamped)) * rate, rate / 10.0);
}

} // namespace

namespace detail {
Calibrator make_calibrator(CalibratorFamily family, const std::string& group,
                           GroupTransform t) {
    Calibrator cal;
    cal.family_ = family;
    cal.transforms_.emplace(group, std::move(t));
    return cal;
}
} // namespace detail

CalibratorFamily calibrator_family_from_string(const std::string& name) {
    if (name == "binning") return CalibratorFamily::binning;
    if (name == "linear_interp") return CalibratorFamily::linear_interp;
    if (name == "platt") return CalibratorFamily::platt;
    if (name == "isotonic") return CalibratorFamily::isotonic;
    if (name == "multi_objective") return CalibratorFamily::multi_objective;
    throw data_error("unknown calibrator family '" + name + "'");
}

std::string to_string(CalibratorFamily family) {
    switch (family) {
    case CalibratorFamily::binning: return "binning";
    case CalibratorFamily::linear_interp: return "linear_interp";
    case CalibratorFamily::platt: return "platt";
    case CalibratorFamily::isotonic: return "isotonic";
    case CalibratorFamily::multi_objective: return "multi_objective";
    }
    return "unknown";
}

std::size_t Binning::bin_of(double s) const {
    if (edges.size() < 2) throw data_error("binning needs at least two edges");
    if (s < edges.front() || s > edges.back()) {
        std::ostringstream msg;
        msg << "score " << s << " outside the binning range [" << edges.front() << ", "
            << edges.back() << "]";
        throw data_error(msg.str());
    }
    if (s == edges.back()) return edges.size() - 2;
    const auto it = std::upper_bound(edges.begin(), edges.end(), s);
    return static_cast<std::size_t>(it - edges.begin()) - 1;
}

Binning equal_frequency_bins(std::vector<double> scores, std::size_t bins) {
    if (scores.empty()) throw stat_error("cannot bin an empty score sample");
    if (bins == 0) throw data_error("bin count must be positive");
    std::sort(scores.begin(), scores.end());
    Binning out;
    out.edges.push_back(scores.front());
    for (std::size_t b = 1; b < bins; ++b) {
        const double p = 100.0 * static_cast<double>(b) / static_cast<double>(bins);
        const double edge = stats::percentile_sorted(scores, p);
        if (edge > out.edges.back()) out.edges.push_back(edge);
    }
    if (scores.back() > out.edges.back()) out.edges.push_back(scores.back());
    if (out.edges.size() < 2) {
        // Degenerate sample (all scores equal): widen to a single usable bin.
        out.edges.push_back(out.edges.back() + 1e-9);
    }
    return out;
}

Calibrator fit_binning(const ClusteredDataset& train, const std::string& group,
                       const Binning& bins, std::size_t k, const FitOptions& options) {
    if (bins.bin_count() == 0) throw data_error("binning needs at least one bin");
    const auto points = group_points(train, group, k, options.member_weighted);

    const std::size_t n_bins = bins.bin_count();
    std::vector<double> sum(n_bins, 0.0), weight(n_bins, 0.0);
    for (const auto& pt : points) {
        const std::size_t b = bins.bin_of(pt.s);
        sum[b] += pt.w * pt.y;
        weight[b] += pt.w;
    }

    detail::BinningParams params;
    params.bins = bins;
    params.values.assign(n_bins, 0.0);
    params.filled_from_neighbor.assign(n_bins, false);
    for (std::size_t b = 0; b < n_bins; ++b)
        if (weight[b] > 0.0) params.values[b] = sum[b] / weight[b];

    for (std::size_t b = 0; b < n_bins; ++b) {
        if (weight[b] > 0.0) continue;
        std::size_t nearest = n_bins;
        std::size_t best_distance = n_bins + 1;
        for (std::size_t other = 0; other < n_bins; ++other) {
            if (weight[other] == 0.0) continue;
            const std::size_t distance = other > b ? other - b : b - other;
            if (distance < best_distance) {
                best_distance = distance;
                nearest = other;
            }
        }
        if (nearest == n_bins) throw stat_error("all bins empty for group '" + group + "'");
        params.values[b] = params.values[nearest];
        params.filled_from_neighbor[b] = true;
    }
    detail::GroupTransform t;
    t.binning = std::move(params);
    return single_group(CalibratorFamily::binning, group, std::move(t));
}

Calibrator fit_linear_interp(const ClusteredDataset& train, const std::string& group,
                             const Binning& bins, std::size_t k, const FitOptions& options) {
    if (bins.bin_count() == 0) throw data_error("binning needs at least one bin");
    detail::LinearInterpParams params;
    params.knots = bins.edges;
    const std::size_t n_members = train.group_member_count(*train.group_index(group));
    params.values.reserve(params.knots.size());
    for (double edge : params.knots) {
        const double h = options.bandwidth.at(std::clamp(edge, 0.0, 1.0), n_members);
        params.values.push_back(nw_user_level(train, group, edge, h, k, options.kernel).value);
    }
    detail::GroupTransform t;
    t.linear_interp = std::move(params);
    return single_group(CalibratorFamily::linear_interp, group, std::move(t));
}

Calibrator fit_platt(const ClusteredDataset& train, const std::string& group, std::size_t k,
                     const FitOptions& options) {
    const auto points = group_points(train, group, k, options.member_weighted);

    bool has_pos = false, has_neg = false;
    for (const auto& pt : points) {
        if (pt.y != 0.0 && pt.y != 1.0)
            throw data_error("platt scaling requires binary 0/1 outcomes");
        (pt.y == 1.0 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg)
        throw stat_error("degenerate outcome: group '" + group +
                         "' has a single outcome class, cannot fit platt scaling");

    const auto nll = [&](double a, double b) {
        double total = 0.0;
        for (const auto& pt : points) {
            const double eta = a * pt.s + b;
            // log(1 + exp(eta)) - y * eta, stabilized for large |eta|.
            const double softplus = eta > 30.0 ? eta : std::log1p(std::exp(eta));
            total += pt.w * (softplus - pt.y * eta);
        }
        return total;
    };

    double a = 0.0, b = 0.0;
    double current = nll(a, b);
    int iterations = 0;
    for (; iterations < 100; ++iterations) {
        double g0 = 0.0, g1 = 0.0;
        double h00 = 0.0, h01 = 0.0, h11 = 0.0;
        for (const auto& pt : points) {
            const double p = logistic(a * pt.s + b);
            const double r = pt.w * (p - pt.y);
            const double q = pt.w * std::max(p * (1.0 - p), 1e-12);
            g0 += r * pt.s;
            g1 += r;
            h00 += q * pt.s * pt.s;
            h01 += q * pt.s;
            h11 += q;
        }
        if (std::sqrt(g0 * g0 + g1 * g1) < 1e-8) break;

        const double det = h00 * h11 - h01 * h01;
        double da, db;
        if (std::abs(det) > 1e-300) {
            da = (h11 * g0 - h01 * g1) / det;
            db = (h00 * g1 - h01 * g0) / det;
        } else {
            da = g0;
            db = g1;
        }
        double step = 1.0;
        double next = nll(a - step * da, b - step * db);
        int halvings = 0;
        while (next > current && halvings < 40) {
            step *= 0.5;
            next = nll(a - step * da, b - step * db);
            ++halvings;
        }
        a -= step * da;
        b -= step * db;
        current = next;
    }

    detail::PlattParams params;
    params.a = a;
    params.b = b;
    params.iterations = iterations;
    params.separation_warning = std::abs(a) > 1e4;
    detail::GroupTransform t;
    t.platt = params;
    return single_group(CalibratorFamily::platt, group, std::move(t));
}

std::vector<double> pava_non_decreasing(std::span<const double> y, std::span<const double> w) {
    if (y.size() != w.size()) throw std::invalid_argument("pava: length mismatch");
    struct Block {
        double value;
        double weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    blocks.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        blocks.push_back({y[i], w[i], 1});
        while (blocks.size() >= 2 &&
               blocks[blocks.size() - 2].value > blocks.back().value) {
            const Block top = blocks.back();
            blocks.pop_back();
            Block& prev = blocks.back();
            const double total = prev.weight + top.weight;
            prev.value = (prev.value * prev.weight + top.value * top.weight) / total;
            prev.weight = total;
            prev.count += top.count;
        }
    }
    std::vector<double> fitted;
    fitted.reserve(y.size());
    for (const auto& block : blocks)
        fitted.insert(fitted.end(), block.count, block.value);
    return fitted;
}

Calibrator fit_isotonic(const ClusteredDataset& train, const std::string& group, std::size_t k,
                        const FitOptions& options) {
    auto points = group_points(train, group, k, options.member_weighted);
    std::sort(points.begin(), points.end(),
              [](const WeightedPoint& a, const WeightedPoint& b) { return a.s < b.s; });

    // Pre-pool exactly tied scores into weighted points.
    std::vector<double> knots, y, w;
    for (const auto& pt : points) {
        if (!knots.empty() && knots.back() == pt.s) {
            const double total = w.back() + pt.w;
            y.back() = (y.back() * w.back() + pt.y * pt.w) / total;
            w.back() = total;
        } else {
            knots.push_back(pt.s);
            y.push_back(pt.y);
            w.push_back(pt.w);
        }
    }

    detail::IsotonicParams params;
    params.knots = std::move(knots);
    params.values = pava_non_decreasing(y, w);
    detail::GroupTransform t;
    t.isotonic = std::move(params);
    return single_group(CalibratorFamily::isotonic, group, std::move(t));
}

Calibrator fit_multi_objective(const ClusteredDataset& train, const std::string& group,
                               const FitOptions& options) {
    const auto idx = train.group_index(group);
    if (!idx) throw stat_error("group '" + group + "' not present in the training data");
    if (train.k() > 4) throw stat_error("multi-objective calibration limited to K <= 4");

    detail::MultiObjectiveParams params;
    params.k_dims = train.k();
    params.fixed_bandwidth = options.bandwidth.fixed;
    for (const auto& m : train.members()) {
        if (m.group != *idx) continue;
        detail::MultiObjectiveMember member;
        for (const auto& obs : m.instances) {
            member.scores.push_back(obs.scores);
            member.outcomes.push_back(obs.outcomes);
        }
        params.sample.push_back(std::move(member));
    }
    if (params.sample.empty()) throw stat_error("group '" + group + "' has no instances");
    detail::GroupTransform t;
    t.multi_objective = std::move(params);
    return single_group(CalibratorFamily::multi_objective, group, std::move(t));
}

Calibrator fit_per_group(const ClusteredDataset& train, CalibratorFamily family, std::size_t k,
                         const FitOptions& options) {
    std::vector<Calibrator> parts;
    for (const auto& group : train.group_levels()) {
        switch (family) {
        case CalibratorFamily::binning: {
            const auto idx = *train.group_index(group);
            const auto bins = equal_frequency_bins(train.pooled_scores(k, idx), options.bins);
            parts.push_back(fit_binning(train, group, bins, k, options));
            break;
        }
        case CalibratorFamily::linear_interp: {
            const auto idx = *train.group_index(group);
            const auto bins = equal_frequency_bins(train.pooled_scores(k, idx), options.bins);
            parts.push_back(fit_linear_interp(train, group, bins, k, options));
            break;
        }
        case CalibratorFamily::platt:
            parts.push_back(fit_platt(train, group, k, options));
            break;
        case CalibratorFamily::isotonic:
            parts.push_back(fit_isotonic(train, group, k, options));
            break;
        case CalibratorFamily::multi_objective:
            parts.push_back(fit_multi_objective(train, group, options));
            break;
        }
    }
    return Calibrator::merge(std::move(parts));
}

Calibrator Calibrator::merge(std::vector<Calibrator> parts) {
    if (parts.empty()) throw stat_error("cannot merge zero calibrators");
    Calibrator merged;
    merged.family_ = parts.front().family_;
    for (auto& part : parts) {
        if (part.family_ != merged.family_)
            throw data_error("cannot merge calibrators of different families");
        for (auto& [group, transform] : part.transforms_) {
            if (!merged.transforms_.emplace(group, std::move(transform)).second)
                throw data_error("duplicate group '" + group + "' while merging calibrators");
        }
    }
    return merged;
}

std::vector<std::string> Calibrator::groups() const {
    std::vector<std::string> out;
    out.reserve(transforms_.size());
    for (const auto& [group, _] : transforms_) out.push_back(group);
    return out;
}

bool Calibrator::has_group(const std::string& group) const {
    return transforms_.count(group) > 0;
}

const detail::GroupTransform& Calibrator::transform_of(const std::string& group) const {
    const auto it = transforms_.find(group);
    if (it == transforms_.end())
        throw data_error("calibrator has no transformation for group '" + group +
                         "' (group unseen at fit time)");
    return it->second;
}

double Calibrator::apply(double s, const std::string& group) const {
    const auto& t = transform_of(group);
    switch (family_) {
    case CalibratorFamily::binning: {
        const auto& p = *t.binning;
        const auto& edges = p.bins.edges;
        if (s < edges.front()) return p.values.front();
        if (s > edges.back()) return p.values.back();
        return p.values[p.bins.bin_of(s)];
    }
    case CalibratorFamily::linear_interp: {
        const auto& p = *t.linear_interp;
        return clamp01(interp_knots(p.knots, p.values, s));
    }
    case CalibratorFamily::platt: {
        const auto& p = *t.platt;
        return logistic(p.a * s + p.b);
    }
    case CalibratorFamily::isotonic: {
        const auto& p = *t.isotonic;
        if (s < p.knots.front()) return p.values.front();
        // Right-continuous step: the level of the last knot <= s.
        const auto it = std::upper_bound(p.knots.begin(), p.knots.end(), s);
        return p.values[static_cast<std::size_t>(it - p.knots.begin()) - 1];
    }
    case CalibratorFamily::multi_objective: {
        if (t.multi_objective->k_dims != 1)
            throw std::logic_error("multi-objective calibrator requires apply_vector");
        const double one[1] = {s};
        return apply_vector(one, group)[0];
    }
    }
    throw std::logic_error("unknown calibrator family");
}

std::vector<double> Calibrator::apply_vector(std::span<const double> s_vec,
                                             const std::string& group) const {
    if (family_ != CalibratorFamily::multi_objective)
        throw std::logic_error("apply_vector is only defined for multi-objective calibrators");
    const auto& p = *transform_of(group).multi_objective;
    if (s_vec.size() != p.k_dims)
        throw data_error("score vector length does not match the calibrator's K");

    const auto key = std::make_pair(group, std::vector<double>(s_vec.begin(), s_vec.end()));
    {
        std::lock_guard<std::mutex> lock(memo_mutex_);
        const auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
    }

    std::vector<double> h(p.k_dims);
    for (std::size_t j = 0; j < p.k_dims; ++j)
        h[j] = p.fixed_bandwidth ? *p.fixed_bandwidth
                                 : multivariate_bandwidth(s_vec[j], p.sample.size(), p.k_dims);

    std::vector<double> result(p.k_dims, 0.0);
    std::vector<double> num(p.k_dims, 0.0);
    double den = 0.0;
    for (const auto& member : p.sample) {
        const double inv_n = 1.0 / static_cast<double>(member.scores.size());
        for (std::size_t i = 0; i < member.scores.size(); ++i) {
            double w = inv_n;
            for (std::size_t j = 0; j < p.k_dims; ++j)
                w *= kernel_eval(KernelSpec{}, (member.scores[i][j] - s_vec[j]) / h[j]);
            for (std::size_t j = 0; j < p.k_dims; ++j)
                num[j] += member.outcomes[i][j] * w;
            den += w;
        }
    }
    if (!(den > 0.0)) throw stat_error("no kernel mass at the requested score vector");
    for (std::size_t j = 0; j < p.k_dims; ++j) result[j] = num[j] / den;

    std::lock_guard<std::mutex> lock(memo_mutex_);
    memo_.emplace(key, result);
    return result;
}

double Calibrator::apply_composite(std::span<const double> s_vec, const std::string& group,
                                   const CompositeWeights& weights) const {
    const auto transformed = apply_vector(s_vec, group);
    if (weights.w.size() != transformed.size())
        throw data_error("composite weights length does not match K");
    double total = 0.0;
    for (std::size_t j = 0; j < transformed.size(); ++j) total += weights.w[j] * transformed[j];
    return total;
}

ClusteredDataset Calibrator::transform(const ClusteredDataset& dataset, std::size_t k) const {
    if (k >= dataset.k()) throw data_error("objective index out of range");
    std::vector<MemberDraft> drafts;
    drafts.reserve(dataset.member_count());
    for (const auto& m : dataset.members()) {
        const std::string& group = dataset.group_label(m.group);
        MemberDraft draft{m.member_id, group, m.instances};
        for (auto& obs : draft.instances) {
            if (family_ == CalibratorFamily::multi_objective) {
                obs.scores = apply_vector(obs.scores, group);
            } else {
                obs.scores[k] = apply(obs.scores[k], group);
            }
        }
        drafts.push_back(std::move(draft));
    }
    return ClusteredDataset::build(std::move(drafts), dataset.k(), dataset.bounded());
}

nlohmann::json Calibrator::to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["family"] = to_string(family_);
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [group, t] : transforms_) {
        nlohmann::json g;
        switch (family_) {
        case CalibratorFamily::binning:
            g["edges"] = t.binning->bins.edges;
            g["values"] = t.binning->values;
            g["filled_from_neighbor"] = t.binning->filled_from_neighbor;
            break;
        case CalibratorFamily::linear_interp:
            g["knots"] = t.linear_interp->knots;
            g["values"] = t.linear_interp->values;
            break;
        case CalibratorFamily::platt:
            g["a"] = t.platt->a;
            g["b"] = t.platt->b;
            g["iterations"] = t.platt->iterations;
            g["separation_warning"] = t.platt->separation_warning;
            break;
        case CalibratorFamily::isotonic:
            g["knots"] = t.isotonic->knots;
            g["values"] = t.isotonic->values;
            break;
        case CalibratorFamily::multi_objective: {
            g["k"] = t.multi_objective->k_dims;
            if (t.multi_objective->fixed_bandwidth)
                g["fixed_bandwidth"] = *t.multi_objective->fixed_bandwidth;
            nlohmann::json members = nlohmann::json::array();
            for (const auto& member : t.multi_objective->sample)
                members.push_back({{"scores", member.scores}, {"outcomes", member.outcomes}});
            g["sample"] = std::move(members);
            break;
        }
        }
        groups[group] = std::move(g);
    }
    j["groups"] = std::move(groups);
    return j;
}

Calibrator Calibrator::from_json(const nlohmann::json& j) {
    if (!j.contains("version")) throw data_error("calibrator document missing 'version'");
    if (j.at("version").get<int>() != 1)
        throw data_error("unsupported calibrator version " + j.at("version").dump());
    Calibrator cal;
    cal.family_ = calibrator_family_from_string(j.at("family").get<std::string>());
    for (const auto& [group, g] : j.at("groups").items()) {
        detail::GroupTransform t;
        switch (cal.family_) {
        case CalibratorFamily::binning: {
            detail::BinningParams p;
            p.bins.edges = g.at("edges").get<std::vector<double>>();
            p.values = g.at("values").get<std::vector<double>>();
            p.filled_from_neighbor = g.at("filled_from_neighbor").get<std::vector<bool>>();
            t.binning = std::move(p);
            break;
        }
        case CalibratorFamily::linear_interp: {
            detail::LinearInterpParams p;
            p.knots = g.at("knots").get<std::vector<double>>();
            p.values = g.at("values").get<std::vector<double>>();
            t.linear_interp = std::move(p);
            break;
        }
        case CalibratorFamily::platt: {
            detail::PlattParams p;
            p.a = g.at("a").get<double>();
            p.b = g.at("b").get<double>();
            t.platt = p;
            break;
        }
        case CalibratorFamily::isotonic: {
            detail::IsotonicParams p;
            p.knots = g.at("knots").get<std::vector<double>>();
            p.values = g.at("values").get<std::vector<double>>();
            t.isotonic = std::move(p);
            break;
        }
        case CalibratorFamily::multi_objective: {
            detail::MultiObjectiveParams p;
            p.k_dims = g.at("k").get<std::size_t>();
            if (g.contains("fixed_bandwidth"))
                p.fixed_bandwidth = g.at("fixed_bandwidth").get<double>();
            for (const auto& member : g.at("sample")) {
                detail::MultiObjectiveMember m;
                m.scores = member.at("scores").get<std::vector<std::vector<double>>>();
                m.outcomes = member.at("outcomes").get<std::vector<std::vector<double>>>();
                p.sample.push_back(std::move(m));
            }
            t.multi_objective = std::move(p);
            break;
        }
        }
        cal.transforms_.emplace(group, std::move(t));
    }
    return cal;
}

} // namespace parity

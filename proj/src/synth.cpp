#include "parity/synth.hpp"

#include "parity/errors.hpp"
#include "parity/stats.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace parity {

namespace {

constexpr std::size_t kTruthDraws = 100000;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double logit(double p) {
    const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return std::log(q / (1.0 - q));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

//! Outcome probability of a member with base curve value p0 and random
//! effect u; clamped to [0.001, 0.999] after the effect.
double effective_probability(double p0, double u, double tau) {
    if (tau == 0.0) return clamp01(p0);
    return std::clamp(logistic(logit(p0) + u), 0.001, 0.999);
}

const TrueCurve& select_curve(const SynthGroup& group, int n_m, bool random_type) {
    switch (group.coupling.kind) {
    case Coupling::Kind::none:
        return group.curve;
    case Coupling::Kind::activity:
        return static_cast<std::size_t>(n_m) > group.coupling.activity_above
                   ? group.coupling.alt
                   : group.curve;
    case Coupling::Kind::random_fraction:
        return random_type ? group.coupling.alt : group.curve;
    }
    return group.curve;
}

nlohmann::json curve_to_json(const TrueCurve& curve) {
    switch (curve.kind) {
    case TrueCurve::Kind::identity: return {{"kind", "identity"}};
    case TrueCurve::Kind::shift: return {{"kind", "shift"}, {"shift", curve.shift}};
    case TrueCurve::Kind::logistic:
        return {{"kind", "logistic"}, {"a", curve.a}, {"b", curve.b}};
    }
    return {};
}

} // namespace

double TrueCurve::operator()(double s) const {
    switch (kind) {
    case Kind::identity: return s;
    case Kind::shift: return clamp01(s + shift);
    case Kind::logistic: return logistic(a * s + b);
    }
    return s;
}

TrueCurve TrueCurve::shifted(double delta) {
    TrueCurve c;
    c.kind = Kind::shift;
    c.shift = delta;
    return c;
}

TrueCurve TrueCurve::logistic_curve(double a, double b) {
    TrueCurve c;
    c.kind = Kind::logistic;
    c.a = a;
    c.b = b;
    return c;
}

GroundTruth::GroundTruth(SynthConfig config) : config_(std::move(config)) {
    draws_.resize(config_.groups.size());
    for (std::size_t g = 0; g < config_.groups.size(); ++g) {
        auto rng = stats::make_rng(config_.seed, 0xabcd0000u + g);
        std::poisson_distribution<int> extra(config_.lambda);
        std::normal_distribution<double> effect(0.0, config_.tau);
        auto& d = draws_[g];
        d.n.resize(kTruthDraws);
        d.u.resize(kTruthDraws);
        for (std::size_t i = 0; i < kTruthDraws; ++i) {
            d.n[i] = 1 + (config_.lambda > 0.0 ? extra(rng) : 0);
            d.u[i] = config_.tau > 0.0 ? effect(rng) : 0.0;
        }
    }
}

double GroundTruth::eval(const std::string& group, double s, Mode mode) const {
    std::size_t g = config_.groups.size();
    for (std::size_t i = 0; i < config_.groups.size(); ++i)
        if (config_.groups[i].name == group) g = i;
    if (g == config_.groups.size()) throw stat_error("unknown group '" + group + "'");
    const auto& spec = config_.groups[g];

    // Closed form when nothing varies across members.
    if (config_.tau == 0.0 && spec.coupling.kind == Coupling::Kind::none)
        return clamp01(spec.curve(s));

    const auto key = std::make_tuple(g, s, mode == Mode::user_level ? 0 : 1);
    {
        std::lock_guard<std::mutex> lock(cache_->mutex);
        const auto it = cache_->memo.find(key);
        if (it != cache_->memo.end()) return it->second;
    }

    // Member-marginal expectation. The aggregate estimand weights members by
    // instance count; random_fraction types are independent of n, so their
    // frequency is used directly.
    const auto& d = draws_[g];
    double numer = 0.0, denom = 0.0;
    for (std::size_t i = 0; i < kTruthDraws; ++i) {
        const double weight =
            mode == Mode::user_level ? 1.0 : static_cast<double>(d.n[i]);
        double p;
        if (spec.coupling.kind == Coupling::Kind::random_fraction) {
            const double p_base =
                effective_probability(spec.curve(s), d.u[i], config_.tau);
            const double p_alt =
                effective_probability(spec.coupling.alt(s), d.u[i], config_.tau);
            p = (1.0 - spec.coupling.fraction) * p_base + spec.coupling.fraction * p_alt;
        } else {
            const TrueCurve& curve = select_curve(spec, d.n[i], false);
            p = effective_probability(curve(s), d.u[i], config_.tau);
        }
        numer += weight * p;
        denom += weight;
    }
    const double value = numer / denom;
    std::lock_guard<std::mutex> lock(cache_->mutex);
    cache_->memo.emplace(key, value);
    return value;
}

std::pair<ClusteredDataset, GroundTruth> generate(const SynthConfig& config) {
    if (config.groups.empty()) throw data_error("synth config needs at least one group");
    if (config.lambda < 0.0) throw data_error("lambda must be non-negative");
    if (config.tau < 0.0) throw data_error("tau must be non-negative");

    std::vector<MemberDraft> drafts;
    std::size_t member_serial = 0;
    for (std::size_t g = 0; g < config.groups.size(); ++g) {
        const auto& spec = config.groups[g];
        auto rng = stats::make_rng(config.seed, 0x5eed0000u + g);
        std::poisson_distribution<int> extra(config.lambda);
        std::normal_distribution<double> effect(0.0, config.tau);
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        for (std::size_t m = 0; m < spec.members; ++m) {
            const int n_m = 1 + (config.lambda > 0.0 ? extra(rng) : 0);
            const double u = config.tau > 0.0 ? effect(rng) : 0.0;
            const bool random_type =
                spec.coupling.kind == Coupling::Kind::random_fraction &&
                unit(rng) < spec.coupling.fraction;
            const TrueCurve& curve = select_curve(spec, n_m, random_type);

            MemberDraft draft;
            draft.member_id = "m" + std::to_string(member_serial++);
            draft.group = spec.name;
            draft.instances.reserve(static_cast<std::size_t>(n_m));
            for (int i = 0; i < n_m; ++i) {
                const double s = stats::beta_draw(rng, spec.beta_a, spec.beta_b);
                const double p = effective_probability(curve(s), u, config.tau);
                const double y = unit(rng) < p ? 1.0 : 0.0;
                draft.instances.push_back(Observation{{s}, {y}});
            }
            drafts.push_back(std::move(draft));
        }
    }
    auto dataset = ClusteredDataset::build(std::move(drafts), 1, true);
    return {std::move(dataset), GroundTruth(config)};
}

double poisson_tail(double lambda, std::size_t threshold) {
    // P(X >= threshold) for X ~ Poisson(lambda).
    double pmf = std::exp(-lambda);
    double below = 0.0;
    for (std::size_t x = 0; x < threshold; ++x) {
        below += pmf;
        pmf *= lambda / static_cast<double>(x + 1);
    }
    return std::max(0.0, 1.0 - below);
}

SynthConfig divergence_config(std::size_t members_per_group, std::uint64_t seed,
                              double alt_shift, double lambda) {
    constexpr std::size_t activity_above = 5;
    const TrueCurve alt = TrueCurve::shifted(alt_shift);

    SynthGroup coupled;
    coupled.name = "g1";
    coupled.members = members_per_group;
    coupled.coupling.kind = Coupling::Kind::activity;
    coupled.coupling.activity_above = activity_above;
    coupled.coupling.alt = alt;

    SynthGroup matched;
    matched.name = "g2";
    matched.members = members_per_group;
    matched.coupling.kind = Coupling::Kind::random_fraction;
    // n_m > activity_above means Poisson(lambda) >= activity_above.
    matched.coupling.fraction = poisson_tail(lambda, activity_above);
    matched.coupling.alt = alt;

    SynthConfig config;
    config.groups = {coupled, matched};
    config.lambda = lambda;
    config.tau = 0.0;
    config.seed = seed;
    return config;
}

ClusteredDataset generate_cross_objective(const CrossObjectiveConfig& config) {
    if (config.group_names.size() != config.shifts.size())
        throw data_error("cross-objective config: one shift pair per group required");
    for (const auto& s : config.shifts)
        if (s.size() != 2) throw data_error("cross-objective config is bivariate (K = 2)");
    const double rho = config.score_correlation;
    if (rho < 0.0 || rho >= 1.0)
        throw data_error("score_correlation must lie in [0, 1)");

    std::vector<MemberDraft> drafts;
    std::size_t member_serial = 0;
    for (std::size_t g = 0; g < config.group_names.size(); ++g) {
        auto rng = stats::make_rng(config.seed, 0xc0550000u + g);
        std::poisson_distribution<int> extra(config.lambda);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t m = 0; m < config.members_per_group; ++m) {
            const int n_m = 1 + (config.lambda > 0.0 ? extra(rng) : 0);
            MemberDraft draft;
            draft.member_id = "m" + std::to_string(member_serial++);
            draft.group = config.group_names[g];
            for (int i = 0; i < n_m; ++i) {
                double s1, s2;
                if (rho == 0.0) {
                    s1 = unit(rng);
                    s2 = unit(rng);
                } else {
                    const double z1 = gauss(rng);
                    const double z2 = rho * z1 + std::sqrt(1.0 - rho * rho) * gauss(rng);
                    s1 = stats::normal_cdf(z1);
                    s2 = stats::normal_cdf(z2);
                }
                const double p1 =
                    clamp01((1.0 - config.cross) * s1 + config.cross * s2 + config.shifts[g][0]);
                const double p2 =
                    clamp01((1.0 - config.cross) * s2 + config.cross * s1 + config.shifts[g][1]);
                const double y1 = unit(rng) < p1 ? 1.0 : 0.0;
                const double y2 = unit(rng) < p2 ? 1.0 : 0.0;
                draft.instances.push_back(Observation{{s1, s2}, {y1, y2}});
            }
            drafts.push_back(std::move(draft));
        }
    }
    return ClusteredDataset::build(std::move(drafts), 2, true);
}

nlohmann::json synth_config_to_json(const SynthConfig& config) {
    nlohmann::json j;
    j["lambda"] = config.lambda;
    j["tau"] = config.tau;
    j["seed"] = config.seed;
    j["groups"] = nlohmann::json::array();
    for (const auto& g : config.groups) {
        nlohmann::json group;
        group["name"] = g.name;
        group["members"] = g.members;
        group["beta"] = {g.beta_a, g.beta_b};
        group["curve"] = curve_to_json(g.curve);
        switch (g.coupling.kind) {
        case Coupling::Kind::none: break;
        case Coupling::Kind::activity:
            group["coupling"] = {{"kind", "activity"},
                                 {"activity_above", g.coupling.activity_above},
                                 {"alt", curve_to_json(g.coupling.alt)}};
            break;
        case Coupling::Kind::random_fraction:
            group["coupling"] = {{"kind", "random_fraction"},
                                 {"fraction", g.coupling.fraction},
                                 {"alt", curve_to_json(g.coupling.alt)}};
            break;
        }
        j["groups"].push_back(std::move(group));
    }
    return j;
}

} // namespace parity

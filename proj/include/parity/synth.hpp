#pragma once

#include "parity/data_model.hpp"
#include "parity/np_estimator.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace parity {

//! Shape of a true calibration curve s -> E(Y | S = s).
struct TrueCurve {
    enum class Kind { identity, shift, logistic };
    Kind kind = Kind::identity;
    double shift = 0.0; // shift: clamp01(s + shift)
    double a = 1.0;     // logistic: 1 / (1 + exp(-(a s + b)))
    double b = 0.0;

    double operator()(double s) const;

    static TrueCurve identity() { return {}; }
    static TrueCurve shifted(double delta);
    static TrueCurve logistic_curve(double a, double b);
};

//! Optional dependence of the calibration curve on the member: either on
//! the realized activity level (instance count), or on an independent
//! random member type with the given frequency. The second form matches the
//! member-type mix of the first without tying the type to activity, which
//! is what separates aggregate from user-level behavior.
struct Coupling {
    enum class Kind { none, activity, random_fraction };
    Kind kind = Kind::none;
    std::size_t activity_above = 5; // activity: alt curve when n_m > this
    double fraction = 0.0;          // random_fraction: P(member uses alt curve)
    TrueCurve alt;
};

struct SynthGroup {
    std::string name;
    std::size_t members = 1000;
    double beta_a = 1.0; // score distribution Beta(a, b); (1, 1) is uniform
    double beta_b = 1.0;
    TrueCurve curve;
    Coupling coupling;
};

struct SynthConfig {
    std::vector<SynthGroup> groups;
    double lambda = 3.0; // n_m ~ 1 + Poisson(lambda)
    double tau = 0.0;    // member random effect sd on the logit scale
    std::uint64_t seed = 0;
};

//! Evaluates the true conditional expected outcome of the generating
//! process, marginally over member effects and activity. Monte-Carlo
//! integration (1e5 draws) when the curve is not available in closed form.
class GroundTruth {
public:
    GroundTruth() = default;
    GroundTruth(SynthConfig config);

    double eval(const std::string& group, double s, Mode mode = Mode::user_level) const;

private:
    struct GroupDraws {
        std::vector<int> n;
        std::vector<double> u;
    };
    struct Cache {
        std::mutex mutex;
        std::map<std::tuple<std::size_t, double, int>, double> memo;
    };
    SynthConfig config_;
    std::vector<GroupDraws> draws_;
    std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

std::pair<ClusteredDataset, GroundTruth> generate(const SynthConfig& config);

//! P(Poisson(lambda) >= threshold); the member-type frequency matched by
//! the random_fraction arm of the divergence setup.
double poisson_tail(double lambda, std::size_t threshold);

//! Two groups with identical user-level calibration curves but different
//! aggregate curves: one group couples the alternative curve to activity,
//! the other assigns it to an activity-independent member type with the
//! same frequency.
SynthConfig divergence_config(std::size_t members_per_group, std::uint64_t seed,
                              double alt_shift = 0.2, double lambda = 3.0);

//! Bivariate-score generator: K = 2 with cross-informative truths
//! p_k = clamp01((1 - cross) s_k + cross s_other + shift[g][k]). Scores have
//! uniform marginals; score_correlation couples them through a Gaussian
//! copula (objective scores built from shared features are correlated).
struct CrossObjectiveConfig {
    std::vector<std::string> group_names{"g1", "g2"};
    std::vector<std::vector<double>> shifts{{0.0, 0.0}, {0.0, 0.0}}; // [group][objective]
    std::size_t members_per_group = 1000;
    double lambda = 3.0;
    double cross = 0.4;
    double score_correlation = 0.0;
    std::uint64_t seed = 0;
};

ClusteredDataset generate_cross_objective(const CrossObjectiveConfig& config);

nlohmann::json synth_config_to_json(const SynthConfig& config);

} // namespace parity

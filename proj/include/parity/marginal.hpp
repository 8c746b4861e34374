#pragma once

#include "parity/data_model.hpp"
#include "parity/np_estimator.hpp"

#include <json.hpp>

#include <cstddef>
#include <string>
#include <vector>

namespace parity {

//! Empirical distribution function of a score sample.
class EmpiricalCdf {
public:
    EmpiricalCdf() = default;
    explicit EmpiricalCdf(std::vector<double> scores);

    double operator()(double t) const;
    double min() const { return sorted_.front(); }
    double max() const { return sorted_.back(); }
    std::size_t size() const { return sorted_.size(); }

private:
    std::vector<double> sorted_;
};

//! Predicted average outcome of one group as a function of a candidate
//! threshold: a monotone kernel-regression curve above t_star, extended
//! below t_star by a least-squares line over [t_star, t_star + window].
//! The line's fitted value at t_star anchors the curve there, keeping the
//! predictor continuous. Predictions are clamped to [0, 1].
struct OutcomePredictor {
    std::string group;
    double t_star = 0.0;
    std::vector<double> knots;  // t_star and above-threshold percentile knots
    std::vector<double> values; // isotonic-smoothed estimates at the knots
    double below_slope = 0.0;   // slope of the below-threshold extension
    std::size_t window_count = 0;

    double operator()(double t) const;

    //! Left inverse on [lo, hi]: smallest t with prediction >= y (clamped to
    //! the range ends when y is outside the attained values).
    double inverse(double y, double lo, double hi) const;

    //! Monotone on [lo, hi]; flat stretches (clamping, pooled knots) are
    //! fine, decreases are not.
    bool non_decreasing_on(double lo, double hi) const;
};

OutcomePredictor fit_outcome_predictor(const ClusteredDataset& dataset, const std::string& group,
                                       double t_star, double window, std::size_t k = 0,
                                       const KernelSpec& kernel = {});

struct MarginalSolution {
    double t_g1 = 0.0, t_g2 = 0.0;
    double outcome_g1 = 0.0, outcome_g2 = 0.0;
    double parity_residual = 0.0;
    double budget_residual = 0.0;
    int iterations = 0;
    bool extrapolated = false; // some solved threshold lies below t_star
};

//! Group-specific thresholds equalizing the predicted marginal outcomes
//! while keeping the overall positive-classification rate at its status-quo
//! value. Bisection over t_g1 with t_g2 = pred_g2^{-1}(pred_g1(t_g1));
//! among multiple roots the pair closest to (t_star, t_star) in max-norm
//! wins. Both residual tolerances are 1e-4.
MarginalSolution solve_fair_thresholds(const OutcomePredictor& pred_g1,
                                       const OutcomePredictor& pred_g2,
                                       const EmpiricalCdf& cdf_g1, const EmpiricalCdf& cdf_g2,
                                       double p_g1, double p_g2, double t_star);

nlohmann::json marginal_solution_to_json(const MarginalSolution& solution,
                                         const OutcomePredictor& pred_g1,
                                         const OutcomePredictor& pred_g2);

} // namespace parity

#pragma once

#include "parity/data_model.hpp"
#include "parity/kernel.hpp"

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace parity {

//! Whether the conditional expectation weights each member equally
//! (user_level, per-member averaging) or each instance equally (aggregate).
enum class Mode { user_level, aggregate };

Mode mode_from_string(const std::string& name);
std::string to_string(Mode mode);

//! Kernel regression value at one score with its cluster-robust standard
//! error. m_effective counts members carrying nonzero kernel weight; when it
//! drops below 10 the standard error is inflated by sqrt(10 / m_effective)
//! and low_mass is set.
struct PointEstimate {
    double s = 0.0;
    double value = 0.0;
    double std_error = 0.0;
    double numerator_mass = 0.0;
    double denominator_mass = 0.0;
    std::size_t m_effective = 0;
    bool low_mass = false;
};

//! Per-member kernel sums. user_level mode divides both sums by the
//! member's instance count; aggregate mode keeps raw sums.
struct ClusterSummary {
    double a = 0.0; // outcome-weighted kernel sum
    double b = 0.0; // kernel sum
};

//! Per-member summaries at score `s` for one group. Instances with score
//! below `min_score` are excluded (threshold-truncated estimation); the
//! 1/n_m factor always uses the member's full instance count.
std::vector<ClusterSummary> cluster_summaries(const ClusteredDataset& dataset, int group,
                                              double s, double h, std::size_t k, Mode mode,
                                              const KernelSpec& kernel = {},
                                              double min_score = -std::numeric_limits<double>::infinity());

//! Delta-method variance of the ratio of summary means over independent
//! clusters. `group_summaries` holds the summaries of the group's members;
//! the remaining `total_members - size` members enter the moments as zeros.
//! Population-convention moments; result clamped at 0.
double nw_variance(std::span<const ClusterSummary> group_summaries, std::size_t total_members);

PointEstimate nw_user_level(const ClusteredDataset& dataset, const std::string& group, double s,
                            double h, std::size_t k = 0, const KernelSpec& kernel = {});

PointEstimate nw_aggregate(const ClusteredDataset& dataset, const std::string& group, double s,
                           double h, std::size_t k = 0, const KernelSpec& kernel = {});

//! User-level estimator using only instances with score >= t_star, for
//! marginal-outcome estimation at the classification threshold.
PointEstimate nw_truncated(const ClusteredDataset& dataset, const std::string& group, double s,
                           double h, double t_star, std::size_t k = 0,
                           const KernelSpec& kernel = {});

//! Product-kernel Nadaraya-Watson over K conditioning scores with
//! per-member averaging. Guards K <= 4.
PointEstimate nw_multivariate(const ClusteredDataset& dataset, const std::string& group,
                              std::span<const double> s_vec, std::span<const double> h_vec,
                              std::size_t k, const KernelSpec& kernel = {});

//! Bandwidth policy for curve evaluation: a fixed width, or the
//! rule-of-thumb evaluated per point against the mode's sample count.
struct BandwidthRule {
    std::optional<double> fixed;
    double at(double s, std::size_t n) const;
};

std::vector<PointEstimate> estimate_curve(const ClusteredDataset& dataset,
                                          const std::string& group,
                                          std::span<const double> grid_points, Mode mode,
                                          std::size_t k = 0, const BandwidthRule& bandwidth = {},
                                          const KernelSpec& kernel = {});

} // namespace parity

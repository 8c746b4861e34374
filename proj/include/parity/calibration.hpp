#pragma once

#include "parity/data_model.hpp"
#include "parity/np_estimator.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace parity {

enum class CalibratorFamily { binning, linear_interp, platt, isotonic, multi_objective };

CalibratorFamily calibrator_family_from_string(const std::string& name);
std::string to_string(CalibratorFamily family);

//! Weights of the composite score sum over objectives.
struct CompositeWeights {
    std::vector<double> w;
};

//! Score bins B_i = [l_i, u_i); the last bin is closed on the right.
struct Binning {
    std::vector<double> edges;

    //! Index of the bin containing s; edges must cover s.
    std::size_t bin_of(double s) const;
    std::size_t bin_count() const { return edges.empty() ? 0 : edges.size() - 1; }
};

//! Equal-frequency bins over the given scores (default policy: 10 bins).
Binning equal_frequency_bins(std::vector<double> scores, std::size_t bins);

struct FitOptions {
    std::size_t bins = 10;
    //! Weight each member equally instead of each instance when averaging
    //! outcomes (binning means and Platt likelihood terms).
    bool member_weighted = false;
    KernelSpec kernel;
    BandwidthRule bandwidth;
};

namespace detail {

struct BinningParams {
    Binning bins;
    std::vector<double> values;
    std::vector<bool> filled_from_neighbor;
};

struct LinearInterpParams {
    std::vector<double> knots;  // bin edges
    std::vector<double> values; // kernel-regression estimates at the edges
};

struct PlattParams {
    double a = 0.0;
    double b = 0.0;
    int iterations = 0;
    bool separation_warning = false;
};

struct IsotonicParams {
    std::vector<double> knots;  // distinct scores, ascending
    std::vector<double> values; // fitted non-decreasing level per knot
};

struct MultiObjectiveMember {
    std::vector<std::vector<double>> scores;   // per instance, K scores
    std::vector<std::vector<double>> outcomes; // per instance, K outcomes
};

struct MultiObjectiveParams {
    std::vector<MultiObjectiveMember> sample;
    std::size_t k_dims = 0;
    std::optional<double> fixed_bandwidth;
};

struct GroupTransform {
    std::optional<BinningParams> binning;
    std::optional<LinearInterpParams> linear_interp;
    std::optional<PlattParams> platt;
    std::optional<IsotonicParams> isotonic;
    std::optional<MultiObjectiveParams> multi_objective;
};

} // namespace detail

class Calibrator;

namespace detail {
Calibrator make_calibrator(CalibratorFamily family, const std::string& group, GroupTransform t);
} // namespace detail

//! A fitted per-group score transformation t(s, g). Immutable after fit;
//! safe for concurrent apply (the multi-objective memo cache is locked).
class Calibrator {
public:
    CalibratorFamily family() const { return family_; }
    std::vector<std::string> groups() const;
    bool has_group(const std::string& group) const;

    //! Transform one score for the given group (univariate families).
    double apply(double s, const std::string& group) const;

    //! Multi-objective transform: per-objective conditional expectations
    //! given the full score vector.
    std::vector<double> apply_vector(std::span<const double> s_vec,
                                     const std::string& group) const;

    //! Weighted sum of the transformed per-objective scores.
    double apply_composite(std::span<const double> s_vec, const std::string& group,
                           const CompositeWeights& weights) const;

    //! Replace objective-k scores in every instance with transformed values.
    ClusteredDataset transform(const ClusteredDataset& dataset, std::size_t k = 0) const;

    nlohmann::json to_json() const;
    static Calibrator from_json(const nlohmann::json& j);

    //! Merge per-group calibrators of the same family into one.
    static Calibrator merge(std::vector<Calibrator> parts);

private:
    friend Calibrator detail::make_calibrator(CalibratorFamily, const std::string&,
                                              detail::GroupTransform);

    const detail::GroupTransform& transform_of(const std::string& group) const;

    CalibratorFamily family_ = CalibratorFamily::binning;
    std::map<std::string, detail::GroupTransform> transforms_;
    mutable std::mutex memo_mutex_;
    mutable std::map<std::pair<std::string, std::vector<double>>, std::vector<double>> memo_;

public:
    Calibrator() = default;
    Calibrator(const Calibrator& other)
        : family_(other.family_), transforms_(other.transforms_) {}
    Calibrator(Calibrator&& other) noexcept
        : family_(other.family_), transforms_(std::move(other.transforms_)) {}
    Calibrator& operator=(Calibrator other) {
        family_ = other.family_;
        transforms_ = std::move(other.transforms_);
        return *this;
    }
};

//! Bin means of the group's outcomes; empty bins borrow the nearest
//! non-empty bin's value.
Calibrator fit_binning(const ClusteredDataset& train, const std::string& group,
                       const Binning& bins, std::size_t k = 0, const FitOptions& options = {});

//! Linear interpolation between kernel-regression estimates at the bin
//! edges; clamped to the boundary knots outside and to [0, 1] overall.
Calibrator fit_linear_interp(const ClusteredDataset& train, const std::string& group,
                             const Binning& bins, std::size_t k = 0,
                             const FitOptions& options = {});

//! Logistic transformation p(s) = 1 / (1 + exp(-(a s + b))) fit by damped
//! Newton maximum likelihood.
Calibrator fit_platt(const ClusteredDataset& train, const std::string& group, std::size_t k = 0,
                     const FitOptions& options = {});

//! Monotone least-squares fit by pool-adjacent-violators; equal scores are
//! pre-pooled into weighted points.
Calibrator fit_isotonic(const ClusteredDataset& train, const std::string& group,
                        std::size_t k = 0, const FitOptions& options = {});

//! Per-objective conditional expectation given all K scores, estimated by
//! product-kernel regression on the stored training sample.
Calibrator fit_multi_objective(const ClusteredDataset& train, const std::string& group,
                               const FitOptions& options = {});

//! Fit the chosen family independently for every group level.
Calibrator fit_per_group(const ClusteredDataset& train, CalibratorFamily family,
                         std::size_t k = 0, const FitOptions& options = {});

//! Weighted isotonic regression on (x, y, w) triples sorted by x; exposed
//! for reuse by the threshold solver.
std::vector<double> pava_non_decreasing(std::span<const double> y, std::span<const double> w);

} // namespace parity

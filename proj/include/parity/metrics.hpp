#pragma once

#include "parity/data_model.hpp"
#include "parity/np_estimator.hpp"
#include "parity/parity_testing.hpp"

#include <optional>
#include <string>

namespace parity {

struct MetricOptions {
    KernelSpec kernel;
    BandwidthRule bandwidth;
};

struct MetricValue {
    double value = 0.0;
    std::size_t grid_points_used = 0;
    std::size_t grid_points_dropped = 0;
};

//! Mean absolute gap between each group's estimated outcome curve and the
//! identity, averaged over grid points and summed over groups. Grid points
//! where any group is unestimable are dropped for all groups.
MetricValue npce(const ClusteredDataset& dataset, const ScoreGrid& grid,
                 Mode mode = Mode::user_level, std::size_t k = 0,
                 const MetricOptions& options = {});

//! Mean absolute gap between group outcome curves, summed over ordered
//! group pairs (each unordered pair counts twice).
MetricValue parity_error(const ClusteredDataset& dataset, const ScoreGrid& grid,
                         Mode mode = Mode::user_level, std::size_t k = 0,
                         const MetricOptions& options = {});

//! Mann-Whitney AUC with exact tie handling: P(S+ > S-) + P(S+ = S-)/2.
double auc(const ClusteredDataset& dataset, std::optional<std::string> group = std::nullopt,
           std::size_t k = 0);

//! Expected calibration error over equal-width bins on [0, 1].
double ece(const ClusteredDataset& dataset, std::size_t bins = 10, std::size_t k = 0);

} // namespace parity
